"""Relative-to-metric depth calibration and bilinear sub-pixel lookup."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

from .perception import RelativeDepthMap


@dataclass(frozen=True)
class CalibrationAnchor:
    d_ref: float  # meters
    d_rel_ref: float  # relative units

    def __post_init__(self) -> None:
        if not (self.d_ref > 0 and self.d_rel_ref > 0):
            raise ValueError("calibration anchor values must be positive")

    @classmethod
    def from_map(cls, depth_map: RelativeDepthMap) -> "CalibrationAnchor":
        return cls(d_ref=depth_map.ref_true_depth, d_rel_ref=depth_map.ref_value)


@dataclass(frozen=True)
class DepthQuery:
    x_sub: float  # column
    y_sub: float  # row


def calibrate(d_rel: float, anchor: CalibrationAnchor) -> float:
    """Metric depth from a relative value: ``d_rel * d_ref / d_rel_ref``."""
    if not d_rel > 0:
        raise ValueError(f"relative depth must be positive, got {d_rel!r}")
    return d_rel * anchor.d_ref / anchor.d_rel_ref


def bilinear_depth(depth_map: RelativeDepthMap, q: DepthQuery) -> float:
    """Sub-pixel depth at ``(q.x_sub, q.y_sub)``.

    ``(x1, y1)`` is the floor of the query; the neighbours D11, D21, D12, D22
    sit at (x1, y1), (x1+1, y1), (x1, y1+1), (x1+1, y1+1). A query lying exactly
    on the last row or column only needs the neighbours with nonzero weight.
    """
    w, h = depth_map.width, depth_map.height
    if not (math.isfinite(q.x_sub) and math.isfinite(q.y_sub)):
        raise ValueError("non-finite depth query")
    if not (0.0 <= q.x_sub <= w - 1 and 0.0 <= q.y_sub <= h - 1):
        raise ValueError(f"depth query ({q.x_sub}, {q.y_sub}) outside {w}x{h} map")
    x1, y1 = int(math.floor(q.x_sub)), int(math.floor(q.y_sub))
    dx, dy = q.x_sub - x1, q.y_sub - y1
    x2, y2 = min(x1 + 1, w - 1), min(y1 + 1, h - 1)
    v = depth_map.values
    d11 = float(v[y1, x1])
    d21 = float(v[y1, x2])
    d12 = float(v[y2, x1])
    d22 = float(v[y2, x2])
    return (1 - dx) * (1 - dy) * d11 + dx * (1 - dy) * d21 + (1 - dx) * dy * d12 + dx * dy * d22


def image_to_map(x_c: float, y_c: float, image_size: Tuple[int, int], map_size: Tuple[int, int]) -> DepthQuery:
    """Scale image pixel coordinates onto the depth grid (pixel-centre aligned).

    The half-pixel border outside the outermost grid centres replicates the
    edge value.
    """
    iw, ih = image_size
    mw, mh = map_size
    col = (x_c + 0.5) * mw / iw - 0.5
    row = (y_c + 0.5) * mh / ih - 0.5
    return DepthQuery(min(max(col, 0.0), mw - 1.0), min(max(row, 0.0), mh - 1.0))


def depth_at(depth_map: RelativeDepthMap, anchor: CalibrationAnchor, x_c: float, y_c: float) -> Optional[float]:
    """Metric depth under an image-space centroid, or None when it is off-image."""
    iw, ih = depth_map.image_size
    if not (math.isfinite(x_c) and math.isfinite(y_c)):
        return None
    if not (0.0 <= x_c < iw and 0.0 <= y_c < ih):
        return None
    q = image_to_map(x_c, y_c, (iw, ih), (depth_map.width, depth_map.height))
    return calibrate(bilinear_depth(depth_map, q), anchor)


def depth_at_track(depth_map: RelativeDepthMap, anchor: CalibrationAnchor, track) -> Optional[float]:
    x_c, y_c = track.centroid
    return depth_at(depth_map, anchor, x_c, y_c)
