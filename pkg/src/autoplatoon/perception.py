"""Synthetic camera: detections, appearance embeddings and relative depth maps.

Stands in for the neural detector, feature extractor and monocular depth
network. Outputs follow the same record contracts those models would emit,
computed from ground truth plus seeded noise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .world import AgentState, Role, WorldSnapshot

NEAR_PLANE = 0.05


class ClassLabel(str, enum.Enum):
    LEADER_MARKER = "LeaderMarker"
    OBSTACLE = "Obstacle"


@dataclass(frozen=True)
class CameraModel:
    width: int = 640
    height: int = 480
    fov: float = math.radians(60.0)
    mount_height: float = 0.10

    def __post_init__(self) -> None:
        if not 0.0 < self.fov < math.pi:
            raise ValueError("horizontal FOV must lie in (0, pi)")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    @property
    def focal_px(self) -> float:
        return (self.width / 2.0) / math.tan(self.fov / 2.0)


@dataclass(frozen=True)
class Detection:
    x_c: float
    y_c: float
    s: float
    a: float
    class_label: ClassLabel
    confidence: float
    embedding: Tuple[float, ...]

    @property
    def z(self) -> np.ndarray:
        return np.array([self.x_c, self.y_c, self.s, self.a])


@dataclass(frozen=True)
class RelativeDepthMap:
    """Scale-ambiguous depth grid; ``values[row, col]``."""

    values: np.ndarray
    ref_pixel: Tuple[int, int]
    ref_true_depth: float
    image_size: Tuple[int, int] = (640, 480)

    def __post_init__(self) -> None:
        r, c = self.ref_pixel
        if not (0 <= r < self.height and 0 <= c < self.width):
            raise ValueError("ref_pixel out of bounds")
        if not np.all(self.values > 0):
            raise ValueError("relative depth values must be positive")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def ref_value(self) -> float:
        return float(self.values[self.ref_pixel])


@dataclass(frozen=True)
class Projection:
    """Where one entity lands on the observer's image plane."""

    agent: AgentState
    forward: float
    range: float
    x_c: float
    y_c: float
    half_width_px: float
    height_px: float

    @property
    def interval(self) -> Tuple[float, float]:
        return (self.x_c - self.half_width_px, self.x_c + self.half_width_px)

    @property
    def rows(self) -> Tuple[float, float]:
        return (self.y_c - self.height_px / 2.0, self.y_c + self.height_px / 2.0)


def class_of(role: Role) -> ClassLabel:
    # every robot carries the marker on its rear panel
    return ClassLabel.OBSTACLE if role is Role.OBSTACLE else ClassLabel.LEADER_MARKER


def project(observer: AgentState, target: AgentState, camera: CameraModel) -> Optional[Projection]:
    """Pinhole projection of ``target``; None when behind the near plane."""
    dx = target.pose.x - observer.pose.x
    dy = target.pose.y - observer.pose.y
    c, s = math.cos(observer.pose.theta), math.sin(observer.pose.theta)
    forward = c * dx + s * dy
    if forward <= NEAR_PLANE:
        return None
    right = s * dx - c * dy
    f = camera.focal_px
    shape = target.shape
    return Projection(
        agent=target,
        forward=forward,
        range=math.hypot(dx, dy),
        x_c=camera.width / 2.0 + f * right / forward,
        y_c=camera.height / 2.0 + f * (camera.mount_height - shape.center_height) / forward,
        half_width_px=f * shape.width / (2.0 * forward),
        height_px=f * shape.height / forward,
    )


def _in_image(p: Projection, camera: CameraModel) -> bool:
    return 0.0 <= p.x_c < camera.width and 0.0 <= p.y_c < camera.height


def _overlaps(a: Tuple[float, float], b: Tuple[float, float]) -> bool:
    return a[0] < b[1] and b[0] < a[1]


def visible_entities(snapshot: WorldSnapshot, observer_id: str, camera: CameraModel) -> List[Projection]:
    """Entities whose centroid is in frame and that no nearer entity overlaps."""
    observer = snapshot.get(observer_id)
    projected = []
    for agent in snapshot.agents:
        if agent.id == observer_id or agent.id in snapshot.hidden:
            continue
        p = project(observer, agent, camera)
        if p is not None:
            projected.append(p)
    out = []
    for p in projected:
        if not _in_image(p, camera):
            continue
        occluded = any(q.range < p.range and _overlaps(q.interval, p.interval) for q in projected if q is not p)
        if not occluded:
            out.append(p)
    return out


def noisy_embedding(true: Sequence[float], sigma: float, rng: np.random.Generator) -> Tuple[float, ...]:
    e = np.asarray(true, dtype=float)
    if sigma > 0:
        e = e + rng.normal(0.0, sigma, size=e.shape)
    n = np.linalg.norm(e)
    if n == 0.0:
        e, n = np.asarray(true, dtype=float), 1.0
    return tuple(float(v) for v in e / n)


def render_detections(
    snapshot: WorldSnapshot,
    observer_id: str,
    camera: CameraModel,
    rng: Optional[np.random.Generator] = None,
    pixel_sigma: float = 1.0,
    embedding_sigma: float = 0.05,
) -> List[Detection]:
    """One Detection per visible, unoccluded entity.

    With ``rng=None`` the render is noise free. Noise is drawn in snapshot
    order so a given (snapshot, rng state) always yields the same output.
    """
    if observer_id not in snapshot:
        raise KeyError(observer_id)
    dets = []
    for p in visible_entities(snapshot, observer_id, camera):
        w_px = 2.0 * p.half_width_px
        h_px = p.height_px
        x_c, y_c = p.x_c, p.y_c
        emb = tuple(p.agent.marker_embedding)
        if rng is not None:
            nx, ny, nw, nh = rng.normal(0.0, pixel_sigma, size=4) if pixel_sigma > 0 else (0.0,) * 4
            x_c = float(np.clip(x_c + nx, 0.0, np.nextafter(camera.width, 0)))
            y_c = float(np.clip(y_c + ny, 0.0, np.nextafter(camera.height, 0)))
            w_px = max(1.0, w_px + nw)
            h_px = max(1.0, h_px + nh)
            emb = noisy_embedding(emb, embedding_sigma, rng)
        dets.append(
            Detection(
                x_c=float(x_c),
                y_c=float(y_c),
                s=float(w_px * h_px),
                a=float(w_px / h_px),
                class_label=class_of(p.agent.role),
                confidence=1.0 / (1.0 + 0.1 * p.range),
                embedding=emb,
            )
        )
    return dets


def draw_frame_scale(rng: np.random.Generator, low: float = 0.5, high: float = 2.0) -> float:
    return float(rng.uniform(low, high))


def render_depth(
    snapshot: WorldSnapshot,
    observer_id: str,
    camera: CameraModel,
    k: float,
    size: Tuple[int, int] = (64, 48),
    background_depth: float = 5.0,
    ref_pixel: Optional[Tuple[int, int]] = None,
    ref_depth: float = 0.5,
    shift: float = 0.0,
) -> RelativeDepthMap:
    """Relative depth map equal to ``k`` times true range, plus optional ``shift``.

    Entities are painted far-to-near (z-buffer by range). ``ref_pixel``
    (default: bottom-left) shows a floor fiducial at the known ``ref_depth``.
    A nonzero ``shift`` breaks the pure-ratio calibration and exists only for
    stress tests.
    """
    if not k > 0:
        raise ValueError("frame scale k must be positive")
    width, height = size
    observer = snapshot.get(observer_id)
    true_range = np.full((height, width), float(background_depth))
    u = (np.arange(width) + 0.5) * camera.width / width
    v = (np.arange(height) + 0.5) * camera.height / height
    projections = []
    for agent in snapshot.agents:
        if agent.id == observer_id or agent.id in snapshot.hidden:
            continue
        p = project(observer, agent, camera)
        if p is not None:
            projections.append(p)
    for p in sorted(projections, key=lambda q: -q.range):
        lo, hi = p.interval
        top, bottom = p.rows
        cols = (u >= lo) & (u <= hi)
        rows = (v >= top) & (v <= bottom)
        true_range[np.ix_(rows, cols)] = p.range
    if ref_pixel is None:
        ref_pixel = (height - 1, 0)
    true_range[ref_pixel] = ref_depth
    values = k * true_range + shift
    return RelativeDepthMap(values=values, ref_pixel=tuple(ref_pixel), ref_true_depth=ref_depth,
                            image_size=(camera.width, camera.height))
