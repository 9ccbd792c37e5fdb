"""Appearance-based multi-object tracker with a constant-velocity Kalman filter.

State vector: ``[x_c, y_c, s, a, vx_c, vy_c, v_s]`` (pixels, px^2, unitless,
and their per-second rates; the aspect ratio has no rate term).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .perception import ClassLabel, Detection

logger = logging.getLogger(__name__)

DIM_X = 7
DIM_Z = 4

H = np.hstack([np.eye(DIM_Z), np.zeros((DIM_Z, DIM_X - DIM_Z))])

DEFAULT_P0 = (10.0, 10.0, 100.0, 1e-2, 1e4, 1e4, 1e4)
DEFAULT_Q = (1.0, 1.0, 1.0, 1e-6, 0.01, 0.01, 1e-4)
DEFAULT_R = (1.0, 1.0, 10.0, 1e-2)


def transition(dt: float) -> np.ndarray:
    f = np.eye(DIM_X)
    f[0, 4] = f[1, 5] = f[2, 6] = dt
    return f


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def from_measurement(cls, z: Sequence[float], p0: Sequence[float] = DEFAULT_P0) -> "KalmanState":
        mean = np.zeros(DIM_X)
        mean[:DIM_Z] = z
        return cls(mean, np.diag(np.asarray(p0, dtype=float)))


@dataclass(frozen=True)
class TrackerConfig:
    match_threshold: float = 0.65
    max_age: int = 30
    dt: float = 0.05
    p0: Tuple[float, ...] = DEFAULT_P0
    q: Tuple[float, ...] = DEFAULT_Q
    r: Tuple[float, ...] = DEFAULT_R
    s_floor: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.match_threshold < 1.0:
            raise ValueError("match_threshold must lie in (0, 1)")
        if self.max_age < 1:
            raise ValueError("max_age must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def kf_predict(kf: KalmanState, dt: float, q=DEFAULT_Q, s_floor: float = 0.0) -> KalmanState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    f = transition(dt)
    q = np.diag(q) if np.ndim(q) == 1 else np.asarray(q)
    mean = f @ kf.mean
    if mean[2] < s_floor:
        mean[2] = s_floor
    return KalmanState(mean, _symmetrize(f @ kf.cov @ f.T + q))


def kf_update(kf: KalmanState, z: Sequence[float], r=DEFAULT_R, s_floor: float = 0.0) -> KalmanState:
    """Linear correction with ``H`` selecting ``(x_c, y_c, s, a)``.

    Uses the Joseph-form covariance update so the posterior stays symmetric
    positive semidefinite under rounding.
    """
    z = np.asarray(z, dtype=float)
    if z.shape != (DIM_Z,) or not np.all(np.isfinite(z)):
        raise ValueError(f"measurement must be 4 finite values, got {z!r}")
    r = np.diag(r) if np.ndim(r) == 1 else np.asarray(r)
    p = kf.cov
    innovation = z - H @ kf.mean
    s = H @ p @ H.T + r
    gain = np.linalg.solve(s, H @ p).T
    mean = kf.mean + gain @ innovation
    if mean[2] < s_floor:
        mean[2] = s_floor
    ikh = np.eye(DIM_X) - gain @ H
    cov = ikh @ p @ ikh.T + gain @ r @ gain.T
    return KalmanState(mean, _symmetrize(cov))


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine similarity undefined for a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def update_feature_centroid(old: Sequence[float], new: Sequence[float]) -> Tuple[float, ...]:
    """Average a matched embedding into the track's appearance centroid."""
    old_a = np.asarray(old, dtype=float)
    mid = 0.5 * (old_a + np.asarray(new, dtype=float))
    n = np.linalg.norm(mid)
    if n < 1e-12:
        logger.warning("antipodal feature update; keeping previous centroid")
        return tuple(float(x) for x in old_a)
    return tuple(float(x) for x in mid / n)


class EventKind(str, enum.Enum):
    CREATED = "TrackCreated"
    UPDATED = "TrackUpdated"
    REMOVED = "TrackRemoved"


@dataclass(frozen=True)
class TrackEvent:
    kind: EventKind
    track_id: int


@dataclass(frozen=True)
class Track:
    track_id: int
    kf: KalmanState
    feature_centroid: Tuple[float, ...]
    class_label: ClassLabel
    frames_since_update: int = 0
    hits: int = 1

    @property
    def centroid(self) -> Tuple[float, float]:
        return float(self.kf.mean[0]), float(self.kf.mean[1])

    @property
    def bbox(self) -> Tuple[float, float, float, float]:
        m = self.kf.mean
        return float(m[0]), float(m[1]), float(m[2]), float(m[3])


def similarity_matrix(tracks: Sequence[Track], detections: Sequence[Detection]) -> np.ndarray:
    if not tracks or not detections:
        return np.zeros((len(tracks), len(detections)))
    t = np.array([tr.feature_centroid for tr in tracks], dtype=float)
    d = np.array([det.embedding for det in detections], dtype=float)
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return np.clip(t @ d.T, -1.0, 1.0)


def greedy_match(
    track_ids: Sequence[int], sim: np.ndarray, threshold: float
) -> Tuple[List[Tuple[int, int]], List[int], List[int]]:
    """Greedy matching on a precomputed similarity matrix (rows = tracks)."""
    n_t, n_d = sim.shape
    candidates = [
        (-float(sim[i, j]), track_ids[i], j, i)
        for i in range(n_t)
        for j in range(n_d)
        if sim[i, j] >= threshold
    ]
    candidates.sort()
    used_t, used_d = set(), set()
    matches = []
    for _, tid, j, i in candidates:
        if i in used_t or j in used_d:
            continue
        used_t.add(i)
        used_d.add(j)
        matches.append((tid, j))
    unmatched_t = [track_ids[i] for i in range(n_t) if i not in used_t]
    unmatched_d = [j for j in range(n_d) if j not in used_d]
    return matches, unmatched_t, unmatched_d


def associate(
    tracks: Sequence[Track], detections: Sequence[Detection], cfg: TrackerConfig
) -> Tuple[List[Tuple[int, int]], List[int], List[int]]:
    """Match detections to tracks by appearance only.

    Returns ``(matches, unmatched_track_ids, unmatched_detection_indices)``
    where ``matches`` holds ``(track_id, detection_index)`` pairs in the order
    they were accepted.
    """
    sim = similarity_matrix(tracks, detections)
    return greedy_match([t.track_id for t in tracks], sim, cfg.match_threshold)


def tracker_step(
    tracks: Sequence[Track],
    detections: Sequence[Detection],
    cfg: TrackerConfig,
    next_id: int,
) -> Tuple[List[Track], List[TrackEvent], int]:
    """Predict, associate, correct, spawn and age. Returns the new id counter."""
    predicted = [
        replace(t, kf=kf_predict(t.kf, cfg.dt, cfg.q, cfg.s_floor)) for t in tracks
    ]
    matches, _, unmatched_d = associate(predicted, detections, cfg)
    events: List[TrackEvent] = []
    out: List[Track] = []
    matched = dict(matches)
    for t in predicted:
        if t.track_id in matched:
            det = detections[matched[t.track_id]]
            out.append(
                replace(
                    t,
                    kf=kf_update(t.kf, det.z, cfg.r, cfg.s_floor),
                    feature_centroid=update_feature_centroid(t.feature_centroid, det.embedding),
                    frames_since_update=0,
                    hits=t.hits + 1,
                )
            )
            events.append(TrackEvent(EventKind.UPDATED, t.track_id))
        else:
            aged = replace(t, frames_since_update=t.frames_since_update + 1)
            if aged.frames_since_update > cfg.max_age:
                events.append(TrackEvent(EventKind.REMOVED, t.track_id))
            else:
                out.append(aged)
    for j in unmatched_d:
        det = detections[j]
        out.append(
            Track(
                track_id=next_id,
                kf=KalmanState.from_measurement(det.z, cfg.p0),
                feature_centroid=tuple(det.embedding),
                class_label=det.class_label,
            )
        )
        events.append(TrackEvent(EventKind.CREATED, next_id))
        next_id += 1
    return out, events, next_id


@dataclass
class Tracker:
    """Per-observer tracker state advanced one frame at a time."""

    cfg: TrackerConfig = field(default_factory=TrackerConfig)
    tracks: List[Track] = field(default_factory=list)
    next_id: int = 1
    version: int = 0

    def step(self, detections: Sequence[Detection]) -> List[TrackEvent]:
        self.tracks, events, self.next_id = tracker_step(self.tracks, detections, self.cfg, self.next_id)
        self.version += 1
        return events

    def get(self, track_id: int) -> Optional[Track]:
        for t in self.tracks:
            if t.track_id == track_id:
                return t
        return None
