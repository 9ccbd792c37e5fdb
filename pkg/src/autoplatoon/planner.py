"""Dynamic planner: choose Follow / StopAndProceed / Idle and compute deviations."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Tuple

from .latch import LatchState
from .perception import CameraModel, ClassLabel
from .tracker import Track

DESIRED_RANGE = 0.30


class PlanKind(str, enum.Enum):
    FOLLOW = "Follow"
    STOP_AND_PROCEED = "StopAndProceed"
    IDLE = "Idle"


class FleetState(str, enum.Enum):
    RUN = "RUN"
    STOP = "STOP"


class TargetClass(str, enum.Enum):
    LEADER = "Leader"
    OBSTACLE = "Obstacle"


@dataclass(frozen=True)
class Plan:
    kind: PlanKind = PlanKind.IDLE
    target_track_id: Optional[int] = None
    desired_range: float = DESIRED_RANGE
    created_tick: int = 0


@dataclass(frozen=True)
class Deviations:
    linear_dev: Optional[float] = None  # measured range - desired range
    angular_dev: Optional[float] = None  # target bearing, right of centre positive

    @property
    def known(self) -> bool:
        return self.linear_dev is not None and self.angular_dev is not None


@dataclass(frozen=True)
class Setpoint:
    active: bool = False
    desired_range: float = DESIRED_RANGE
    desired_bearing: float = 0.0


ZERO_SETPOINT = Setpoint()


def classify_target(track: Track) -> TargetClass:
    return TargetClass.LEADER if track.class_label is ClassLabel.LEADER_MARKER else TargetClass.OBSTACLE


def bearing_from_centroid(x_c: float, camera: CameraModel) -> float:
    if not 0.0 <= x_c <= camera.width:
        raise ValueError(f"x_c={x_c} outside image of width {camera.width}")
    return math.atan((x_c - camera.width / 2.0) / camera.focal_px)


def select_plan_kind(engaged: bool, fleet_stop: bool, obstacle_in_frame: bool, leader_live: bool) -> PlanKind:
    if not engaged:
        return PlanKind.IDLE
    if obstacle_in_frame or fleet_stop:
        return PlanKind.STOP_AND_PROCEED
    if leader_live:
        return PlanKind.FOLLOW
    return PlanKind.IDLE


def obstacle_tracks(tracks: Sequence[Track], grace: int) -> list:
    """Obstacle-class tracks seen within the last ``grace`` frames."""
    return [t for t in tracks if classify_target(t) is TargetClass.OBSTACLE and t.frames_since_update <= grace]


@dataclass
class PlannerConfig:
    desired_range: float = DESIRED_RANGE
    linear_threshold: float = 0.05
    angular_threshold: float = 0.05
    depth_hold: int = 10
    obstacle_grace: int = 3


@dataclass
class Planner:
    camera: CameraModel = field(default_factory=CameraModel)
    cfg: PlannerConfig = field(default_factory=PlannerConfig)
    plan: Plan = field(default_factory=Plan)
    follow_target: Optional[int] = None
    last_range: Optional[float] = None
    last_range_tick: Optional[int] = None

    def _pick_leader(self, tracks: Sequence[Track]) -> Optional[Track]:
        leaders = [t for t in tracks if classify_target(t) is TargetClass.LEADER]
        for t in leaders:
            if t.track_id == self.follow_target:
                return t
        if not leaders:
            return None
        # nearest marker = largest apparent area
        return min(leaders, key=lambda t: (-t.bbox[2], t.track_id))

    def converged(self, dev: Deviations) -> bool:
        return (
            dev.known
            and abs(dev.linear_dev) <= self.cfg.linear_threshold
            and abs(dev.angular_dev) <= self.cfg.angular_threshold
        )

    def step(
        self,
        tracks: Sequence[Track],
        depth_readings: Mapping[int, float],
        fleet_state: FleetState,
        latch: LatchState,
        tick: int,
    ) -> Tuple[Plan, Deviations, Setpoint]:
        leader = self._pick_leader(tracks)
        obstacles = obstacle_tracks(tracks, self.cfg.obstacle_grace)
        kind = select_plan_kind(latch.engaged, fleet_state is FleetState.STOP, bool(obstacles), leader is not None)

        if leader is not None and leader.track_id != self.follow_target:
            self.follow_target = leader.track_id
            self.last_range = self.last_range_tick = None
        if leader is not None and leader.track_id in depth_readings:
            self.last_range = depth_readings[leader.track_id]
            self.last_range_tick = tick

        if kind is PlanKind.FOLLOW:
            target = leader.track_id
        elif kind is PlanKind.STOP_AND_PROCEED and obstacles:
            target = min(obstacles, key=lambda t: t.track_id).track_id
        else:
            target = None
        if kind is not self.plan.kind or target != self.plan.target_track_id:
            self.plan = Plan(kind, target, self.cfg.desired_range, tick)

        if kind is not PlanKind.FOLLOW:
            return self.plan, Deviations(), ZERO_SETPOINT
        return self.plan, self._deviations(leader, tick), Setpoint(True, self.cfg.desired_range, 0.0)

    def _deviations(self, leader: Track, tick: int) -> Deviations:
        x_c = min(max(leader.centroid[0], 0.0), float(self.camera.width))
        bearing = bearing_from_centroid(x_c, self.camera)
        if self.last_range is None or tick - self.last_range_tick > self.cfg.depth_hold:
            return Deviations(None, bearing)
        return Deviations(self.last_range - self.cfg.desired_range, bearing)
