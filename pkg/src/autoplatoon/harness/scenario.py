"""Scenario files: schema, validation and loading (YAML or JSON)."""

from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator


class ScenarioError(ValueError):
    """Malformed scenario; ``problems`` lists ``(field, message)`` pairs."""

    def __init__(self, problems: List[Tuple[str, str]]):
        self.problems = problems
        super().__init__("invalid scenario:\n" + "\n".join(f"  {f}: {m}" for f, m in problems))


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ScriptSegment(_Model):
    ticks: int = Field(gt=0)
    v: float = 0.0
    w: float = 0.0


class ShapeSpec(_Model):
    width: float = Field(0.15, gt=0)
    height: float = Field(0.12, gt=0)
    center_height: float = 0.10


class AgentSpec(_Model):
    id: str
    role: Literal["Leader", "Follower"]
    pose: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    follows: Optional[str] = None
    script: List[ScriptSegment] = []
    shape: ShapeSpec = ShapeSpec()


class ObstacleSpec(_Model):
    id: str
    spawn: int = Field(ge=0)
    remove: Optional[int] = None
    pose: Optional[Tuple[float, float]] = None
    between: Optional[Tuple[str, str]] = None
    fraction: float = Field(0.5, gt=0, lt=1)
    shape: ShapeSpec = ShapeSpec(width=0.2, height=0.2, center_height=0.1)


class OcclusionSpec(_Model):
    target: str
    start: int = Field(ge=0)
    ticks: int = Field(gt=0)


class LatchCommandSpec(_Model):
    tick: int = Field(ge=0)
    target: str
    verb: Literal["Engage", "Disengage"]
    origin: Literal["Operator", "Leader"] = "Operator"


class LinkSpec(_Model):
    latency: int = Field(1, ge=0)
    jitter: int = Field(0, ge=0)
    drop: float = Field(0.0, ge=0, le=1)
    fifo: bool = True


class NetworkSpec(_Model):
    poll_period: int = Field(2, gt=0)
    status: LinkSpec = LinkSpec(latency=1)
    perception: LinkSpec = LinkSpec(latency=0)


class ChaosSpec(_Model):
    agent: str
    channel: Literal["status", "perception"]
    start: int = Field(ge=0)
    end: int = Field(gt=0)
    drop: float = Field(0.0, ge=0, le=1)
    extra_delay: int = Field(0, ge=0)


class NoiseSpec(_Model):
    pixel_sigma: float = Field(1.0, ge=0)
    embedding_sigma: float = Field(0.05, ge=0)
    imu_sigma: float = Field(0.01, ge=0)
    depth_scale: Tuple[float, float] = (0.5, 2.0)
    depth_shift: float = 0.0


class CameraSpec(_Model):
    width: int = Field(640, gt=0)
    height: int = Field(480, gt=0)
    fov_deg: float = Field(60.0, gt=0, lt=180)
    mount_height: float = 0.10


class DepthSpec(_Model):
    width: int = Field(64, ge=2)
    height: int = Field(48, ge=2)
    background: float = Field(5.0, gt=0)
    ref_depth: float = Field(0.5, gt=0)


class TrackerSpec(_Model):
    match_threshold: float = Field(0.65, gt=0, lt=1)
    max_age: int = Field(30, ge=1)


class LatchSpec(_Model):
    t_recog: int = Field(5, ge=0)
    t_comms: int = Field(20, ge=0)
    t_track: int = Field(15, ge=0)
    t_depth: int = Field(10, ge=0)
    t_fail: int = Field(5, ge=0)
    t_depth_fail: int = Field(10, ge=0)


class ControllerSpec(_Model):
    k_lin: float = Field(6.0, gt=0)
    k_ang: float = Field(2.0, gt=0)
    deadband_lin: float = Field(0.02, ge=0)
    deadband_ang: float = Field(0.02, ge=0)
    slew: float = Field(4.0, ge=0)


class PlannerSpec(_Model):
    desired_range: float = Field(0.30, gt=0)
    linear_threshold: float = Field(0.05, ge=0)
    angular_threshold: float = Field(0.05, ge=0)
    obstacle_grace: int = Field(3, ge=0)


class Scenario(_Model):
    name: str = "scenario"
    seed: int = 0
    duration: int = Field(gt=0)
    dt: float = Field(0.05, gt=0)
    embedding_dim: int = Field(16, ge=2)
    v_max: float = Field(0.5, gt=0)
    w_max: float = Field(2.0, gt=0)
    agents: List[AgentSpec]
    obstacles: List[ObstacleSpec] = []
    occlusions: List[OcclusionSpec] = []
    latch_commands: List[LatchCommandSpec] = []
    network: NetworkSpec = NetworkSpec()
    chaos: List[ChaosSpec] = []
    noise: NoiseSpec = NoiseSpec()
    camera: CameraSpec = CameraSpec()
    depth: DepthSpec = DepthSpec()
    tracker: TrackerSpec = TrackerSpec()
    latch: LatchSpec = LatchSpec()
    controller: ControllerSpec = ControllerSpec()
    planner: PlannerSpec = PlannerSpec()

    @model_validator(mode="after")
    def _cross_checks(self) -> "Scenario":
        problems = cross_check(self)
        if problems:
            raise ValueError("; ".join(f"{f}: {m}" for f, m in problems))
        return self

    @property
    def leader(self) -> AgentSpec:
        return next(a for a in self.agents if a.role == "Leader")

    @property
    def followers(self) -> List[AgentSpec]:
        return [a for a in self.agents if a.role == "Follower"]

    def target_of(self, follower_id: str) -> str:
        """Ground-truth agent a follower is meant to track (for metrics only)."""
        robots = self.agents
        for i, a in enumerate(robots):
            if a.id == follower_id:
                if a.follows:
                    return a.follows
                return robots[i - 1].id if i > 0 else self.leader.id
        raise KeyError(follower_id)

    def with_seed(self, seed: int) -> "Scenario":
        return self.model_copy(update={"seed": seed})


def cross_check(s: Scenario) -> List[Tuple[str, str]]:
    problems: List[Tuple[str, str]] = []
    ids = [a.id for a in s.agents] + [o.id for o in s.obstacles]
    robots = {a.id for a in s.agents}
    followers = {a.id for a in s.agents if a.role == "Follower"}
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        problems.append(("agents", f"duplicate ids {dupes}"))
    if "server" in ids or "operator" in ids:
        problems.append(("agents", "ids 'server' and 'operator' are reserved"))
    leaders = [a for a in s.agents if a.role == "Leader"]
    if len(leaders) != 1:
        problems.append(("agents", f"exactly one Leader required, found {len(leaders)}"))
    if not followers:
        problems.append(("agents", "at least one Follower required"))
    if len(ids) > s.embedding_dim:
        problems.append(("embedding_dim", f"{len(ids)} entities need embedding_dim >= {len(ids)}"))
    for i, a in enumerate(s.agents):
        if a.follows is not None and a.follows not in robots:
            problems.append((f"agents[{i}].follows", f"unknown agent {a.follows!r}"))
        if a.role == "Follower" and a.script:
            problems.append((f"agents[{i}].script", "only the leader runs a script"))
    for i, o in enumerate(s.obstacles):
        where = f"obstacles[{i}]"
        if (o.pose is None) == (o.between is None):
            problems.append((where, "give exactly one of 'pose' or 'between'"))
        if o.between is not None:
            for name in o.between:
                if name not in robots:
                    problems.append((f"{where}.between", f"unknown agent {name!r}"))
        if o.spawn >= s.duration:
            problems.append((f"{where}.spawn", f"tick {o.spawn} not before duration {s.duration}"))
        if o.remove is not None and not o.spawn < o.remove <= s.duration:
            problems.append((f"{where}.remove", "must satisfy spawn < remove <= duration"))
    for i, oc in enumerate(s.occlusions):
        if oc.target not in ids:
            problems.append((f"occlusions[{i}].target", f"unknown entity {oc.target!r}"))
        if oc.start >= s.duration:
            problems.append((f"occlusions[{i}].start", f"tick {oc.start} not before duration {s.duration}"))
    for i, c in enumerate(s.latch_commands):
        if c.target not in followers:
            problems.append((f"latch_commands[{i}].target", f"{c.target!r} is not a follower"))
        if c.tick >= s.duration:
            problems.append((f"latch_commands[{i}].tick", f"tick {c.tick} not before duration {s.duration}"))
    for i, c in enumerate(s.chaos):
        if c.agent not in followers:
            problems.append((f"chaos[{i}].agent", f"{c.agent!r} is not a follower"))
        if not c.start < c.end:
            problems.append((f"chaos[{i}]", "start must precede end"))
        if c.start >= s.duration:
            problems.append((f"chaos[{i}].start", f"tick {c.start} not before duration {s.duration}"))
    lo, hi = s.noise.depth_scale
    if not 0 < lo <= hi:
        problems.append(("noise.depth_scale", "need 0 < low <= high"))
    return problems


def parse_scenario(data: Union[dict, None]) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError([("<root>", "scenario must be a mapping")])
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        problems = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            msg = err["msg"]
            if msg.startswith("Value error, "):
                # cross-check failures already carry field names
                for part in msg[len("Value error, "):].split("; "):
                    f, _, m = part.partition(": ")
                    problems.append((f, m))
                continue
            problems.append((loc, msg))
        raise ScenarioError(problems) from None


def load_scenario(path: Union[str, Path]) -> Scenario:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError([("<file>", f"not valid YAML/JSON: {exc}")]) from None
    return parse_scenario(data)
