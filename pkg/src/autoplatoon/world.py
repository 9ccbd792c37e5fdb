"""Ground-truth 2D world: unicycle kinematics, entity registry and the sim clock."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

V_MAX = 0.5
W_MAX = 2.0


class Role(str, enum.Enum):
    LEADER = "Leader"
    FOLLOWER = "Follower"
    OBSTACLE = "Obstacle"


def normalize_angle(theta: float) -> float:
    """Wrap ``theta`` into (-pi, pi]."""
    if not math.isfinite(theta):
        raise ValueError(f"non-finite angle: {theta!r}")
    wrapped = math.remainder(theta, 2.0 * math.pi)
    # remainder() returns [-pi, pi]; the interval is open at -pi
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)


@dataclass(frozen=True)
class VelocityCommand:
    linear: float = 0.0
    angular: float = 0.0
    tick: int = 0

    @property
    def is_zero(self) -> bool:
        return self.linear == 0.0 and self.angular == 0.0


@dataclass(frozen=True)
class EntityShape:
    """Physical extent used by the synthetic camera (meters)."""

    width: float = 0.15
    height: float = 0.12
    center_height: float = 0.10


@dataclass(frozen=True)
class AgentState:
    id: str
    role: Role
    pose: Pose2D
    marker_embedding: Tuple[float, ...]
    linear_vel: float = 0.0
    angular_vel: float = 0.0
    imu_heading: float = 0.0
    shape: EntityShape = field(default_factory=EntityShape)

    def __post_init__(self) -> None:
        norm = math.sqrt(sum(v * v for v in self.marker_embedding))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"{self.id}: marker embedding must be unit norm, got {norm}")


@dataclass
class SimClock:
    dt: float = 0.05
    tick: int = 0

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.tick < 0:
            raise ValueError("tick must be >= 0")

    @property
    def time(self) -> float:
        return self.tick * self.dt

    def advance(self) -> int:
        self.tick += 1
        return self.tick


def clamp(value: float, limit: float) -> float:
    return max(-limit, min(limit, value))


def step_kinematics(
    state: AgentState,
    cmd: VelocityCommand,
    dt: float,
    v_max: float = V_MAX,
    w_max: float = W_MAX,
) -> AgentState:
    """Advance one explicit-Euler step of the unicycle model.

    Commands beyond the actuator limits are clamped (and logged) rather than
    rejected. The IMU heading is left at the true heading; callers add sensor
    noise with :func:`read_imu`.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    v = clamp(cmd.linear, v_max)
    w = clamp(cmd.angular, w_max)
    if v != cmd.linear or w != cmd.angular:
        logger.debug("%s: command (%g, %g) clamped to (%g, %g)", state.id, cmd.linear, cmd.angular, v, w)
    p = state.pose
    pose = Pose2D(
        p.x + v * math.cos(p.theta) * dt,
        p.y + v * math.sin(p.theta) * dt,
        p.theta + w * dt,
    )
    return replace(state, pose=pose, linear_vel=v, angular_vel=w, imu_heading=pose.theta)


def read_imu(state: AgentState, rng: np.random.Generator, sigma: float) -> AgentState:
    heading = state.pose.theta
    if sigma > 0:
        heading = normalize_angle(heading + float(rng.normal(0.0, sigma)))
    return replace(state, imu_heading=heading)


def orthonormal_embeddings(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` mutually orthogonal unit vectors of length ``dim`` (rows)."""
    if n > dim:
        raise ValueError(f"cannot build {n} orthogonal embeddings in dimension {dim}")
    q, _ = np.linalg.qr(rng.normal(size=(dim, max(n, 1))))
    rows = q[:, :n].T.copy()
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows


@dataclass(frozen=True)
class WorldSnapshot:
    """Immutable view of every entity at one tick."""

    tick: int
    agents: Tuple[AgentState, ...]
    hidden: frozenset = frozenset()

    def get(self, agent_id: str) -> AgentState:
        for a in self.agents:
            if a.id == agent_id:
                return a
        raise KeyError(agent_id)

    def __contains__(self, agent_id: str) -> bool:
        return any(a.id == agent_id for a in self.agents)


class World:
    """Mutable entity registry owned by the tick loop."""

    def __init__(self, dt: float = 0.05, v_max: float = V_MAX, w_max: float = W_MAX):
        self.clock = SimClock(dt=dt)
        self.v_max = v_max
        self.w_max = w_max
        self.agents: Dict[str, AgentState] = {}
        self.hidden: set = set()

    def add(self, agent: AgentState) -> None:
        if agent.id in self.agents:
            raise ValueError(f"duplicate agent id {agent.id!r}")
        self.agents[agent.id] = agent

    def remove(self, agent_id: str) -> None:
        self.agents.pop(agent_id, None)
        self.hidden.discard(agent_id)

    def apply(self, agent_id: str, cmd: VelocityCommand) -> AgentState:
        new = step_kinematics(self.agents[agent_id], cmd, self.clock.dt, self.v_max, self.w_max)
        self.agents[agent_id] = new
        return new

    def set_imu(self, agent_id: str, rng: np.random.Generator, sigma: float) -> None:
        self.agents[agent_id] = read_imu(self.agents[agent_id], rng, sigma)

    def snapshot(self) -> WorldSnapshot:
        return WorldSnapshot(self.clock.tick, tuple(self.agents.values()), frozenset(self.hidden))

    def of_role(self, role: Role) -> Iterable[AgentState]:
        return (a for a in self.agents.values() if a.role is role)

    def range_between(self, a: str, b: str) -> Optional[float]:
        if a not in self.agents or b not in self.agents:
            return None
        return self.agents[a].pose.distance_to(self.agents[b].pose)
