"""Fleet status server (hosted by the leader) and the central perception server."""

from __future__ import annotations

import logging
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from ..depth import CalibrationAnchor, depth_at
from ..latch import LatchCommand, Origin
from ..perception import CameraModel, draw_frame_scale, render_depth, render_detections
from ..planner import FleetState
from ..tracker import Tracker, TrackerConfig
from ..world import WorldSnapshot
from .messages import (
    Ack,
    DepthReading,
    PerceptionRequest,
    PerceptionResult,
    PollReply,
    StatusUpdate,
    StopCause,
    SystemState,
    TrackEventRecord,
    TrackReport,
)

logger = logging.getLogger(__name__)

OPERATOR_ID = "operator"


class CommsError(Exception):
    status = 400


class UnknownAgent(CommsError):
    status = 404


class UnknownSnapshot(CommsError):
    status = 404


class Rejected(CommsError):
    status = 409


@dataclass(frozen=True)
class ServerEvent:
    kind: str  # "report" | "resolve"
    agent_id: str
    tick: int
    version: int
    fleet_state: FleetState


class StatusServer:
    """Latest status per agent, the fleet RUN/STOP flag and pending latch commands.

    Every public operation holds one lock, so concurrent HTTP handlers see a
    single total order of operations.
    """

    def __init__(self, agents: Iterable[str], leader_id: str):
        self.agents = set(agents) | {leader_id}
        self.leader_id = leader_id
        self.latest: Dict[str, StatusUpdate] = {}
        self.reports: "OrderedDict[str, int]" = OrderedDict()
        self.state = SystemState()
        self.pending: Dict[str, List[LatchCommand]] = {a: [] for a in self.agents}
        self.events: List[ServerEvent] = []
        self._lock = threading.RLock()

    def _require(self, agent_id: str) -> None:
        if agent_id not in self.agents:
            raise UnknownAgent(f"unregistered agent {agent_id!r}")

    def _set(self, fleet: FleetState, cause: Optional[StopCause]) -> None:
        self.state = SystemState(fleet, cause, self.state.version + 1)

    def _report(self, agent_id: str, tick: int, now: int) -> None:
        self.reports[agent_id] = tick
        first, t = next(iter(self.reports.items()))
        self._set(FleetState.STOP, StopCause(first, t))
        self.events.append(ServerEvent("report", agent_id, now, self.state.version, self.state.fleet_state))

    def submit_status(self, update: StatusUpdate, now: Optional[int] = None) -> Ack:
        now = update.tick if now is None else now
        with self._lock:
            self._require(update.agent_id)
            prev = self.latest.get(update.agent_id)
            if prev is not None and update.tick < prev.tick:
                return Ack(ok=True, stale=True)
            self.latest[update.agent_id] = update
            reported = update.agent_id in self.reports
            if update.obstacle_seen and not reported:
                self._report(update.agent_id, update.tick, now)
            elif not update.obstacle_seen and reported:
                self._resolve(update.agent_id, now)
            return Ack()

    def poll_system_state(self, agent_id: str) -> SystemState:
        with self._lock:
            self._require(agent_id)
            return self.state

    def poll(self, agent_id: str, tick: int) -> PollReply:
        """System state plus any latch commands queued for ``agent_id``."""
        with self._lock:
            self._require(agent_id)
            commands = tuple(self.pending[agent_id])
            self.pending[agent_id].clear()
            return PollReply(agent_id, tick, self.state, commands)

    def _resolve(self, agent_id: str, now: int) -> SystemState:
        if agent_id not in self.reports:
            raise Rejected(f"no unresolved obstacle report from {agent_id!r}")
        del self.reports[agent_id]
        if self.reports:
            first, t = next(iter(self.reports.items()))
            self._set(FleetState.STOP, StopCause(first, t))
        else:
            self._set(FleetState.RUN, None)
        self.events.append(ServerEvent("resolve", agent_id, now, self.state.version, self.state.fleet_state))
        return self.state

    def resolve_stop(self, agent_id: str, now: int = 0) -> SystemState:
        with self._lock:
            self._require(agent_id)
            return self._resolve(agent_id, now)

    def latch_command(self, cmd: LatchCommand) -> Ack:
        with self._lock:
            self._require(cmd.target)
            if cmd.target == self.leader_id:
                raise Rejected("the leader has no follower latch")
            expected = self.leader_id if cmd.origin is Origin.LEADER else OPERATOR_ID
            if cmd.issuer != expected:
                raise Rejected(f"{cmd.origin.value} command must be issued by {expected!r}, not {cmd.issuer!r}")
            self.pending[cmd.target].append(cmd)
            return Ack()

    @property
    def unresolved(self) -> int:
        with self._lock:
            return len(self.reports)


@dataclass
class PerceptionConfig:
    camera: CameraModel = field(default_factory=CameraModel)
    pixel_sigma: float = 1.0
    embedding_sigma: float = 0.05
    depth_size: Tuple[int, int] = (64, 48)
    depth_scale: Tuple[float, float] = (0.5, 2.0)
    depth_shift: float = 0.0
    background_depth: float = 5.0
    ref_depth: float = 0.5
    tracker: TrackerConfig = field(default_factory=TrackerConfig)


def _track_report(t) -> TrackReport:
    x, y, s, a = t.bbox
    return TrackReport(t.track_id, t.class_label, x, y, s, a, t.frames_since_update, t.hits)


class PerceptionServer:
    """Runs the synthetic perception, tracker and depth lookup for each agent.

    Tracker state lives here, one tracker per requesting agent. Noise for
    frame ``tick`` of agent ``i`` is drawn from a stream keyed on
    ``(seed, i, tick)``, so results do not depend on request interleaving.
    Replaying a request returns the cached result.
    """

    def __init__(self, agents: Iterable[str], cfg: Optional[PerceptionConfig] = None, seed: int = 0,
                 keep: int = 64):
        self.cfg = cfg or PerceptionConfig()
        self.seed = seed
        self.index = {a: i for i, a in enumerate(agents)}
        self.trackers: Dict[str, Tracker] = {a: Tracker(self.cfg.tracker) for a in self.index}
        self.last_tick: Dict[str, int] = {}
        self.snapshots: "OrderedDict[int, WorldSnapshot]" = OrderedDict()
        self.cache: Dict[Tuple[str, int], PerceptionResult] = {}
        self.keep = keep
        self._lock = threading.RLock()

    def add_snapshot(self, snap: WorldSnapshot) -> int:
        with self._lock:
            self.snapshots[snap.tick] = snap
            while len(self.snapshots) > self.keep:
                old, _ = self.snapshots.popitem(last=False)
                for key in [k for k in self.cache if k[1] == old]:
                    del self.cache[key]
            return snap.tick

    def _rng(self, agent_id: str, tick: int, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.index[agent_id], tick, stream])

    def request_perception(self, req: PerceptionRequest) -> PerceptionResult:
        with self._lock:
            if req.agent_id not in self.index:
                raise UnknownAgent(f"unregistered agent {req.agent_id!r}")
            key = (req.agent_id, req.tick)
            if key in self.cache:
                return self.cache[key]
            snap = self.snapshots.get(req.snapshot_id)
            if snap is None or snap.tick != req.tick:
                raise UnknownSnapshot(f"no snapshot {req.snapshot_id} for tick {req.tick}")
            last = self.last_tick.get(req.agent_id)
            if last is not None and req.tick <= last:
                raise Rejected(f"frame {req.tick} is older than processed frame {last}")
            result = self._process(req.agent_id, snap, last)
            self.last_tick[req.agent_id] = req.tick
            self.cache[key] = result
            return result

    def _process(self, agent_id: str, snap: WorldSnapshot, last: Optional[int]) -> PerceptionResult:
        cfg = self.cfg
        tracker = self.trackers[agent_id]
        events = []
        if last is not None:
            # frames that never reached the server count as empty frames
            for _ in range(snap.tick - last - 1):
                events.extend(tracker.step([]))
        dets = render_detections(
            snap, agent_id, cfg.camera, self._rng(agent_id, snap.tick, 0), cfg.pixel_sigma, cfg.embedding_sigma
        )
        events.extend(tracker.step(dets))
        k = draw_frame_scale(self._rng(agent_id, snap.tick, 1), *cfg.depth_scale)
        dmap = render_depth(snap, agent_id, cfg.camera, k, size=cfg.depth_size,
                            background_depth=cfg.background_depth, ref_depth=cfg.ref_depth, shift=cfg.depth_shift)
        anchor = CalibrationAnchor.from_map(dmap)
        readings = []
        for t in tracker.tracks:
            if t.frames_since_update != 0:
                continue
            d = depth_at(dmap, anchor, *t.centroid)
            if d is not None:
                readings.append(DepthReading(t.track_id, d))
        return PerceptionResult(
            agent_id=agent_id,
            tick=snap.tick,
            detections=tuple(dets),
            tracks=tuple(_track_report(t) for t in tracker.tracks),
            depth=tuple(readings),
            events=tuple(TrackEventRecord(e.kind.value, e.track_id) for e in events),
        )
