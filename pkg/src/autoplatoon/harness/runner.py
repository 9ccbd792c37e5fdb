"""Tick loop wiring world, perception, tracking, latch, planner, controller and comms."""

from __future__ import annotations

import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..comms.messages import PerceptionRequest, PerceptionResult, PollReply, PollRequest, PoseEstimate, StatusUpdate, SystemState
from ..comms.network import Chaos, LinkConfig, VirtualNetwork
from ..comms.server import OPERATOR_ID, PerceptionConfig, PerceptionServer, StatusServer
from ..comms.transport import HttpTransport, InProcessTransport
from ..controller import ControllerGains, control_step
from ..latch import Latch, LatchCommand, LatchThresholds, Origin, TriggerConditions, Verb
from ..perception import CameraModel, ClassLabel
from ..planner import FleetState, Planner, PlannerConfig, obstacle_tracks
from ..tracker import TrackerConfig
from ..world import AgentState, EntityShape, Pose2D, Role, VelocityCommand, World, normalize_angle, orthonormal_embeddings
from .log import SERVER, RunMetrics, Verdict, check_rows, read_csv, write_csv
from .scenario import Scenario

logger = logging.getLogger(__name__)


def _shape(spec) -> EntityShape:
    return EntityShape(spec.width, spec.height, spec.center_height)


@dataclass
class FollowerAgent:
    id: str
    latch: Latch
    planner: Planner
    gains: ControllerGains
    thresholds: LatchThresholds
    known: SystemState = field(default_factory=SystemState)
    last_state_rx: Optional[int] = None
    last_perception_rx: Optional[int] = None
    last_leader_seen: Optional[int] = None
    last_depth: Optional[int] = None
    latest: Optional[PerceptionResult] = None
    prev_cmd: VelocityCommand = field(default_factory=VelocityCommand)
    imu: Dict[int, float] = field(default_factory=dict)

    def _fresh_within(self, tick: Optional[int], now: int, window: int) -> bool:
        return tick is not None and now - tick <= window

    def tick(self, now: int, inbox: List, grace: int, dt: float) -> dict:
        commands: List[LatchCommand] = []
        fresh: Optional[PerceptionResult] = None
        track_events: List[str] = []
        for msg in inbox:
            if isinstance(msg, PollReply):
                if msg.state.version >= self.known.version:
                    self.known = msg.state
                self.last_state_rx = now
                commands.extend(msg.commands)
            elif isinstance(msg, PerceptionResult):
                track_events += [f"{e.kind}:{e.track_id}" for e in msg.events]
                if self.latest is None or msg.tick > self.latest.tick:
                    self.latest = fresh = msg
                    self.last_perception_rx = now
        tracks = self.latest.tracks if self.latest else ()
        depth = fresh.depth_by_track() if fresh else {}
        if fresh is not None:
            leaders = [t for t in fresh.tracks if t.class_label is ClassLabel.LEADER_MARKER]
            if any(t.frames_since_update == 0 for t in leaders):
                self.last_leader_seen = fresh.tick
            if any(t.track_id in depth for t in leaders):
                self.last_depth = fresh.tick
        obstacle = bool(obstacle_tracks(tracks, grace))
        stop = self.known.fleet_state is FleetState.STOP
        th = self.thresholds
        cond = TriggerConditions(
            leader_recognized=self._fresh_within(self.last_leader_seen, now, th.t_recog),
            comms_healthy=self._fresh_within(self.last_state_rx, now, th.t_comms)
            and self._fresh_within(self.last_perception_rx, now, th.t_comms),
            depth_valid=self._fresh_within(self.last_depth, now, th.t_depth),
            hold=obstacle or stop,
        )
        events = self.latch.step(commands, cond, now)
        plan, dev, _ = self.planner.step(tracks, depth, self.known.fleet_state, self.latch.state, now)
        heading_change = 0.0
        if self.latest is not None and self.latest.tick in self.imu:
            heading_change = normalize_angle(self.imu[now] - self.imu[self.latest.tick])
        cmd = control_step(dev, self.gains, self.latch.state, now, self.prev_cmd, dt, heading_change)
        self.prev_cmd = cmd
        measured = None if dev.linear_dev is None else dev.linear_dev + plan.desired_range
        return {
            "v_cmd": cmd.linear,
            "w_cmd": cmd.angular,
            "latch": self.latch.state.mode.value,
            "latch_cmd": ";".join(f"{c.verb.value}@{c.origin.value}" for c in commands),
            "latch_events": ";".join(e.label() for e in events),
            "leader_recognized": cond.leader_recognized,
            "comms_healthy": cond.comms_healthy,
            "depth_valid": cond.depth_valid,
            "hold": cond.hold,
            "plan": plan.kind.value,
            "target_track_id": plan.target_track_id,
            "obstacle_in_frame": obstacle,
            "fleet_observed": self.known.fleet_state.value,
            "version_observed": self.known.version,
            "measured_range": measured,
            "desired_range": plan.desired_range,
            "linear_dev": dev.linear_dev,
            "angular_dev": dev.angular_dev,
            "track_events": ";".join(track_events),
            "_cmd": cmd,
            "_obstacle": obstacle,
            "_plan": plan,
        }


@dataclass
class RunResult:
    metrics: RunMetrics
    verdict: Verdict
    csv_text: str
    csv_path: Optional[Path] = None
    summary_path: Optional[Path] = None
    network_stats: dict = field(default_factory=dict)

    @property
    def rows(self) -> List[dict]:
        return read_csv(io.StringIO(self.csv_text))


class Simulation:
    """One deterministic run of a scenario."""

    def __init__(self, scenario: Scenario, transport: str = "sim"):
        if transport not in ("sim", "http"):
            raise ValueError(f"unknown transport {transport!r}")
        self.s = s = scenario
        self.transport_kind = transport
        self.world = World(dt=s.dt, v_max=s.v_max, w_max=s.w_max)
        self.camera = CameraModel(s.camera.width, s.camera.height, math.radians(s.camera.fov_deg),
                                  s.camera.mount_height)
        root = np.random.SeedSequence(s.seed)
        emb_rng, imu_rng = (np.random.default_rng(c) for c in root.spawn(2))
        entity_ids = [a.id for a in s.agents] + [o.id for o in s.obstacles]
        emb = orthonormal_embeddings(len(entity_ids), s.embedding_dim, emb_rng)
        self.embeddings = {eid: tuple(float(x) for x in emb[i]) for i, eid in enumerate(entity_ids)}
        self.imu_rng = imu_rng
        for a in s.agents:
            pose = Pose2D(*a.pose)
            self.world.add(AgentState(a.id, Role(a.role), pose, self.embeddings[a.id], imu_heading=pose.theta,
                                      shape=_shape(a.shape)))
        self.leader_id = s.leader.id
        self.follower_ids = [a.id for a in s.followers]
        self.status_server = StatusServer([a.id for a in s.agents], self.leader_id)
        pcfg = PerceptionConfig(
            camera=self.camera,
            pixel_sigma=s.noise.pixel_sigma,
            embedding_sigma=s.noise.embedding_sigma,
            depth_size=(s.depth.width, s.depth.height),
            depth_scale=tuple(s.noise.depth_scale),
            depth_shift=s.noise.depth_shift,
            background_depth=s.depth.background,
            ref_depth=s.depth.ref_depth,
            tracker=TrackerConfig(s.tracker.match_threshold, s.tracker.max_age, s.dt),
        )
        self.perception_server = PerceptionServer(self.follower_ids, pcfg, seed=s.seed)
        thresholds = LatchThresholds(**s.latch.model_dump())
        gains = ControllerGains(s.controller.k_lin, s.controller.k_ang, s.controller.deadband_lin,
                                s.controller.deadband_ang, s.v_max, s.w_max, s.controller.slew)
        pl = s.planner
        self.followers = {
            fid: FollowerAgent(
                fid,
                Latch(thresholds),
                Planner(self.camera, PlannerConfig(pl.desired_range, pl.linear_threshold, pl.angular_threshold,
                                                   s.latch.t_depth, pl.obstacle_grace)),
                gains,
                thresholds,
            )
            for fid in self.follower_ids
        }
        self.script = [(seg.ticks, seg.v, seg.w) for seg in s.leader.script]
        self.script_pos = 0
        self.links = {
            "status": LinkConfig(**s.network.status.model_dump()),
            "perception": LinkConfig(**s.network.perception.model_dump()),
        }
        self.chaos = [Chaos(**c.model_dump()) for c in s.chaos]
        self.prop_bound = self.links["status"].max_latency + s.network.poll_period

    # -- schedule -------------------------------------------------------

    def _apply_schedule(self, t: int) -> List[str]:
        events = []
        for o in self.s.obstacles:
            if o.remove is not None and t == o.remove:
                self.world.remove(o.id)
                events.append(f"remove:{o.id}")
            if t == o.spawn:
                if o.pose is not None:
                    x, y = o.pose
                else:
                    a = self.world.agents[o.between[0]].pose
                    b = self.world.agents[o.between[1]].pose
                    x = a.x + o.fraction * (b.x - a.x)
                    y = a.y + o.fraction * (b.y - a.y)
                self.world.add(AgentState(o.id, Role.OBSTACLE, Pose2D(x, y, 0.0), self.embeddings[o.id],
                                          shape=_shape(o.shape)))
                events.append(f"spawn:{o.id}")
        hidden = {oc.target for oc in self.s.occlusions if oc.start <= t < oc.start + oc.ticks}
        self.world.hidden = hidden & set(self.world.agents)
        return events

    def _leader_command(self, t: int, transport) -> Tuple[VelocityCommand, SystemState]:
        state = transport.system_state(self.leader_id)
        if state.fleet_state is FleetState.STOP:
            return VelocityCommand(0.0, 0.0, t), state
        elapsed = self.script_pos
        for ticks, v, w in self.script:
            if elapsed < ticks:
                self.script_pos += 1
                return VelocityCommand(v, w, t), state
            elapsed -= ticks
        return VelocityCommand(0.0, 0.0, t), state

    # -- main loop ------------------------------------------------------

    def run(self) -> Tuple[List[dict], VirtualNetwork]:
        if self.transport_kind == "http":
            from ..comms.http import ServiceThread

            with ServiceThread(self.status_server, self.perception_server) as svc:
                client = HttpTransport(svc.url)
                try:
                    return self._loop(client)
                finally:
                    client.close()
        return self._loop(InProcessTransport(self.status_server, self.perception_server))

    def _loop(self, transport) -> Tuple[List[dict], VirtualNetwork]:
        s = self.s
        net = VirtualNetwork(transport, self.follower_ids, self.links, seed=s.seed, chaos=self.chaos)
        commands = sorted(s.latch_commands, key=lambda c: c.tick)
        rows: List[dict] = []
        grace = s.planner.obstacle_grace
        for t in range(s.duration):
            self.world.clock.tick = t
            world_events = self._apply_schedule(t)
            for rid in [a.id for a in s.agents]:
                self.world.set_imu(rid, self.imu_rng, s.noise.imu_sigma)
            snap = self.world.snapshot()
            self.perception_server.add_snapshot(snap)
            for c in commands:
                if c.tick == t:
                    issuer = self.leader_id if c.origin == "Leader" else OPERATOR_ID
                    transport.latch_command(LatchCommand(Verb(c.verb), Origin(c.origin), t, issuer, c.target))
            for fid in self.follower_ids:
                self.followers[fid].imu[t] = self.world.agents[fid].imu_heading
                self.followers[fid].imu.pop(t - 64, None)
                net.send_perception(PerceptionRequest(fid, t, snap.tick), t)
                if t % s.network.poll_period == 0:
                    net.send_poll(PollRequest(fid, t), t)
            inbox = net.deliver(t)

            server = self.status_server
            server_events = world_events + [
                f"{e.kind}:{e.agent_id}@v{e.version}" for e in server.events if e.tick == t
            ]
            rows.append({
                "tick": t, "agent": SERVER, "role": "Server",
                "server_fleet": server.state.fleet_state.value, "server_version": server.state.version,
                "unresolved": server.unresolved, "server_events": ";".join(server_events),
                "prop_bound": self.prop_bound,
            })

            cmds: Dict[str, VelocityCommand] = {}
            lcmd, lstate = self._leader_command(t, transport)
            cmds[self.leader_id] = lcmd
            lead = self.world.agents[self.leader_id]
            rows.append({
                "tick": t, "agent": self.leader_id, "role": "Leader",
                "x": lead.pose.x, "y": lead.pose.y, "theta": lead.pose.theta,
                "v_cmd": lcmd.linear, "w_cmd": lcmd.angular,
                "fleet_observed": lstate.fleet_state.value, "version_observed": lstate.version,
            })
            for fid in self.follower_ids:
                agent = self.followers[fid]
                out = agent.tick(t, inbox.get(fid, []), grace, s.dt)
                cmd = out.pop("_cmd")
                obstacle = out.pop("_obstacle")
                plan = out.pop("_plan")
                cmds[fid] = cmd
                me = self.world.agents[fid]
                net.send_status(
                    StatusUpdate(fid, t, PoseEstimate(me.pose.x, me.pose.y, me.imu_heading),
                                 agent.latch.state.mode, plan.kind, obstacle, plan.target_track_id),
                    t,
                )
                rows.append({
                    "tick": t, "agent": fid, "role": "Follower",
                    "x": me.pose.x, "y": me.pose.y, "theta": me.pose.theta,
                    "true_range": self.world.range_between(fid, s.target_of(fid)),
                    **out,
                })
            for rid, cmd in cmds.items():
                self.world.apply(rid, cmd)
        return rows, net


def _csv_text(rows: List[dict]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def run(
    scenario: Scenario,
    out_dir: Union[str, Path, None] = None,
    transport: str = "sim",
    seed: Optional[int] = None,
) -> RunResult:
    """Execute ``scenario``; write ``log.csv`` and ``summary.json`` when ``out_dir`` is given."""
    if seed is not None:
        scenario = scenario.with_seed(seed)
    started = time.perf_counter()
    sim = Simulation(scenario, transport)
    rows, net = sim.run()
    text = _csv_text(rows)
    verdict = check_rows(read_csv(io.StringIO(text)))
    result = RunResult(verdict.metrics, verdict, text,
                       network_stats={"sent": net.sent, "dropped": net.dropped, "errors": len(net.errors)})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        result.csv_path = out / "log.csv"
        result.csv_path.write_text(text)
        result.summary_path = out / "summary.json"
        summary = {
            "scenario": scenario.name,
            "seed": scenario.seed,
            "transport": transport,
            "ticks": scenario.duration,
            "wall_seconds": round(time.perf_counter() - started, 3),
            "verdict": "pass" if verdict.ok else "fail",
            "violations": [v.__dict__ for v in verdict.violations],
            "network": result.network_stats,
            "metrics": verdict.metrics.to_dict(),
        }
        result.summary_path.write_text(json.dumps(summary, indent=2) + "\n")
    logger.info("%s: %s", scenario.name, verdict.summary())
    return result
