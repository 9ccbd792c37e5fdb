"""Per-tick CSV log: schema, writing, reading, metrics and offline invariant replay.

Everything in :class:`RunMetrics` is derived from the log rows alone, so a run
can be re-audited from its CSV without the scenario file.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

COLUMNS = (
    "tick",
    "agent",
    "role",
    "x",
    "y",
    "theta",
    "v_cmd",
    "w_cmd",
    "latch",
    "latch_cmd",
    "latch_events",
    "leader_recognized",
    "comms_healthy",
    "depth_valid",
    "hold",
    "plan",
    "target_track_id",
    "obstacle_in_frame",
    "fleet_observed",
    "version_observed",
    "measured_range",
    "true_range",
    "desired_range",
    "linear_dev",
    "angular_dev",
    "track_events",
    "server_fleet",
    "server_version",
    "unresolved",
    "server_events",
    "prop_bound",
)

SERVER = "server"
CONVERGENCE_TOL = 0.05
HOLD_TICKS = 200


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows: Iterable[dict], out: io.TextIOBase) -> None:
    w = csv.DictWriter(out, fieldnames=COLUMNS, lineterminator="\n", extrasaction="raise")
    w.writeheader()
    for row in rows:
        w.writerow({k: fmt(row.get(k)) for k in COLUMNS})


def read_csv(source: Union[str, Path, io.TextIOBase]) -> List[dict]:
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return list(csv.DictReader(fh))
    return list(csv.DictReader(source))


def _f(row: dict, key: str) -> Optional[float]:
    v = row.get(key, "")
    return float(v) if v != "" else None


def _i(row: dict, key: str) -> Optional[int]:
    v = row.get(key, "")
    return int(v) if v != "" else None


def _b(row: dict, key: str) -> bool:
    return row.get(key) == "1"


def _split(cell: str) -> List[str]:
    return [p for p in cell.split(";") if p] if cell else []


@dataclass
class FollowerMetrics:
    agent: str
    follow_ticks: int = 0
    range_err_mean: Optional[float] = None
    range_err_max: Optional[float] = None
    min_range: Optional[float] = None
    id_switches: int = 0
    convergence_tick: Optional[int] = None
    tracks_created: int = 0
    tracks_removed: int = 0


@dataclass
class StopPropagation:
    reporter: str
    arrival_tick: int
    version: int
    agent: str
    observed_tick: Optional[int]
    latency: Optional[int]
    bound: Optional[int]


@dataclass
class RunMetrics:
    followers: Dict[str, FollowerMetrics] = field(default_factory=dict)
    stop_propagation: List[StopPropagation] = field(default_factory=list)
    latch_events: List[Tuple[int, str, str]] = field(default_factory=list)
    plan_transitions: List[Tuple[int, str, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _by_agent(rows: Sequence[dict]) -> Dict[str, List[dict]]:
    out: Dict[str, List[dict]] = {}
    for r in rows:
        out.setdefault(r["agent"], []).append(r)
    return out


def _convergence(rows: Sequence[dict], hold: int, tol: float) -> Optional[int]:
    run = 0
    first = None
    for r in reversed(rows):
        rng, desired = _f(r, "true_range"), _f(r, "desired_range")
        ok = rng is not None and desired is not None and abs(rng - desired) <= tol
        run = run + 1 if ok else 0
        if run >= hold:
            first = int(r["tick"])
    return first


def report_arrivals(server_rows: Sequence[dict]) -> List[Tuple[str, int, int]]:
    out = []
    for r in server_rows:
        for ev in _split(r["server_events"]):
            kind, _, rest = ev.partition(":")
            if kind == "report":
                agent, _, version = rest.partition("@v")
                out.append((agent, int(r["tick"]), int(version)))
    return out


def compute_metrics(rows: Sequence[dict], hold: int = HOLD_TICKS, tol: float = CONVERGENCE_TOL) -> RunMetrics:
    groups = _by_agent(rows)
    m = RunMetrics()
    server_rows = groups.get(SERVER, [])
    bound = next((_i(r, "prop_bound") for r in server_rows if r["prop_bound"]), None)
    follower_ids = [a for a, rs in groups.items() if rs and rs[0]["role"] == "Follower"]
    for agent in follower_ids:
        rs = groups[agent]
        fm = FollowerMetrics(agent)
        errs = []
        prev_target = None
        prev_plan = None
        ranges = [x for x in (_f(r, "true_range") for r in rs) if x is not None]
        fm.min_range = min(ranges) if ranges else None
        for r in rs:
            plan = r["plan"]
            if plan != prev_plan:
                m.plan_transitions.append((int(r["tick"]), agent, plan))
                prev_plan = plan
            for label in _split(r["latch_events"]):
                m.latch_events.append((int(r["tick"]), agent, label))
            for ev in _split(r["track_events"]):
                kind = ev.partition(":")[0]
                fm.tracks_created += kind == "TrackCreated"
                fm.tracks_removed += kind == "TrackRemoved"
            if plan != "Follow":
                continue
            fm.follow_ticks += 1
            rng, desired = _f(r, "true_range"), _f(r, "desired_range")
            if rng is not None and desired is not None:
                errs.append(abs(rng - desired))
            target = _i(r, "target_track_id")
            if prev_target is not None and target != prev_target:
                fm.id_switches += 1
            prev_target = target
        if errs:
            fm.range_err_mean = sum(errs) / len(errs)
            fm.range_err_max = max(errs)
        fm.convergence_tick = _convergence(rs, hold, tol)
        m.followers[agent] = fm
    for reporter, arrival, version in report_arrivals(server_rows):
        for agent in follower_ids:
            rs = groups[agent]
            at = next((r for r in rs if int(r["tick"]) == arrival), None)
            if at is None or at["latch"] != "Engaged":
                continue
            seen = next(
                (int(r["tick"]) for r in rs if int(r["tick"]) >= arrival and (_i(r, "version_observed") or 0) >= version),
                None,
            )
            m.stop_propagation.append(
                StopPropagation(reporter, arrival, version, agent, seen, None if seen is None else seen - arrival, bound)
            )
    return m


@dataclass(frozen=True)
class Violation:
    tick: int
    agent: str
    invariant: str
    detail: str


@dataclass
class Verdict:
    violations: List[Violation]
    metrics: RunMetrics

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.ok:
            return "PASS"
        lines = [f"FAIL ({len(self.violations)} violations)"]
        lines += [f"  tick {v.tick} {v.agent}: [{v.invariant}] {v.detail}" for v in self.violations[:50]]
        return "\n".join(lines)


def check_rows(rows: Sequence[dict]) -> Verdict:
    """Re-validate the cross-module invariants from log rows."""
    violations: List[Violation] = []
    groups = _by_agent(rows)
    for agent, rs in groups.items():
        if agent == SERVER or rs[0]["role"] != "Follower":
            continue
        prev_mode = "Disengaged"
        prev_version = -1
        for r in rs:
            t = int(r["tick"])
            mode = r["latch"]
            zero = float(r["v_cmd"] or 0) == 0.0 and float(r["w_cmd"] or 0) == 0.0
            if mode == "Engaged" and prev_mode != "Engaged":
                conds = all(_b(r, k) for k in ("leader_recognized", "comms_healthy", "depth_valid"))
                engage = any(c.startswith("Engage") for c in _split(r["latch_cmd"]))
                if not (engage and conds):
                    violations.append(Violation(t, agent, "latch-safety",
                                                "engaged without an Engage command under valid triggers"))
            if mode != "Engaged" and not zero:
                violations.append(Violation(t, agent, "disengaged-zero", "nonzero command while disengaged"))
            stop_needed = _b(r, "obstacle_in_frame") or r["fleet_observed"] == "STOP"
            if mode == "Engaged" and stop_needed and (r["plan"] != "StopAndProceed" or not zero):
                violations.append(Violation(t, agent, "stop-dominance",
                                            f"plan {r['plan']} with obstacle/STOP present"))
            version = _i(r, "version_observed")
            if version is not None:
                if version < prev_version:
                    violations.append(Violation(t, agent, "version-monotone", f"{version} after {prev_version}"))
                prev_version = version
            prev_mode = mode
    for r in groups.get(SERVER, []):
        unresolved = _i(r, "unresolved") or 0
        if (unresolved > 0) != (r["server_fleet"] == "STOP"):
            violations.append(Violation(int(r["tick"]), SERVER, "stop-state",
                                        f"{r['server_fleet']} with {unresolved} unresolved reports"))
    metrics = compute_metrics(rows)
    for p in metrics.stop_propagation:
        if p.latency is None or (p.bound is not None and p.latency > p.bound):
            violations.append(Violation(p.arrival_tick, p.agent, "propagation",
                                        f"STOP v{p.version} from {p.reporter} observed after {p.latency} ticks "
                                        f"(bound {p.bound})"))
    violations.sort(key=lambda v: (v.tick, v.agent, v.invariant))
    return Verdict(violations, metrics)


def replay_check(path: Union[str, Path]) -> Verdict:
    return check_rows(read_csv(path))
