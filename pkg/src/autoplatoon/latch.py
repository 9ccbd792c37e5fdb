"""Software latch: gated engagement of a follower's autonomous mode.

Engagement needs an explicit Engage command at a tick where every trigger
condition holds. Disengagement follows any Disengage command or a sustained
fault; after a fail-safe disengagement the latch stays open until a fresh
Engage arrives.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Iterable, List, Optional, Sequence, Tuple


class LatchMode(str, enum.Enum):
    DISENGAGED = "Disengaged"
    ENGAGED = "Engaged"


class Reason(str, enum.Enum):
    STARTUP = "Startup"
    OPERATOR_COMMAND = "OperatorCommand"
    LEADER_COMMAND = "LeaderCommand"
    FAIL_SAFE = "FailSafe"


class FaultKind(str, enum.Enum):
    TRACK_LOST = "TrackLost"
    COMMS_LOST = "CommsLost"
    DEPTH_INVALID = "DepthInvalid"


class Verb(str, enum.Enum):
    ENGAGE = "Engage"
    DISENGAGE = "Disengage"


class Origin(str, enum.Enum):
    OPERATOR = "Operator"
    LEADER = "Leader"


@dataclass(frozen=True)
class LatchCommand:
    verb: Verb
    origin: Origin
    tick: int
    issuer: str = "operator"
    target: str = ""


@dataclass(frozen=True)
class TriggerConditions:
    leader_recognized: bool
    comms_healthy: bool
    depth_valid: bool
    # the follower is deliberately stopped for an obstacle or fleet STOP; the
    # leader is expected to be hidden, so recognition/depth gaps are not faults
    hold: bool = False

    @property
    def all_true(self) -> bool:
        return self.leader_recognized and self.comms_healthy and self.depth_valid

    def failed(self) -> Tuple[str, ...]:
        names = ("leader_recognized", "comms_healthy", "depth_valid")
        return tuple(n for n in names if not getattr(self, n))


@dataclass(frozen=True)
class LatchThresholds:
    t_recog: int = 5
    t_comms: int = 20
    t_track: int = 15
    t_depth: int = 10
    t_fail: int = 5
    t_depth_fail: int = 10

    @property
    def window(self) -> int:
        return max(self.t_track, self.t_fail, self.t_depth_fail) + 1


@dataclass(frozen=True)
class LatchState:
    mode: LatchMode = LatchMode.DISENGAGED
    last_transition_tick: int = 0
    reason: Reason = Reason.STARTUP
    fault: Optional[FaultKind] = None

    @property
    def engaged(self) -> bool:
        return self.mode is LatchMode.ENGAGED


class LatchEventKind(str, enum.Enum):
    ENGAGED = "Engaged"
    DISENGAGED = "Disengaged"
    REJECTED = "Rejected"


@dataclass(frozen=True)
class LatchEvent:
    kind: LatchEventKind
    tick: int
    reason: Reason
    fault: Optional[FaultKind] = None
    failed_conditions: Tuple[str, ...] = ()

    def label(self) -> str:
        if self.kind is LatchEventKind.REJECTED:
            return f"Rejected({'+'.join(self.failed_conditions)})"
        if self.fault is not None:
            return f"{self.kind.value}/{self.reason.value}({self.fault.value})"
        return f"{self.kind.value}/{self.reason.value}"


def _reason_for(origin: Origin) -> Reason:
    return Reason.LEADER_COMMAND if origin is Origin.LEADER else Reason.OPERATOR_COMMAND


def _false_run(history: Sequence[TriggerConditions], flag: str, honor_hold: bool) -> int:
    run = 0
    for cond in reversed(history):
        if getattr(cond, flag) or (honor_hold and cond.hold):
            break
        run += 1
    return run


def evaluate_faults(history: Sequence[TriggerConditions], thresholds: LatchThresholds) -> Optional[FaultKind]:
    """First sustained fault by priority TrackLost > CommsLost > DepthInvalid.

    ``history`` is oldest-first and ends with the current tick.
    """
    if _false_run(history, "leader_recognized", True) > thresholds.t_track:
        return FaultKind.TRACK_LOST
    if _false_run(history, "comms_healthy", False) > thresholds.t_fail:
        return FaultKind.COMMS_LOST
    if _false_run(history, "depth_valid", True) > thresholds.t_depth_fail:
        return FaultKind.DEPTH_INVALID
    return None


def latch_step(
    state: LatchState,
    cmd: Optional[LatchCommand],
    cond: TriggerConditions,
    tick: int,
    fault: Optional[FaultKind] = None,
) -> Tuple[LatchState, List[LatchEvent]]:
    if tick < state.last_transition_tick:
        raise ValueError(f"tick {tick} precedes last transition at {state.last_transition_tick}")
    if state.engaged and fault is not None:
        new = LatchState(LatchMode.DISENGAGED, tick, Reason.FAIL_SAFE, fault)
        return new, [LatchEvent(LatchEventKind.DISENGAGED, tick, Reason.FAIL_SAFE, fault)]
    if cmd is None:
        return state, []
    reason = _reason_for(cmd.origin)
    if cmd.verb is Verb.DISENGAGE:
        if not state.engaged:
            return state, []
        new = LatchState(LatchMode.DISENGAGED, tick, reason)
        return new, [LatchEvent(LatchEventKind.DISENGAGED, tick, reason)]
    if state.engaged:
        return state, []
    if not cond.all_true:
        return state, [LatchEvent(LatchEventKind.REJECTED, tick, reason, failed_conditions=cond.failed())]
    new = LatchState(LatchMode.ENGAGED, tick, reason)
    return new, [LatchEvent(LatchEventKind.ENGAGED, tick, reason)]


@dataclass
class Latch:
    """One follower's latch plus the condition history feeding fault checks."""

    thresholds: LatchThresholds = field(default_factory=LatchThresholds)
    state: LatchState = field(default_factory=LatchState)
    history: Deque[TriggerConditions] = field(default_factory=deque)
    log: List[LatchEvent] = field(default_factory=list)

    def step(self, commands: Iterable[LatchCommand], cond: TriggerConditions, tick: int) -> List[LatchEvent]:
        self.history.append(cond)
        while len(self.history) > self.thresholds.window:
            self.history.popleft()
        fault = evaluate_faults(self.history, self.thresholds)
        events: List[LatchEvent] = []
        self.state, ev = latch_step(self.state, None, cond, tick, fault)
        events.extend(ev)
        for cmd in commands:
            self.state, ev = latch_step(self.state, cmd, cond, tick, None)
            events.extend(ev)
        self.log.extend(events)
        return events

    @property
    def engaged(self) -> bool:
        return self.state.engaged
