import pytest

from autoplatoon.latch import (
    FaultKind,
    Latch,
    LatchCommand,
    LatchEventKind,
    LatchMode,
    LatchState,
    LatchThresholds,
    Origin,
    Reason,
    TriggerConditions,
    Verb,
    evaluate_faults,
    latch_step,
)

OK = TriggerConditions(True, True, True)
ENGAGE = LatchCommand(Verb.ENGAGE, Origin.OPERATOR, 0)
DISENGAGE = LatchCommand(Verb.DISENGAGE, Origin.LEADER, 0, issuer="L")


def test_engage_requires_all_conditions():
    state, ev = latch_step(LatchState(), ENGAGE, TriggerConditions(True, False, True), 3)
    assert state.mode is LatchMode.DISENGAGED
    assert ev[0].kind is LatchEventKind.REJECTED and ev[0].label() == "Rejected(comms_healthy)"
    state, ev = latch_step(state, ENGAGE, OK, 4)
    assert state.engaged and state.reason is Reason.OPERATOR_COMMAND and state.last_transition_tick == 4
    assert ev[0].label() == "Engaged/OperatorCommand"


def test_no_engage_without_command():
    state, ev = latch_step(LatchState(), None, OK, 1)
    assert not state.engaged and ev == []


def test_disengage_any_origin_ignores_conditions():
    engaged = LatchState(LatchMode.ENGAGED, 1, Reason.OPERATOR_COMMAND)
    state, ev = latch_step(engaged, DISENGAGE, TriggerConditions(False, False, False), 5)
    assert not state.engaged and state.reason is Reason.LEADER_COMMAND
    assert ev[0].label() == "Disengaged/LeaderCommand"


def test_fault_forces_failsafe():
    engaged = LatchState(LatchMode.ENGAGED, 1, Reason.OPERATOR_COMMAND)
    state, ev = latch_step(engaged, None, OK, 9, FaultKind.COMMS_LOST)
    assert state.reason is Reason.FAIL_SAFE and state.fault is FaultKind.COMMS_LOST
    assert ev[0].label() == "Disengaged/FailSafe(CommsLost)"


def test_tick_must_not_go_backwards():
    with pytest.raises(ValueError):
        latch_step(LatchState(LatchMode.DISENGAGED, 10), None, OK, 9)


def test_fault_priority_and_hold():
    th = LatchThresholds(t_track=2, t_fail=2, t_depth_fail=2)
    bad = TriggerConditions(False, False, False)
    assert evaluate_faults([bad] * 3, th) is FaultKind.TRACK_LOST
    assert evaluate_faults([TriggerConditions(True, False, False)] * 3, th) is FaultKind.COMMS_LOST
    assert evaluate_faults([TriggerConditions(True, True, False)] * 3, th) is FaultKind.DEPTH_INVALID
    assert evaluate_faults([bad] * 2, th) is None
    held = TriggerConditions(False, True, False, hold=True)
    # a deliberate stop does not count toward lost-track or depth faults
    assert evaluate_faults([held] * 10, th) is None


def test_latch_disengages_when_threshold_exceeded():
    th = LatchThresholds(t_track=4)
    latch = Latch(th)
    latch.step([ENGAGE], OK, 0)
    lost = TriggerConditions(False, True, True)
    ticks = []
    for t in range(1, 10):
        if latch.step([], lost, t):
            ticks.append(t)
    assert ticks == [th.t_track + 1]
    assert latch.state.fault is FaultKind.TRACK_LOST
