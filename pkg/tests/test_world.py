import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autoplatoon.world import (
    AgentState,
    Pose2D,
    Role,
    SimClock,
    VelocityCommand,
    World,
    normalize_angle,
    orthonormal_embeddings,
    step_kinematics,
)

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)


def _agent(x=0.0, y=0.0, theta=0.0, aid="A", role=Role.LEADER):
    e = np.zeros(4)
    e[0] = 1.0
    return AgentState(aid, role, Pose2D(x, y, theta), tuple(e))


@given(finite)
def test_normalize_angle_range_and_equivalence(theta):
    out = normalize_angle(theta)
    assert -math.pi < out <= math.pi
    assert math.isclose(math.cos(out), math.cos(theta), abs_tol=1e-9)
    assert math.isclose(math.sin(out), math.sin(theta), abs_tol=1e-9)


def test_normalize_angle_pi_boundary():
    assert normalize_angle(math.pi) == pytest.approx(math.pi)
    assert normalize_angle(-math.pi) == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        normalize_angle(float("nan"))


def test_unicycle_straight_and_turn():
    a = _agent(theta=0.0)
    out = step_kinematics(a, VelocityCommand(0.2, 0.0), 0.05)
    assert (out.pose.x, out.pose.y) == pytest.approx((0.01, 0.0))
    out = step_kinematics(_agent(theta=math.pi / 2), VelocityCommand(0.2, 1.0), 0.05)
    # explicit Euler: position uses the heading at the start of the step
    assert out.pose.x == pytest.approx(0.0, abs=1e-15)
    assert out.pose.y == pytest.approx(0.01)
    assert out.pose.theta == pytest.approx(math.pi / 2 + 0.05)


def test_kinematics_clamps_to_limits():
    out = step_kinematics(_agent(), VelocityCommand(5.0, -9.0), 0.1, v_max=0.5, w_max=2.0)
    assert out.linear_vel == 0.5 and out.angular_vel == -2.0
    assert out.pose.x == pytest.approx(0.05)


@settings(max_examples=50)
@given(st.integers(1, 16), st.integers(0, 2**32 - 1))
def test_orthonormal_embeddings(n, seed):
    e = orthonormal_embeddings(n, 16, np.random.default_rng(seed))
    assert e.shape == (n, 16)
    assert np.allclose(e @ e.T, np.eye(n), atol=1e-12)


def test_embedding_must_be_unit_norm():
    with pytest.raises(ValueError):
        AgentState("A", Role.LEADER, Pose2D(0, 0, 0), (1.0, 1.0))


def test_world_snapshot_and_range():
    w = World()
    w.add(_agent(0, 0, aid="A"))
    w.add(_agent(3, 4, aid="B", role=Role.FOLLOWER))
    with pytest.raises(ValueError):
        w.add(_agent(aid="A"))
    assert w.range_between("A", "B") == pytest.approx(5.0)
    w.hidden = {"B"}
    snap = w.snapshot()
    assert "B" in snap and "B" in snap.hidden
    w.remove("B")
    assert w.range_between("A", "B") is None
    assert "B" not in w.hidden
    assert "B" in snap  # snapshots are immutable copies


def test_clock():
    c = SimClock(dt=0.05)
    assert c.advance() == 1 and c.time == pytest.approx(0.05)
    with pytest.raises(ValueError):
        SimClock(dt=0.0)


@pytest.mark.parametrize(
    "pose, v, w, dt, expected",
    [
        ((0, 0, 0), 1.0, 0.0, 1.0, (1.0, 0.0, 0.0)),
        ((0, 0, math.pi / 2), 2.0, 0.0, 0.5, (0.0, 1.0, math.pi / 2)),
        ((0, 0, 0), 1.0, math.pi, 1.0, (1.0, 0.0, math.pi)),
    ],
)
def test_kinematics_worked_cases(pose, v, w, dt, expected):
    out = step_kinematics(_agent(*pose), VelocityCommand(v, w), dt, v_max=10.0, w_max=10.0)
    assert (out.pose.x, out.pose.y, out.pose.theta) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("theta, expected", [(0.0, 0.0), (3 * math.pi, math.pi), (-1.5 * math.pi, 0.5 * math.pi)])
def test_normalize_angle_worked_cases(theta, expected):
    assert normalize_angle(theta) == pytest.approx(expected, abs=1e-12)
