"""Close-range proportional controller with deadbands and IMU-based slew limiting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .latch import LatchState
from .planner import Deviations
from .world import V_MAX, W_MAX, VelocityCommand, clamp, normalize_angle


@dataclass(frozen=True)
class ControllerGains:
    k_lin: float = 6.0
    k_ang: float = 2.0
    deadband_lin: float = 0.02
    deadband_ang: float = 0.02
    v_max: float = V_MAX
    w_max: float = W_MAX
    slew: float = 4.0  # rad/s^2 on the angular command

    def __post_init__(self) -> None:
        if self.k_lin <= 0 or self.k_ang <= 0:
            raise ValueError("gains must be positive")
        if self.deadband_lin < 0 or self.deadband_ang < 0:
            raise ValueError("deadbands must be non-negative")


def control_step(
    dev: Deviations,
    gains: ControllerGains,
    latch: LatchState,
    tick: int = 0,
    prev: Optional[VelocityCommand] = None,
    dt: float = 0.05,
    heading_change: float = 0.0,
) -> VelocityCommand:
    """Map deviations to a velocity command.

    ``heading_change`` is the IMU heading now minus the heading when the frame
    was captured; it shifts the stale bearing into the current body frame.
    ``prev`` enables the angular slew limit.
    """
    if not latch.engaged or not dev.known:
        return VelocityCommand(0.0, 0.0, tick)
    lin_err = dev.linear_dev
    ang_err = dev.angular_dev + normalize_angle(heading_change) if heading_change else dev.angular_dev
    linear = 0.0 if abs(lin_err) <= gains.deadband_lin else clamp(gains.k_lin * lin_err, gains.v_max)
    angular = 0.0 if abs(ang_err) <= gains.deadband_ang else clamp(-gains.k_ang * ang_err, gains.w_max)
    if prev is not None and gains.slew > 0:
        step = gains.slew * dt
        angular = min(max(angular, prev.angular - step), prev.angular + step)
    return VelocityCommand(linear, angular, tick)
