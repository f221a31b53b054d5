"""
Ego low-level control — longitudinal PID, pure-pursuit steering, kinematic bicycle.

The learned policy only picks a target speed; these controllers turn it
into acceleration and steering, then integrate the pose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from drivetrainer.sim.geometry import Polyline, wrap_angle

WHEELBASE = 2.7
MAX_STEER = 0.6
ACCEL_LIMITS = (-6.0, 3.0)
V_MAX = 20.0


@dataclass
class LongitudinalPID:
    """Speed-error PID with conditional integration and bounded output."""
    kp: float = 1.0
    ki: float = 0.1
    kd: float = 0.05
    dt: float = 0.1
    a_min: float = ACCEL_LIMITS[0]
    a_max: float = ACCEL_LIMITS[1]
    integral_band: float = 0.5

    def __post_init__(self) -> None:
        self.reset()

    def reset(self) -> None:
        self._integral = 0.0
        self._prev_error: float | None = None
        self._target: float | None = None

    def step(self, target: float, speed: float) -> float:
        if target != self._target:
            self._integral = 0.0
            self._prev_error = None
            self._target = target
        error = target - speed
        derivative = 0.0 if self._prev_error is None else (error - self._prev_error) / self.dt
        self._prev_error = error

        raw = self.kp * error + self.ki * self._integral + self.kd * derivative
        saturated = raw > self.a_max or raw < self.a_min
        if abs(error) < self.integral_band and not saturated:
            self._integral += error * self.dt
            raw = self.kp * error + self.ki * self._integral + self.kd * derivative
        return min(self.a_max, max(self.a_min, raw))


def lookahead_distance(speed: float) -> float:
    return 4.0 + 0.5 * speed


def pure_pursuit_steering(x: float, y: float, psi: float, speed: float, path: Polyline, s: float) -> float:
    """Steering angle that arcs the vehicle through the path point one lookahead ahead."""
    ld = lookahead_distance(speed)
    tx, ty = path.positions(s + ld)
    alpha = wrap_angle(math.atan2(ty - y, tx - x) - psi)
    steer = math.atan2(2.0 * WHEELBASE * math.sin(alpha), ld)
    return max(-MAX_STEER, min(MAX_STEER, steer))


def bicycle_step(
    x: float,
    y: float,
    psi: float,
    speed: float,
    accel: float,
    steer: float,
    dt: float,
) -> tuple[float, float, float, float, float]:
    """Semi-implicit kinematic bicycle; returns (x, y, psi, v, realized accel)."""
    v_next = min(V_MAX, max(0.0, speed + accel * dt))
    psi_next = wrap_angle(psi + v_next / WHEELBASE * math.tan(steer) * dt)
    x_next = x + v_next * math.cos(psi_next) * dt
    y_next = y + v_next * math.sin(psi_next) * dt
    return x_next, y_next, psi_next, v_next, (v_next - speed) / dt
