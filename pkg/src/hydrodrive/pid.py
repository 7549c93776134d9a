"""Classical PID baseline acting on the velocity error.

Kept deliberately simple: proportional/integral/derivative on v_e with a
clamped integral term, pushed through the same valve saturation as the main
controller. The sign convention matches the valve wiring used by the
simulator (a positive error produces a positive raw command, which the
wiring maps to a torque decrease).
"""

from __future__ import annotations

from dataclasses import dataclass

from .controller import saturate


@dataclass(frozen=True)
class PidGains:
    kp: float = 2.0
    ki: float = 0.5
    kd: float = 0.0
    integral_clamp: float = 0.44

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise ValueError("PID gains must be >= 0")
        if self.integral_clamp <= 0:
            raise ValueError("integral_clamp must be > 0")


class PidController:
    """Single-wheel PID with anti-windup by integral clamping."""

    def __init__(self, gains: PidGains, u_hi: float, u_lo: float):
        self.gains = gains
        self.u_hi = u_hi
        self.u_lo = u_lo
        self.integral = 0.0
        self.prev_error = 0.0
        self._primed = False

    def reset(self):
        self.integral = 0.0
        self.prev_error = 0.0
        self._primed = False

    def step(self, v_e: float, dt: float):
        """Advance one sample; returns (u_raw, u_sat)."""
        g = self.gains
        self.integral += v_e * dt
        clamp = g.integral_clamp / g.ki if g.ki > 0 else float("inf")
        self.integral = max(-clamp, min(clamp, self.integral))
        deriv = (v_e - self.prev_error) / dt if self._primed else 0.0
        self.prev_error = v_e
        self._primed = True
        u_raw = g.kp * v_e + g.ki * self.integral + g.kd * deriv
        u_sat, _, _ = saturate(u_raw, self.u_hi, self.u_lo)
        return u_raw, u_sat
