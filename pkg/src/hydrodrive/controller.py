"""Per-wheel adaptive barrier controller.

The control law works from the measured wheel velocity and the reference
velocity alone; it never reads torque or pressure. Two cascaded stages:

1. A torque demand is formed from the velocity tracking error through a
   logarithmic barrier on the error, with an adaptive weight compensating
   unknown disturbance intensity:

       tau_w_cmd = -1/2 * (k1*v_e + k2*w_vel*b1) - k5 * b1 * G1^2
       b1 = v_e / (err_limit^2 - v_e^2)
       w_vel_rate = -k3*k4*w_vel + 1/2*k2*k3*b1^2

2. The valve command is formed the same way from the (gear-scaled) motor
   torque demand through a barrier on the torque bound:

       u = -1/2 * (k6*tau_m_cmd + k7*w_trq*b2)
       b2 = tau_m_cmd / (torque_limit^2 - tau_m_cmd^2)
       w_trq_rate = -k8*k9*w_trq + 1/2*k7*k8*b2^2

The barrier gradients b1, b2 blow up at the constraint boundaries; a guard
fires deterministically at a configurable fraction of each bound instead of
waiting for non-finite arithmetic, and latches the controller into a tripped
(emergency-stop) state that outputs zero until explicitly reset.

The commanded valve signal is saturated as Sat(u) = lam1*u + lam2 with

    lam1 = 1/(|u|+1) outside the band, 1 inside
    lam2 = chosen so the identity holds exactly on every branch

which keeps the saturated input analyzable while clamping to [u_lo, u_hi].

One controller instance owns one wheel's adaptive state; instances are
independent and may be advanced concurrently but never shared mutably.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import BarrierViolation

# Guard causes, also recorded in trip statuses.
CAUSE_WHEEL_VELOCITY = "wheel_velocity"
CAUSE_TRACKING_ERROR = "tracking_error"
CAUSE_MOTOR_TORQUE = "motor_torque_command"

DEFAULT_GUARD_MARGIN = 1.0e-3


@dataclass(frozen=True)
class Gains:
    """Positive design constants of the two control stages.

    velocity_tracking_gain and torque_tracking_gain are the primary
    stiffness/robustness knobs; the adapt_* triples (weight, rate, leak)
    parametrize each adaptive law; model_term_gain must dominate the
    configured bound on inertia/radius.
    """

    velocity_tracking_gain: float = 3.0
    velocity_adapt_weight: float = 1.0
    velocity_adapt_rate: float = 1.0
    velocity_adapt_leak: float = 1.0
    model_term_gain: float = 100.0
    torque_tracking_gain: float = 3.0
    torque_adapt_weight: float = 1.0
    torque_adapt_rate: float = 1.0
    torque_adapt_leak: float = 1.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value <= 0:
                raise ValueError(f"gain {name} must be > 0, got {value}")

    def validate_model_dominance(self, inertia_over_radius_bound: float):
        """model_term_gain must cover the declared bound on J/r."""
        if self.model_term_gain < inertia_over_radius_bound:
            raise ValueError(
                f"model_term_gain {self.model_term_gain} is below the declared "
                f"inertia/radius bound {inertia_over_radius_bound}")

    def validate_step(self, dt: float):
        """Explicit Euler keeps the adaptive weights positive only while
        dt * rate * leak < 1 in each law."""
        for rate, leak, label in (
            (self.velocity_adapt_rate, self.velocity_adapt_leak, "velocity"),
            (self.torque_adapt_rate, self.torque_adapt_leak, "torque"),
        ):
            if dt * rate * leak >= 1.0:
                raise ValueError(
                    f"dt*rate*leak = {dt * rate * leak} >= 1 in the {label} "
                    "adaptive law; reduce dt or the gains")


@dataclass(frozen=True)
class SafetyBounds:
    """Safety constraints on the wheel signals.

    velocity_limit bounds |v_w|, reference_limit bounds |v_d|, torque_limit
    bounds the motor torque demand, and [u_lo, u_hi] the valve signal. The
    tracking-error bound is not free: error_limit = velocity_limit -
    reference_limit by construction.
    """

    velocity_limit: float = 0.5
    reference_limit: float = 0.25
    torque_limit: float = 290.0
    u_hi: float = 0.44
    u_lo: float = -0.44

    def __post_init__(self):
        if not (0.0 < self.reference_limit < self.velocity_limit):
            raise ValueError("need 0 < reference_limit < velocity_limit")
        if self.torque_limit <= 0:
            raise ValueError("torque_limit must be > 0")
        if not (self.u_lo < 0.0 < self.u_hi):
            raise ValueError("need u_lo < 0 < u_hi")

    @property
    def error_limit(self) -> float:
        return self.velocity_limit - self.reference_limit


@dataclass(frozen=True)
class AdaptiveState:
    """Adaptive robustness weights of the two laws. Positive initialization
    guarantees positivity for all later steps (see Gains.validate_step)."""

    vel: float = 0.1
    trq: float = 0.1


@dataclass(frozen=True)
class BarrierMargins:
    """Remaining distance to each constraint, as fractions of the bound."""

    velocity: float
    tracking: float
    torque: float


@dataclass(frozen=True)
class BarrierStatus:
    state: str = "nominal"  # "nominal" | "tripped"
    cause: str = ""
    margin_at_trip: float = 0.0

    @property
    def tripped(self) -> bool:
        return self.state == "tripped"


@dataclass(frozen=True)
class ControlOutput:
    v_e: float
    omega_e: float
    grad_vel: float
    tau_w_cmd: float
    tau_m_cmd: float
    grad_trq: float
    u_raw: float
    u_sat: float
    lam1: float
    lam2: float
    margins: BarrierMargins


ZERO_OUTPUT = ControlOutput(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0,
                            BarrierMargins(1.0, 1.0, 1.0))


def tracking_error(v_w: float, v_d: float, radius: float):
    """Linear and angular velocity tracking errors (v_e, omega_e)."""
    v_e = v_w - v_d
    return v_e, v_e / radius


def guard_bound(x: float, bound: float, cause: str,
                guard_margin: float = DEFAULT_GUARD_MARGIN):
    """Trip deterministically at the guard fraction of a safety bound."""
    if abs(x) >= bound * (1.0 - guard_margin):
        raise BarrierViolation(cause, x, bound)


def barrier_gradient(x: float, bound: float, cause: str,
                     guard_margin: float = DEFAULT_GUARD_MARGIN) -> float:
    """Gradient factor x / (bound^2 - x^2) of the log barrier, guarded
    against the boundary singularity."""
    guard_bound(x, bound, cause, guard_margin)
    return x / (bound * bound - x * x)


def adaptation_rate(weight: float, gradient: float, adapt_weight: float,
                    adapt_rate: float, adapt_leak: float) -> float:
    """Rate of an adaptive weight: leakage decay plus gradient excitation,
    -rate*leak*w + 1/2*weight_gain*rate*gradient^2."""
    return (-adapt_rate * adapt_leak * weight
            + 0.5 * adapt_weight * adapt_rate * gradient * gradient)


def wheel_torque_command(gains: Gains, v_e: float, w_vel: float,
                         grad_vel: float, g1: float) -> float:
    """Torque demand at the wheel from the velocity stage, N*m."""
    return (-0.5 * (gains.velocity_tracking_gain * v_e
                    + gains.velocity_adapt_weight * w_vel * grad_vel)
            - gains.model_term_gain * grad_vel * g1 * g1)


def motor_torque_command(tau_w_cmd: float, gear_ratio: float) -> float:
    """Torque demand referred to the motor side of the reduction gear."""
    return tau_w_cmd / gear_ratio


def valve_command(gains: Gains, tau_m_cmd: float, w_trq: float,
                  grad_trq: float) -> float:
    """Raw (pre-saturation) valve signal from the torque stage."""
    return -0.5 * (gains.torque_tracking_gain * tau_m_cmd
                   + gains.torque_adapt_weight * w_trq * grad_trq)


def saturate(u_raw: float, u_hi: float, u_lo: float):
    """Clamp u_raw to [u_lo, u_hi] and decompose as Sat(u) = lam1*u + lam2.

    Returns (u_sat, lam1, lam2). lam2 is computed as u_sat - lam1*u_raw on
    the clamped branches so the identity holds to the last bit.
    """
    if u_raw >= u_hi:
        lam1 = 1.0 / (abs(u_raw) + 1.0)
        return u_hi, lam1, u_hi - lam1 * u_raw
    if u_raw <= u_lo:
        lam1 = 1.0 / (abs(u_raw) + 1.0)
        return u_lo, lam1, u_lo - lam1 * u_raw
    return u_raw, 1.0, 0.0


class WheelController:
    """Barrier-constrained adaptive velocity/valve controller for one wheel.

    Inputs per step are the measured wheel velocity, the reference velocity
    and the nominal model term G1; there is deliberately no torque or
    pressure feedback path. The adaptive weights advance by explicit Euler
    at the controller rate. A guard trip latches the controller: it outputs
    zero until reset() is called.
    """

    def __init__(self, gains: Gains, bounds: SafetyBounds,
                 adaptive: AdaptiveState = AdaptiveState(),
                 radius: float = 0.854, gear_ratio: float = 17.7,
                 guard_margin: float = DEFAULT_GUARD_MARGIN):
        if radius <= 0 or gear_ratio <= 0:
            raise ValueError("radius and gear_ratio must be > 0")
        if not (0.0 < guard_margin < 1.0):
            raise ValueError("guard_margin must lie in (0, 1)")
        if adaptive.vel < 0 or adaptive.trq < 0:
            raise ValueError("adaptive weights must be initialized >= 0")
        self.gains = gains
        self.bounds = bounds
        self.adaptive = adaptive
        self.radius = radius
        self.gear_ratio = gear_ratio
        self.guard_margin = guard_margin
        self.status = BarrierStatus()
        # strict positivity is guaranteed (and asserted) only for positive
        # initialization
        self._strict = adaptive.vel > 0.0 and adaptive.trq > 0.0

    def reset(self, adaptive: AdaptiveState | None = None):
        """Operator reset after an emergency-stop trip."""
        self.status = BarrierStatus()
        if adaptive is not None:
            self.adaptive = adaptive
            self._strict = adaptive.vel > 0.0 and adaptive.trq > 0.0

    def _trip(self, exc: BarrierViolation) -> ControlOutput:
        self.status = BarrierStatus("tripped", exc.cause, exc.margin_fraction)
        return ZERO_OUTPUT

    def step(self, v_w: float, v_d: float, g1_nominal: float,
             dt: float) -> ControlOutput:
        if dt <= 0.0:
            raise ValueError("dt must be > 0")
        if self.status.tripped:
            return ZERO_OUTPUT

        g = self.gains
        b = self.bounds
        try:
            guard_bound(v_w, b.velocity_limit, CAUSE_WHEEL_VELOCITY,
                        self.guard_margin)
            v_e, omega_e = tracking_error(v_w, v_d, self.radius)
            grad_vel = barrier_gradient(v_e, b.error_limit,
                                        CAUSE_TRACKING_ERROR,
                                        self.guard_margin)
            w_vel = self.adaptive.vel + dt * adaptation_rate(
                self.adaptive.vel, grad_vel, g.velocity_adapt_weight,
                g.velocity_adapt_rate, g.velocity_adapt_leak)
            tau_w_cmd = wheel_torque_command(g, v_e, w_vel, grad_vel,
                                             g1_nominal)
            tau_m_cmd = motor_torque_command(tau_w_cmd, self.gear_ratio)
            grad_trq = barrier_gradient(tau_m_cmd, b.torque_limit,
                                        CAUSE_MOTOR_TORQUE, self.guard_margin)
        except BarrierViolation as exc:
            return self._trip(exc)

        w_trq = self.adaptive.trq + dt * adaptation_rate(
            self.adaptive.trq, grad_trq, g.torque_adapt_weight,
            g.torque_adapt_rate, g.torque_adapt_leak)
        u_raw = valve_command(g, tau_m_cmd, w_trq, grad_trq)
        u_sat, lam1, lam2 = saturate(u_raw, b.u_hi, b.u_lo)

        self.adaptive = AdaptiveState(vel=w_vel, trq=w_trq)
        if self._strict:
            assert w_vel > 0.0 and w_trq > 0.0, "adaptive weight lost positivity"

        return ControlOutput(
            v_e=v_e,
            omega_e=omega_e,
            grad_vel=grad_vel,
            tau_w_cmd=tau_w_cmd,
            tau_m_cmd=tau_m_cmd,
            grad_trq=grad_trq,
            u_raw=u_raw,
            u_sat=u_sat,
            lam1=lam1,
            lam2=lam2,
            margins=BarrierMargins(
                velocity=1.0 - abs(v_w) / b.velocity_limit,
                tracking=1.0 - abs(v_e) / b.error_limit,
                torque=1.0 - abs(tau_m_cmd) / b.torque_limit,
            ),
        )
