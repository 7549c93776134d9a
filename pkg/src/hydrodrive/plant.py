"""Continuous-time models of a slip-affected driven wheel and its hydraulic actuation.

Each wheel is a rigid body driven through a reduction gear by a hydraulic
motor whose torque follows the differential pressure across its ports. A
proportional valve meters flow into the motor lines from a constant-pressure
supply. Units are SI throughout:

- pressure: Pa, flow: m^3/s, torque: N*m, angular velocity: rad/s
- valve command / spool position: dimensionless, nominally in [-1, 1]

The wheel's linear acceleration is

    dv/dt = (r / J) * (tau_w - r*F_n - c*omega - f(omega) + d(t)) - s_dot(t)

with F_n the lumped normal/drag force, c viscous damping, f() smoothed
Coulomb friction, d(t) an additive torque disturbance and s_dot(t) the
lumped slip acceleration. The same expression grouped for control purposes:

    dv/dt = a1 * tau_w + G1(omega) + F1(t),   a1 = r / J

where G1 collects the known resistive terms (scaled by a1) and F1 lumps
every unknown: torque disturbance, slip, and model error.

The hydraulic side in pressure form:

    tau_m   = dp * (V_m / 2*pi) * eta_hm
    dp_rate = (gamma / V_m) * (Q - omega_m * (V_m / pi) * eta_vol)
    Q       = K_u * u * sqrt(2 * (p_s - sign(x_u) * dp + delta))

and, reduced to a single torque state,

    tau_m_rate = A * B(dp) * u - C_red * omega_m

where A = gamma*eta_hm*K_u / (2*pi) and C_red is the speed coefficient
obtained by exact reduction of the pressure-level model,
C_red = gamma*eta_hm*V_m*eta_vol / (2*pi^2). The commonly quoted grouping
C = gamma*V_m*eta_vol / pi is kept available as `speed_gain` but is NOT the
exact reduction (it differs by the constant factor eta_hm / (2*pi)); using
C_red is what makes the reduced and pressure-level forms agree identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import NonFiniteStateError, PressureDomainViolation

TWO_PI = 2.0 * math.pi

# Width of the tanh regularization of Coulomb friction, rad/s. A hard sign()
# would break fixed-step integration.
COULOMB_SMOOTHING_OMEGA = 0.01


def _require_finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise NonFiniteStateError(f"non-finite plant input: {values!r}")


@dataclass(frozen=True)
class WheelParams:
    """Physical parameters of one driven wheel.

    radius: m; inertia: kg*m^2; damping: N*m*s/rad; coulomb: N*m;
    normal_force: N (lumped rolling-drag equivalent force at the contact,
    entering as a constant resistive torque radius*normal_force);
    gear_ratio: motor speed / wheel speed, dimensionless.
    """

    radius: float = 0.854
    inertia: float = 100.0
    damping: float = 50.0
    coulomb: float = 20.0
    normal_force: float = 16309.125
    gear_ratio: float = 17.7

    def __post_init__(self):
        if self.radius <= 0 or self.inertia <= 0 or self.gear_ratio <= 0:
            raise ValueError("radius, inertia and gear_ratio must be > 0")
        if min(self.damping, self.coulomb, self.normal_force) < 0:
            raise ValueError("damping, coulomb and normal_force must be >= 0")

    @property
    def torque_gain(self) -> float:
        """Control gain a1 = radius / inertia, 1/(kg*m). Always recomputed."""
        return self.radius / self.inertia

    def with_mismatch(self, fraction: float) -> "WheelParams":
        """Deterministically perturbed copy standing in for the controller's
        nominal model. Inertia and Coulomb friction are overestimated,
        damping and normal force underestimated, each by `fraction`."""
        return WheelParams(
            radius=self.radius,
            inertia=self.inertia * (1.0 + fraction),
            damping=self.damping * (1.0 - fraction),
            coulomb=self.coulomb * (1.0 + fraction),
            normal_force=self.normal_force * (1.0 - fraction),
            gear_ratio=self.gear_ratio,
        )


@dataclass(frozen=True)
class WheelState:
    """Kinematic state of one wheel. The angular velocity is the single
    source of truth; linear velocity is always derived as radius*omega."""

    omega: float = 0.0

    def linear_velocity(self, params: WheelParams) -> float:
        return params.radius * self.omega


@dataclass(frozen=True)
class HydraulicParams:
    """Valve and motor parameters of one hydraulic drive.

    displacement: m^3/rev; bulk_modulus: Pa; efficiencies in (0, 1];
    flow_coeff: m^3/(s*sqrt(Pa)); pressures: Pa; guard_pressure: small
    positive offset keeping the orifice radicand away from zero.
    """

    displacement: float = 1.0e-4
    bulk_modulus: float = 1.0e9
    eta_hm: float = 0.9
    eta_vol: float = 0.95
    flow_coeff: float = 2.52e-7
    supply_pressure: float = 2.0e7
    tank_pressure: float = 0.0
    guard_pressure: float = 1.0e3

    def __post_init__(self):
        if self.displacement <= 0 or self.bulk_modulus <= 0 or self.flow_coeff <= 0:
            raise ValueError("displacement, bulk_modulus, flow_coeff must be > 0")
        if not (0.0 < self.eta_hm <= 1.0 and 0.0 < self.eta_vol <= 1.0):
            raise ValueError("efficiencies must lie in (0, 1]")
        if not (self.supply_pressure > self.tank_pressure >= 0.0):
            raise ValueError("need supply_pressure > tank_pressure >= 0")
        if self.guard_pressure <= 0:
            raise ValueError("guard_pressure must be > 0")

    @property
    def valve_gain(self) -> float:
        """A = gamma * eta_hm * K_u / (2*pi). Always recomputed."""
        return self.bulk_modulus * self.eta_hm * self.flow_coeff / TWO_PI

    @property
    def speed_gain(self) -> float:
        """C = gamma * V_m * eta_vol / pi (conventional grouping; see the
        module docstring for why the reduced model does not use it as-is)."""
        return self.bulk_modulus * self.displacement * self.eta_vol / math.pi

    @property
    def reduced_speed_coeff(self) -> float:
        """Exact speed coefficient of the reduced torque model,
        gamma * eta_hm * V_m * eta_vol / (2*pi^2) = speed_gain * eta_hm/(2*pi)."""
        return self.speed_gain * self.eta_hm / TWO_PI

    @property
    def torque_per_pressure(self) -> float:
        """Slope of motor torque vs differential pressure, N*m/Pa."""
        return self.displacement * self.eta_hm / TWO_PI

    @property
    def torque_ceiling(self) -> float:
        """Motor torque at which dp reaches the supply pressure."""
        return self.supply_pressure * self.torque_per_pressure


@dataclass(frozen=True)
class HydraulicState:
    """Snapshot of the actuation chain at one instant (for traces and
    diagnostics; the integrator carries only dp or tau_m)."""

    delta_p: float
    tau_m: float
    omega_m: float
    q: float
    x_u: float

    @staticmethod
    def from_pressure(h: HydraulicParams, delta_p: float, omega_m: float,
                      spool: float) -> "HydraulicState":
        q, _ = valve_flow_clamped(h, spool, delta_p, _sign(spool))
        return HydraulicState(
            delta_p=delta_p,
            tau_m=motor_torque_from_pressure(h, delta_p),
            omega_m=omega_m,
            q=q,
            x_u=spool,
        )


@dataclass(frozen=True)
class DisturbanceSample:
    """One instant of the lumped wheel disturbances.

    torque: additive shaft torque d(t), N*m (enters scaled by a1);
    slip_accel: lumped slip term s_dot(t), m/s^2 (enters with minus sign);
    extra_accel: optional additive model-error acceleration, m/s^2.
    """

    torque: float = 0.0
    slip_accel: float = 0.0
    extra_accel: float = 0.0

    def lumped_accel(self, params: WheelParams) -> float:
        """The unknown-term value F1 this sample contributes."""
        return params.torque_gain * self.torque - self.slip_accel + self.extra_accel


_EVENT_SHAPES = ("trapezoid", "halfsine", "rough")


@dataclass(frozen=True)
class DisturbanceEvent:
    """A scheduled disturbance burst on [start, end] seconds.

    amplitude carries the channel's unit (m/s^2 for slip events, N*m for
    torque events). Shapes: 'trapezoid' ramps over rise_fraction of the span
    at each end, 'halfsine' is one half sine arch, 'rough' is band-limited
    seeded noise under a trapezoidal envelope.
    """

    start: float
    end: float
    amplitude: float
    shape: str = "halfsine"
    rise_fraction: float = 0.1
    # populated lazily for 'rough'; (coeff, angular freq, phase) triples
    _rough: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError("event end must be after start")
        if self.shape not in _EVENT_SHAPES:
            raise ValueError(f"unknown event shape {self.shape!r}")
        if not (0.0 < self.rise_fraction <= 0.5):
            raise ValueError("rise_fraction must lie in (0, 0.5]")

    def _envelope(self, t: float) -> float:
        span = self.end - self.start
        rise = self.rise_fraction * span
        if t <= self.start or t >= self.end:
            return 0.0
        if t < self.start + rise:
            return (t - self.start) / rise
        if t > self.end - rise:
            return (self.end - t) / rise
        return 1.0

    def value(self, t: float) -> float:
        if t <= self.start or t >= self.end:
            return 0.0
        if self.shape == "halfsine":
            return self.amplitude * math.sin(
                math.pi * (t - self.start) / (self.end - self.start))
        if self.shape == "trapezoid":
            return self.amplitude * self._envelope(t)
        # rough: bounded sum of sinusoids, |noise| <= 1 by construction
        noise = 0.0
        for coeff, w, phase in self._rough:
            noise += coeff * math.sin(w * t + phase)
        return self.amplitude * self._envelope(t) * noise


def _with_rough_tables(events, rng):
    """Return events with seeded sinusoid tables attached to 'rough' shapes.

    Every event consumes the same number of draws so that editing one event
    does not re-randomize its neighbours.
    """
    out = []
    for ev in events:
        freqs = rng.uniform(0.2, 60.0, size=8)
        phases = rng.uniform(0.0, TWO_PI, size=8)
        weights = rng.uniform(0.3, 1.0, size=8)
        if ev.shape == "rough":
            coeffs = weights / weights.sum()
            table = tuple(
                (float(c), float(TWO_PI * f), float(p))
                for c, f, p in zip(coeffs, freqs, phases)
            )
            ev = DisturbanceEvent(ev.start, ev.end, ev.amplitude, ev.shape,
                                  ev.rise_fraction, _rough=table)
        out.append(ev)
    return out


@dataclass(frozen=True)
class DisturbanceModel:
    """Scheduled disturbances of one wheel: additive shaft torque events,
    slip events and a constant extra acceleration error term."""

    torque_events: tuple = ()
    slip_events: tuple = ()
    extra_accel: float = 0.0

    def seeded(self, rng) -> "DisturbanceModel":
        """Attach seeded noise tables to any 'rough' events."""
        return DisturbanceModel(
            torque_events=tuple(_with_rough_tables(self.torque_events, rng)),
            slip_events=tuple(_with_rough_tables(self.slip_events, rng)),
            extra_accel=self.extra_accel,
        )

    def sample(self, t: float) -> DisturbanceSample:
        d = sum(ev.value(t) for ev in self.torque_events)
        s = sum(ev.value(t) for ev in self.slip_events)
        sample = DisturbanceSample(torque=d, slip_accel=s,
                                   extra_accel=self.extra_accel)
        if not (math.isfinite(d) and math.isfinite(s)):
            raise NonFiniteStateError(f"non-finite disturbance at t={t}")
        return sample


def _sign(x: float) -> int:
    if x > 0.0:
        return 1
    if x < 0.0:
        return -1
    return 0


def smooth_coulomb(coulomb: float, omega: float) -> float:
    """Coulomb friction torque regularized with tanh; odd in omega."""
    return coulomb * math.tanh(omega / COULOMB_SMOOTHING_OMEGA)


def known_term_g1(params: WheelParams, state: WheelState) -> float:
    """Known resistive part of the wheel acceleration, m/s^2.

    G1 = a1 * (-radius*normal_force - damping*omega - coulomb_smooth(omega)).
    Evaluated with nominal (possibly mismatched) parameters this is exactly
    what the controller is given as its model term.
    """
    resist = (-params.radius * params.normal_force
              - params.damping * state.omega
              - smooth_coulomb(params.coulomb, state.omega))
    return params.torque_gain * resist


def wheel_acceleration(params: WheelParams, state: WheelState, tau_w: float,
                       dist: DisturbanceSample) -> float:
    """Linear acceleration of the wheel, m/s^2: a1*tau_w + G1 + F1."""
    _require_finite(tau_w, state.omega)
    return (params.torque_gain * tau_w
            + known_term_g1(params, state)
            + dist.lumped_accel(params))


def motor_torque_from_pressure(h: HydraulicParams, delta_p: float) -> float:
    """Motor torque from differential pressure: dp * V_m * eta_hm / (2*pi)."""
    return delta_p * h.torque_per_pressure


def pressure_from_motor_torque(h: HydraulicParams, tau_m: float) -> float:
    return tau_m / h.torque_per_pressure


def pressure_dependent_gain(h: HydraulicParams, delta_p: float,
                            spool_sign: int, clamp: bool = False):
    """Orifice gain B(dp) = sqrt(2*(p_s - sign(x_u)*dp + delta)).

    Returns (B, clamped). A negative radicand means the selected line would
    demand more than supply pressure; with clamp=False that raises
    PressureDomainViolation, with clamp=True the radicand is clamped to the
    guard offset and clamped=True is reported.
    """
    radicand = h.supply_pressure - spool_sign * delta_p + h.guard_pressure
    clamped = False
    if radicand < 0.0:
        if not clamp:
            raise PressureDomainViolation(radicand, delta_p, spool_sign)
        radicand = h.guard_pressure
        clamped = True
    b = math.sqrt(2.0 * radicand)
    if abs(delta_p) <= h.supply_pressure:
        # bound guaranteed on the physical pressure range
        assert b <= math.sqrt(2.0 * (2.0 * h.supply_pressure + h.guard_pressure)) * (1 + 1e-12)
    return b, clamped


def valve_flow(h: HydraulicParams, u: float, delta_p: float,
               spool_sign: int) -> float:
    """Load flow through the valve, m^3/s: K_u * u * B(dp)."""
    b, _ = pressure_dependent_gain(h, delta_p, spool_sign)
    return h.flow_coeff * u * b


def valve_flow_clamped(h: HydraulicParams, u: float, delta_p: float,
                       spool_sign: int):
    """Like valve_flow but clamping the radicand; returns (Q, clamped)."""
    b, clamped = pressure_dependent_gain(h, delta_p, spool_sign, clamp=True)
    return h.flow_coeff * u * b, clamped


def pressure_rate(h: HydraulicParams, q: float, omega_m: float) -> float:
    """Differential pressure rate, Pa/s:
    (gamma / V_m) * (Q - omega_m * (V_m / pi) * eta_vol)."""
    motor_flow = omega_m * (h.displacement / math.pi) * h.eta_vol
    return (h.bulk_modulus / h.displacement) * (q - motor_flow)


def torque_rate(h: HydraulicParams, u: float, delta_p: float, omega_m: float,
                spool_sign: int, clamp: bool = False):
    """Reduced motor torque dynamics, N*m/s:

        tau_m_rate = A * B(dp) * u - C_red * omega_m

    Identical (to rounding) to chaining the torque/pressure slope through
    the pressure rate and valve flow. Returns (rate, clamped).
    """
    b, clamped = pressure_dependent_gain(h, delta_p, spool_sign, clamp=clamp)
    return h.valve_gain * b * u - h.reduced_speed_coeff * omega_m, clamped
