"""Post-hoc numerical verification of the exponential-stability machinery.

Everything here operates on immutable recorded traces. The chain:

- log-barrier values Theta = log(bound^2 / (bound^2 - x^2)) for the tracking
  error and the torque demand;
- the strict inequality Theta < x^2 / (bound^2 - x^2) that links the barrier
  value to its quadratic majorant (true for any in-barrier x != 0);
- composite storage functions V1, V2 combining a scaled barrier value with
  the squared adaptive-weight error, and their sum V;
- per-step decrease check dV/dt <= -rate*V + residual(t) + offset with the
  decay rate and offset computed from gains and measured disturbance bounds;
- an exponential envelope fit ||Theta(t)|| <= c*exp(-b*(t-t0))*||Theta(t0)||
  + zeta, minimizing the residual radius zeta first and then maximizing the
  rate b (the trajectory is uniformly exponentially bounded into a ball of
  radius zeta);
- the four-wheel aggregate: summed storage, the minimum wheel rate, the
  summed offsets, and envelope fits per wheel and for the stacked norm.

The disturbance-bound constants are unknowable in the field; here the plant
is fully known, so they are measured from the recorded runs: mu is the
supremum of the respective residual signal and m(t) its normalized profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controller import Gains, saturate
from .errors import BarrierViolation, ConfigError, NotExponentiallyBounded

_M_FLOOR = 1.0e-9  # keeps the normalized bound profiles strictly positive


@dataclass(frozen=True)
class StabilityAssumptions:
    """Constants of the stability argument for one wheel.

    a1_lower / a2_lower are committed positive lower bounds on the true
    control gains; mu1 / mu2 bound the two disturbance residuals with
    normalized profiles m1(t), m2(t) whose suprema are recorded; rho1..rho4
    are the free positive constants of the bounding argument (rho3, rho4
    are reserved by the argument but do not enter any computed quantity).
    """

    a1_lower: float
    a2_lower: float
    mu1: float
    mu2: float
    m1_bound: float = 1.0
    m2_bound: float = 1.0
    rho1: float = 1.0
    rho2: float = 1.0
    rho3: float = 1.0
    rho4: float = 1.0

    def __post_init__(self):
        if min(self.a1_lower, self.a2_lower) <= 0:
            raise ValueError("gain lower bounds must be > 0")
        if min(self.rho1, self.rho2, self.rho3, self.rho4) <= 0:
            raise ValueError("rho constants must be > 0")

    def weight_target_vel(self, gains: Gains) -> float:
        """Ideal velocity-loop weight: (2/k_w) * rho1 * mu1^2 / a1_lower."""
        return (2.0 / gains.velocity_adapt_weight) * (
            self.rho1 * self.mu1 ** 2 / self.a1_lower)

    def weight_target_trq(self, gains: Gains) -> float:
        """Ideal torque-loop weight: (2/k_w) * rho2 * mu2^2 / a2_lower^2.
        The square on the gain bound is deliberate (the two loops' targets
        are not symmetric)."""
        return (2.0 / gains.torque_adapt_weight) * (
            self.rho2 * self.mu2 ** 2 / self.a2_lower ** 2)


def log_barrier(x, bound):
    """Theta = log(bound^2 / (bound^2 - x^2)), >= 0, even in x.

    Evaluated as -log1p(-(x/bound)^2) so values near the barrier center keep
    full relative precision.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) >= bound):
        worst = float(np.max(np.abs(x)))
        raise BarrierViolation("log_barrier", worst, bound)
    z = (x / bound) ** 2
    out = -np.log1p(-z)
    return float(out) if out.ndim == 0 else out


def log_barrier_margin(x, bound):
    """Margin of the inequality Theta < x^2 / (bound^2 - x^2).

    Positive for every in-barrier x != 0 (analytically ~ Theta^2/2 near the
    center); a persistently non-positive margin signals a numerical fault,
    not a tight case. Both sides are formed from z = (x/bound)^2 via log1p
    so the cancellation near the center stays sign-correct.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) >= bound):
        worst = float(np.max(np.abs(x)))
        raise BarrierViolation("log_barrier", worst, bound)
    z = (x / bound) ** 2
    out = z / (1.0 - z) + np.log1p(-z)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class DecayConstants:
    """Decay rates and residual offsets of the two loops and their
    combination: rate = min of the per-loop rates, offset = sum of the
    per-loop offsets."""

    rate_vel: float
    offset_vel: float
    rate_trq: float
    offset_trq: float
    rate: float
    offset: float


def decay_constants(gains: Gains, assumptions: StabilityAssumptions) -> DecayConstants:
    t1 = assumptions.weight_target_vel(gains)
    t2 = assumptions.weight_target_trq(gains)
    rate_vel = min(assumptions.a1_lower * gains.velocity_tracking_gain,
                   gains.velocity_adapt_rate * gains.velocity_adapt_leak)
    rate_trq = min(assumptions.a2_lower * gains.torque_tracking_gain,
                   gains.torque_adapt_rate * gains.torque_adapt_leak)
    offset_vel = 0.5 * gains.velocity_adapt_leak * t1 * t1
    offset_trq = 0.5 * gains.torque_adapt_leak * t2 * t2
    return DecayConstants(
        rate_vel=rate_vel,
        offset_vel=offset_vel,
        rate_trq=rate_trq,
        offset_trq=offset_trq,
        rate=min(rate_vel, rate_trq),
        offset=offset_vel + offset_trq,
    )


@dataclass(frozen=True)
class BlfSample:
    """Storage-function values at one instant."""

    t: float
    theta1: float
    theta2: float
    q1: float
    q2: float
    v1: float
    v2: float
    v_bar: float


def blf_values(v_e, tau_m_cmd, w_vel, w_trq, error_limit, torque_limit,
               assumptions: StabilityAssumptions, gains: Gains,
               t: float = 0.0) -> BlfSample:
    """Storage values for a single recorded step."""
    theta1 = log_barrier(v_e, error_limit)
    theta2 = log_barrier(tau_m_cmd, torque_limit)
    dev1 = w_vel - assumptions.weight_target_vel(gains)
    dev2 = w_trq - assumptions.weight_target_trq(gains)
    v1 = theta1 / (2.0 * assumptions.a1_lower) + dev1 * dev1 / (
        2.0 * gains.velocity_adapt_rate)
    v2 = theta2 / (2.0 * assumptions.a2_lower) + dev2 * dev2 / (
        2.0 * gains.torque_adapt_rate)
    return BlfSample(
        t=t,
        theta1=float(theta1),
        theta2=float(theta2),
        q1=error_limit ** 2 - v_e ** 2,
        q2=torque_limit ** 2 - tau_m_cmd ** 2,
        v1=float(v1),
        v2=float(v2),
        v_bar=float(v1 + v2),
    )


# ---------------------------------------------------------------------------
# measured assumptions and series from a trace


@dataclass
class WheelAnalysis:
    """Per-wheel stability series derived from a trace."""

    name: str
    t: np.ndarray
    theta1: np.ndarray
    theta2: np.ndarray
    v_bar: np.ndarray
    residual: np.ndarray
    assumptions: StabilityAssumptions
    constants: DecayConstants
    m1: np.ndarray
    m2: np.ndarray


def lam1_of(u_raw, u_hi, u_lo):
    u_raw = np.asarray(u_raw, dtype=float)
    inside = (u_raw > u_lo) & (u_raw < u_hi)
    return np.where(inside, 1.0, 1.0 / (np.abs(u_raw) + 1.0))


def measure_wheel_analysis(trace, cfg, wheel_index: int,
                           rho=(1.0, 1.0, 1.0, 1.0)) -> WheelAnalysis:
    """Build measured assumptions and storage series for one wheel.

    The velocity-loop residual is the recorded unknown acceleration term;
    the torque-loop residual is whatever the model tau_cmd_rate = a2*u_raw
    does not explain of the recorded torque-demand derivative, with
    a2 = valve_gain * B(dp) * lam1 >= 0 taken from the recorded run.
    """
    wcfg = cfg.wheels[wheel_index]
    h = wcfg.hydraulics
    b = cfg.bounds
    col = lambda name: trace.column(name, wheel_index)

    t = trace.t
    v_e = col("v_e")
    tau_cmd = col("tau_m_cmd")
    u_raw = col("u_raw")
    u_sat = col("u_sat")
    delta_p = col("delta_p")
    w_vel = col("w_vel")
    w_trq = col("w_trq")
    f1_star = col("f1_star")
    if len(t) < 3:
        raise ConfigError("trace too short for stability analysis")

    spool_sign = np.sign(cfg.valve_polarity * u_sat)
    radicand = np.maximum(
        h.supply_pressure - spool_sign * delta_p + h.guard_pressure,
        h.guard_pressure)
    b_gain = np.sqrt(2.0 * radicand)
    a2_series = h.valve_gain * b_gain * lam1_of(u_raw, b.u_hi, b.u_lo)

    dt = trace.dt
    tau_cmd_rate = np.gradient(tau_cmd, dt)
    f2 = tau_cmd_rate - a2_series * u_raw

    mu1 = max(float(np.max(np.abs(f1_star))), _M_FLOOR)
    mu2 = max(float(np.max(np.abs(f2))), _M_FLOOR)
    m1 = np.maximum(np.abs(f1_star) / mu1, _M_FLOOR)
    m2 = np.maximum(np.abs(f2) / mu2, _M_FLOOR)

    assumptions = StabilityAssumptions(
        a1_lower=0.9 * wcfg.plant.torque_gain,
        a2_lower=0.9 * float(np.min(a2_series)),
        mu1=mu1,
        mu2=mu2,
        m1_bound=float(np.max(m1)),
        m2_bound=float(np.max(m2)),
        rho1=rho[0], rho2=rho[1], rho3=rho[2], rho4=rho[3],
    )
    gains = cfg.gains
    constants = decay_constants(gains, assumptions)

    theta1 = log_barrier(v_e, b.error_limit)
    theta2 = log_barrier(tau_cmd, b.torque_limit)
    dev1 = w_vel - assumptions.weight_target_vel(gains)
    dev2 = w_trq - assumptions.weight_target_trq(gains)
    v_bar = (theta1 / (2.0 * assumptions.a1_lower)
             + theta2 / (2.0 * assumptions.a2_lower)
             + dev1 * dev1 / (2.0 * gains.velocity_adapt_rate)
             + dev2 * dev2 / (2.0 * gains.torque_adapt_rate))
    residual = (0.25 * (m1 * m1 / assumptions.rho1 + m2 * m2 / assumptions.rho2)
                + constants.offset)

    return WheelAnalysis(
        name=trace.wheel_names[wheel_index],
        t=t, theta1=theta1, theta2=theta2, v_bar=v_bar,
        residual=residual, assumptions=assumptions, constants=constants,
        m1=m1, m2=m2,
    )


# ---------------------------------------------------------------------------
# per-step decrease check


@dataclass(frozen=True)
class DecreaseCheck:
    fraction_ok: float
    worst_margin: float
    slack: float
    n_checked: int

    @property
    def passed(self) -> bool:
        return self.fraction_ok >= 0.999


def lyapunov_decrease_check(v_bar, residual, rate, dt) -> DecreaseCheck:
    """Central-difference check of dV/dt <= -rate*V + residual + slack.

    The slack 10*dt*max|d2V/dt2| absorbs the discretization error of the
    finite-difference derivative; a persistent violation beyond it signals
    either an over-optimistic assumptions set or a controller defect.
    """
    v_bar = np.asarray(v_bar, dtype=float)
    residual = np.asarray(residual, dtype=float)
    if len(v_bar) < 3:
        raise ValueError("need at least 3 samples")
    vdot = (v_bar[2:] - v_bar[:-2]) / (2.0 * dt)
    vddot = (v_bar[2:] - 2.0 * v_bar[1:-1] + v_bar[:-2]) / (dt * dt)
    slack = 10.0 * dt * float(np.max(np.abs(vddot)))
    bound = -rate * v_bar[1:-1] + residual[1:-1] + slack
    margin = bound - vdot
    return DecreaseCheck(
        fraction_ok=float(np.mean(margin >= 0.0)),
        worst_margin=float(np.min(margin)),
        slack=slack,
        n_checked=len(margin),
    )


# ---------------------------------------------------------------------------
# exponential envelope fitting


@dataclass(frozen=True)
class EnvelopeFit:
    """Envelope theta(t) <= c_bar * exp(-rate*(t-t0)) * theta(t0) + zeta.

    Valid iff the envelope dominates pointwise (fit_residual <= 0) with a
    positive rate. decays is a classification flag: the fit is useful as a
    decay certificate only when zeta is small against the series scale
    (a fluctuation-dominated series yields zeta at its own scale, which is
    the residual-ball radius, not a defect).
    """

    c_bar: float
    rate: float
    zeta: float
    fit_residual: float
    theta0: float
    scale: float

    @property
    def valid(self) -> bool:
        return self.rate > 0.0 and self.fit_residual <= 1e-12 * max(self.scale, 1.0)

    @property
    def decays(self) -> bool:
        return self.zeta < 0.5 * self.scale if self.scale > 0 else True


def envelope_fit(theta, t) -> EnvelopeFit:
    """Fit (c, rate, zeta) minimizing zeta, then maximizing the rate.

    c is anchored at the initial point (c = 1). zeta(rate) is the smallest
    residual radius making the envelope dominate pointwise; it is
    nondecreasing in the rate, so the minimum lives at the smallest rate
    considered and the reported rate is the largest one still achieving
    that minimum (within a scale tolerance), located by grid plus bisection.
    The rate grid spans "barely decays over the window" to "decays within a
    few samples".
    """
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(t, dtype=float)
    if theta.shape != t.shape:
        raise ValueError("theta and t must have equal shapes")
    if len(theta) < 100:
        raise ValueError("need at least 100 samples to fit an envelope")
    if np.any(theta < 0.0) or not np.all(np.isfinite(theta)):
        raise ValueError("theta series must be finite and non-negative")

    tau = t - t[0]
    span = float(tau[-1])
    dt_med = float(np.median(np.diff(tau)))
    theta0 = float(theta[0])
    scale = float(np.max(theta))
    if scale <= 0.0:
        return EnvelopeFit(c_bar=1.0, rate=1.0 / max(span, 1.0), zeta=0.0,
                           fit_residual=0.0, theta0=0.0, scale=0.0)

    b_min = 5.0 / span
    b_max = max(0.2 / dt_med, 10.0 * b_min)

    def zeta_of(rate):
        deficit = theta - theta0 * np.exp(-rate * tau)
        return max(0.0, float(np.max(deficit)))

    grid = np.geomspace(b_min, b_max, 60)
    zetas = [zeta_of(b) for b in grid]
    z_min = min(zetas)
    tol = 1e-15 + 1e-12 * scale

    feasible = [b for b, z in zip(grid, zetas) if z <= z_min + tol]
    lo = max(feasible)
    hi_candidates = [b for b in grid if b > lo]
    if hi_candidates:
        hi = min(hi_candidates)
        for _ in range(60):
            mid = math.sqrt(lo * hi)
            if zeta_of(mid) <= z_min + tol:
                lo = mid
            else:
                hi = mid
    rate = lo
    zeta = zeta_of(rate)
    envelope = theta0 * np.exp(-rate * tau) + zeta
    return EnvelopeFit(c_bar=1.0, rate=rate, zeta=zeta,
                       fit_residual=float(np.max(theta - envelope)),
                       theta0=theta0, scale=scale)


def require_exponential_envelope(fit: EnvelopeFit, zeta_max: float) -> EnvelopeFit:
    """Raise unless the fit certifies exponential decay into a ball no
    larger than zeta_max."""
    if not fit.valid or fit.zeta > zeta_max:
        raise NotExponentiallyBounded(
            f"no valid exponential envelope with zeta <= {zeta_max} "
            f"(rate={fit.rate:.4g}, zeta={fit.zeta:.4g}, "
            f"residual={fit.fit_residual:.4g})")
    return fit


# ---------------------------------------------------------------------------
# four-wheel aggregation


@dataclass
class VehicleAggregate:
    v_total: np.ndarray
    rate: float
    offset: float
    wheel_fits: list
    aggregate_fit: EnvelopeFit


def vehicle_aggregate(analyses) -> VehicleAggregate:
    """Aggregate the per-wheel storage: summed V, the minimum wheel rate,
    summed offsets, envelope fits per wheel barrier series and for the
    stacked norm across all wheels."""
    if not analyses:
        raise ConfigError("no wheel analyses given")
    n = len(analyses[0].t)
    for a in analyses:
        if len(a.t) != n:
            raise ConfigError(
                f"trace length mismatch across wheels: {len(a.t)} != {n}")
    t = analyses[0].t
    v_total = np.sum([a.v_bar for a in analyses], axis=0)
    rate = min(a.constants.rate for a in analyses)
    offset = sum(a.constants.offset for a in analyses)
    wheel_fits = [
        (a.name, envelope_fit(a.theta1, t), envelope_fit(a.theta2, t))
        for a in analyses
    ]
    stacked = np.sqrt(np.sum(
        [a.theta1 ** 2 + a.theta2 ** 2 for a in analyses], axis=0))
    return VehicleAggregate(
        v_total=v_total,
        rate=rate,
        offset=offset,
        wheel_fits=wheel_fits,
        aggregate_fit=envelope_fit(stacked, t),
    )


# ---------------------------------------------------------------------------
# safety-constraint suite


@dataclass(frozen=True)
class ConstraintRow:
    wheel: str
    signal: str
    peak: float
    bound: float
    strict: bool  # strict inequality vs <=

    @property
    def ok(self) -> bool:
        return self.peak < self.bound if self.strict else self.peak <= self.bound

    @property
    def margin(self) -> float:
        return self.bound - self.peak


def constraint_suite(trace, bounds) -> list:
    """Peak |signal| vs safety bound for every wheel of a trace."""
    rows = []
    for j, name in enumerate(trace.wheel_names):
        pairs = (
            ("v_w", bounds.velocity_limit, True),
            ("v_e", bounds.error_limit, True),
            ("tau_m_cmd", bounds.torque_limit, True),
            ("u_sat", max(abs(bounds.u_hi), abs(bounds.u_lo)), False),
        )
        for signal, bound, strict in pairs:
            peak = float(np.max(np.abs(trace.column(signal, j))))
            rows.append(ConstraintRow(wheel=name, signal=signal, peak=peak,
                                      bound=bound, strict=strict))
    return rows
