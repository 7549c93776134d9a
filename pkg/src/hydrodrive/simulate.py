"""Deterministic fixed-step closed-loop simulation of four driven wheels.

Each wheel couples the hydraulic actuation model to the wheel motion model
and closes the loop with either the barrier controller or the PID baseline.
The plant advances by explicit RK4 (optionally substepped) while the valve
command is held over the controller period; controller adaptive states
advance by explicit Euler at the controller rate, which is the product being
simulated rather than an ODE to resolve finely.

Valve wiring: the controllers output u_sat; the spool input of the plant is
valve_polarity * u_sat. With the default polarity of -1 the control laws'
negative feedback through the wheel loop is stabilizing (commissioning
convention; flip the polarity and the loop runs away, exactly as a machine
with two swapped valve wires would).

Wheels are independent unless the load-coupling hook is enabled; the hook
only reads the previous step's slip samples, so sequential and parallel
execution produce byte-identical traces.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import plant as pl
from .config import ScenarioConfig, config_hash, serialize_config
from .controller import WheelController
from .errors import NonFiniteStateError
from .pid import PidController
from .trace import SIGNAL_NAMES, SimTrace


@dataclass(frozen=True)
class WheelDrive:
    """Immutable plant bundle of one wheel (true parameters)."""

    params: pl.WheelParams
    hydraulics: pl.HydraulicParams
    disturbance: pl.DisturbanceModel
    model: str = "pressure"  # "pressure" | "reduced"


@dataclass(frozen=True)
class PlantState:
    """omega is the wheel angular velocity; hyd is the hydraulic state
    variable: differential pressure (pressure model) or motor torque
    (reduced model)."""

    omega: float = 0.0
    hyd: float = 0.0


def motor_torque_of(drive: WheelDrive, state: PlantState) -> float:
    if drive.model == "pressure":
        return pl.motor_torque_from_pressure(drive.hydraulics, state.hyd)
    return state.hyd


def delta_p_of(drive: WheelDrive, state: PlantState) -> float:
    if drive.model == "pressure":
        return state.hyd
    return pl.pressure_from_motor_torque(drive.hydraulics, state.hyd)


def plant_rhs(drive: WheelDrive, omega: float, hyd: float, spool: float,
              t: float, normal_scale: float = 1.0):
    """Time derivative of (omega, hyd) with the spool held; returns
    (domega, dhyd, clamped)."""
    params = drive.params
    if normal_scale != 1.0:
        params = replace(params, normal_force=params.normal_force * normal_scale)
    h = drive.hydraulics
    spool_sign = 1 if spool > 0.0 else (-1 if spool < 0.0 else 0)
    omega_m = params.gear_ratio * omega

    if drive.model == "pressure":
        tau_m = pl.motor_torque_from_pressure(h, hyd)
        q, clamped = pl.valve_flow_clamped(h, spool, hyd, spool_sign)
        dhyd = pl.pressure_rate(h, q, omega_m)
    else:
        tau_m = hyd
        dp = pl.pressure_from_motor_torque(h, hyd)
        dhyd, clamped = pl.torque_rate(h, spool, dp, omega_m, spool_sign,
                                       clamp=True)

    dist = drive.disturbance.sample(t)
    vdot = pl.wheel_acceleration(params, pl.WheelState(omega),
                                 params.gear_ratio * tau_m, dist)
    return vdot / params.radius, dhyd, clamped


def advance_plant(drive: WheelDrive, state: PlantState, spool: float,
                  t: float, dt: float, substeps: int = 1):
    """One RK4 step (optionally substepped) with the valve command held.
    Returns (new_state, clamp_count)."""
    omega, hyd = state.omega, state.hyd
    clamps = 0
    h = dt / substeps
    for i in range(substeps):
        t0 = t + i * h
        k1o, k1h, c1 = plant_rhs(drive, omega, hyd, spool, t0)
        k2o, k2h, c2 = plant_rhs(drive, omega + 0.5 * h * k1o,
                                 hyd + 0.5 * h * k1h, spool, t0 + 0.5 * h)
        k3o, k3h, c3 = plant_rhs(drive, omega + 0.5 * h * k2o,
                                 hyd + 0.5 * h * k2h, spool, t0 + 0.5 * h)
        k4o, k4h, c4 = plant_rhs(drive, omega + h * k3o, hyd + h * k3h,
                                 spool, t0 + h)
        omega += (h / 6.0) * (k1o + 2.0 * k2o + 2.0 * k3o + k4o)
        hyd += (h / 6.0) * (k1h + 2.0 * k2h + 2.0 * k3h + k4h)
        clamps += int(c1) + int(c2) + int(c3) + int(c4)
    if not (math.isfinite(omega) and math.isfinite(hyd)):
        raise NonFiniteStateError(
            f"plant state diverged at t={t:.6g}: omega={omega}, hyd={hyd}")
    return PlantState(omega=omega, hyd=hyd), clamps


def integrate_step(drives, states, spools, t, dt, substeps=1,
                   normal_scales=None):
    """Advance every wheel by one step; wheels are independent."""
    out = []
    clamps = 0
    for j, (drive, state, spool) in enumerate(zip(drives, states, spools)):
        if normal_scales is not None and normal_scales[j] != 1.0:
            drive = replace(drive, params=replace(
                drive.params,
                normal_force=drive.params.normal_force * normal_scales[j]))
        st, c = advance_plant(drive, state, spool, t, dt, substeps)
        out.append(st)
        clamps += c
    return out, clamps


# ---------------------------------------------------------------------------
# scenario runner


@dataclass
class WheelSummary:
    name: str
    rms_v_e: float = 0.0
    peak_v_e: float = 0.0
    peak_v_w: float = 0.0
    peak_tau_m_cmd: float = 0.0
    peak_tau_m: float = 0.0
    peak_u_sat: float = 0.0
    f1_star_sup: float = 0.0
    clamp_events: int = 0
    tripped: bool = False
    trip_cause: str = ""
    trip_time: float = float("nan")


@dataclass
class ScenarioSummary:
    name: str
    config_hash: str
    controller: str
    steps_recorded: int
    duration_recorded: float
    tripped: bool
    aborted: bool
    runtime_s: float
    wheels: list


@dataclass
class SimResult:
    trace: SimTrace
    summary: ScenarioSummary


class _WheelRunner:
    """Mutable per-wheel loop state: one owner per wheel per step."""

    def __init__(self, cfg: ScenarioConfig, wcfg, index: int):
        self.name = wcfg.name
        rng = np.random.default_rng([cfg.seed, index])
        self.drive = WheelDrive(
            params=wcfg.plant,
            hydraulics=wcfg.hydraulics,
            disturbance=wcfg.disturbance.seeded(rng),
            model=cfg.hydraulic_model,
        )
        self.nominal = wcfg.nominal_params(cfg.nominal_mismatch)
        self.state = PlantState(omega=wcfg.initial_velocity / wcfg.plant.radius)
        self.polarity = float(cfg.valve_polarity)
        self.kind = cfg.controller
        self.bounds = cfg.bounds
        self.guard = cfg.guard_margin
        if self.kind == "barrier":
            self.controller = WheelController(
                cfg.gains, cfg.bounds, cfg.adaptive_init,
                radius=wcfg.plant.radius, gear_ratio=wcfg.plant.gear_ratio,
                guard_margin=cfg.guard_margin)
        else:
            self.controller = PidController(cfg.pid, cfg.bounds.u_hi,
                                            cfg.bounds.u_lo)
            self.pid_tripped = False
            self.pid_cause = ""
        self.summary = WheelSummary(name=self.name)
        self._sq_err = 0.0
        self._n = 0

    @property
    def tripped(self) -> bool:
        if self.kind == "barrier":
            return self.controller.status.tripped
        return self.pid_tripped

    @property
    def trip_cause(self) -> str:
        if self.kind == "barrier":
            return self.controller.status.cause
        return self.pid_cause

    def _supervise_pid(self, v_w, v_e, tau_m):
        b = self.bounds
        g = 1.0 - self.guard
        for value, bound, cause in (
                (v_w, b.velocity_limit, "wheel_velocity"),
                (v_e, b.error_limit, "tracking_error"),
                (tau_m, b.torque_limit, "motor_torque")):
            if abs(value) >= bound * g:
                self.pid_tripped = True
                self.pid_cause = cause
                return True
        return False

    def step(self, t: float, dt: float, v_d: float, v_d_slope: float,
             substeps: int, normal_scale: float):
        drive = self.drive
        params = drive.params
        if normal_scale != 1.0:
            drive = replace(drive, params=replace(
                params, normal_force=params.normal_force * normal_scale))
            params = drive.params

        omega = self.state.omega
        v_w = params.radius * omega
        tau_m = motor_torque_of(drive, self.state)
        delta_p = delta_p_of(drive, self.state)

        dist = drive.disturbance.sample(t)
        g1_true = pl.known_term_g1(params, pl.WheelState(omega))
        g1_nom = pl.known_term_g1(self.nominal, pl.WheelState(omega))
        f1 = dist.lumped_accel(params) + (g1_true - g1_nom)
        f1_star = f1 - v_d_slope

        if self.kind == "barrier":
            out = self.controller.step(v_w, v_d, g1_nom, dt)
            v_e = v_w - v_d
            u_raw, u_sat = out.u_raw, out.u_sat
            tau_w_cmd, tau_m_cmd = out.tau_w_cmd, out.tau_m_cmd
            w_vel, w_trq = self.controller.adaptive.vel, self.controller.adaptive.trq
        else:
            v_e = v_w - v_d
            if self.pid_tripped or self._supervise_pid(v_w, v_e, tau_m):
                u_raw = u_sat = 0.0
            else:
                u_raw, u_sat = self.controller.step(v_e, dt)
            tau_w_cmd = tau_m_cmd = 0.0
            w_vel = w_trq = 0.0

        spool = self.polarity * u_sat
        new_state, clamps = advance_plant(drive, self.state, spool, t, dt,
                                          substeps)
        self.state = new_state

        s = self.summary
        s.peak_v_e = max(s.peak_v_e, abs(v_e))
        s.peak_v_w = max(s.peak_v_w, abs(v_w))
        s.peak_tau_m_cmd = max(s.peak_tau_m_cmd, abs(tau_m_cmd))
        s.peak_tau_m = max(s.peak_tau_m, abs(tau_m))
        s.peak_u_sat = max(s.peak_u_sat, abs(u_sat))
        s.f1_star_sup = max(s.f1_star_sup, abs(f1_star))
        s.clamp_events += clamps
        self._sq_err += v_e * v_e
        self._n += 1
        if self.tripped and not s.tripped:
            s.tripped = True
            s.trip_cause = self.trip_cause
            s.trip_time = t

        return (v_d, v_w, v_e, omega, tau_m, delta_p, tau_w_cmd, tau_m_cmd,
                u_raw, u_sat, w_vel, w_trq,
                1.0 if self.tripped else 0.0,
                dist.slip_accel, dist.torque, f1_star, float(clamps > 0))

    def finish(self) -> WheelSummary:
        self.summary.rms_v_e = math.sqrt(self._sq_err / max(self._n, 1))
        return self.summary


def run_scenario(cfg: ScenarioConfig, record: bool = True,
                 parallel: bool = False) -> SimResult:
    """Run one closed-loop scenario.

    With record=False only the summary is produced (used by tuning probes).
    Identical configurations yield byte-identical traces, sequential or
    parallel.
    """
    started = time.perf_counter()
    runners = [_WheelRunner(cfg, w, i) for i, w in enumerate(cfg.wheels)]
    n_steps = cfg.steps
    n_wheels = len(runners)
    chash = config_hash(cfg)

    data = None
    if record:
        data = {name: np.empty((n_steps, n_wheels)) for name in SIGNAL_NAMES}
        tgrid = np.empty(n_steps)

    prev_slip = [0.0] * n_wheels
    pool = ThreadPoolExecutor(max_workers=n_wheels) if parallel else None
    aborted = False
    recorded = 0
    try:
        for k in range(n_steps):
            t = k * cfg.dt
            v_d = cfg.reference.value(t)
            v_d_slope = cfg.reference.slope(t)

            if cfg.coupling.enabled:
                mean_slip = sum(abs(x) for x in prev_slip) / n_wheels
                scales = [max(0.0, 1.0 + cfg.coupling.gain *
                              (mean_slip - abs(x))) for x in prev_slip]
            else:
                scales = [1.0] * n_wheels

            def one(j):
                return runners[j].step(t, cfg.dt, v_d, v_d_slope,
                                       cfg.plant_substeps, scales[j])

            try:
                if pool is not None:
                    rows = list(pool.map(one, range(n_wheels)))
                else:
                    rows = [one(j) for j in range(n_wheels)]
            except NonFiniteStateError:
                aborted = True
                break

            if record:
                tgrid[k] = t
                for j, row in enumerate(rows):
                    for name, value in zip(SIGNAL_NAMES, row):
                        data[name][k, j] = value
            recorded = k + 1
            prev_slip = [row[13] for row in rows]

            if cfg.stop_on_trip and any(r.tripped for r in runners):
                break
    finally:
        if pool is not None:
            pool.shutdown()

    wheel_summaries = [r.finish() for r in runners]
    if record:
        trace = SimTrace(
            config_hash=chash,
            dt=cfg.dt,
            wheel_names=tuple(r.name for r in runners),
            t=tgrid[:recorded].copy(),
            signals={k: v[:recorded].copy() for k, v in data.items()},
            config_text=serialize_config(cfg),
        )
    else:
        trace = SimTrace(config_hash=chash, dt=cfg.dt,
                         wheel_names=tuple(r.name for r in runners),
                         t=np.empty(0), signals={}, config_text="")

    summary = ScenarioSummary(
        name=cfg.name,
        config_hash=chash,
        controller=cfg.controller,
        steps_recorded=recorded,
        duration_recorded=recorded * cfg.dt,
        tripped=any(w.tripped for w in wheel_summaries),
        aborted=aborted,
        runtime_s=time.perf_counter() - started,
        wheels=wheel_summaries,
    )
    return SimResult(trace=trace, summary=summary)


def compare_controllers(cfg_a: ScenarioConfig, cfg_b: ScenarioConfig):
    """Run two configurations that differ only in the controller and return
    per-wheel (rms error, peak plant torque) rows for each."""
    _require_same_plant(cfg_a, cfg_b)
    res_a = run_scenario(cfg_a)
    res_b = run_scenario(cfg_b)
    rows = []
    for wa, wb in zip(res_a.summary.wheels, res_b.summary.wheels):
        rows.append({
            "wheel": wa.name,
            cfg_a.controller: {"rms_v_e": wa.rms_v_e,
                               "peak_tau_m": wa.peak_tau_m,
                               "tripped": wa.tripped},
            cfg_b.controller: {"rms_v_e": wb.rms_v_e,
                               "peak_tau_m": wb.peak_tau_m,
                               "tripped": wb.tripped},
        })
    return rows, res_a, res_b


def _require_same_plant(cfg_a, cfg_b):
    from .errors import ConfigError

    neutral_a = replace(cfg_a, controller="x", name="x", pid=cfg_b.pid)
    neutral_b = replace(cfg_b, controller="x", name="x", pid=cfg_b.pid)
    if config_hash(neutral_a) != config_hash(neutral_b):
        raise ConfigError(
            "comparison requires identical plant/disturbance configurations "
            "(only the controller selection and PID gains may differ)")
