"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with its measured margins (run with `pytest -s` to see them
inline).

Criterion 2 carries one expected-failure companion test: the claimed
non-negativity of the saturation offset lam2 is mathematically
unsatisfiable under the exact decomposition Sat(u) = lam1*u + lam2 with
lam1 = 1/(|u|+1) (see the xfail reason), so that single clause is encoded
as a strict xfail rather than silently weakened.
"""

import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.stats import spearmanr

from hydrodrive.config import ReferenceProfile
from hydrodrive.controller import WheelController, saturate
from hydrodrive.plant import (DisturbanceEvent, DisturbanceModel, valve_flow,
                              pressure_rate, torque_rate)
from hydrodrive.simulate import PlantState, WheelDrive, advance_plant, run_scenario
from hydrodrive.stability import (constraint_suite, envelope_fit, log_barrier,
                                  log_barrier_margin, lyapunov_decrease_check,
                                  measure_wheel_analysis)
from hydrodrive.trace import trace_to_text

LOG_SLACK = 1.0e-12


def announce(number, ok, detail):
    print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {number}: {detail}"


def eventless(cfg, duration, knots):
    wheels = tuple(replace(w, disturbance=DisturbanceModel())
                   for w in cfg.wheels)
    return replace(cfg, duration=duration, wheels=wheels,
                   reference=ReferenceProfile(knots=knots))


# -------------------------------------------------------------------- 1 ---


def test_criterion_1_constraint_suite(shipped_results):
    worst = []
    for name, res in shipped_results.items():
        assert not res.summary.tripped, f"{name} must end nominal"
        cfg_bounds_rows = constraint_suite(
            res.trace, _bounds_of(res))
        for row in cfg_bounds_rows:
            assert row.ok, (name, row)
        for w in res.summary.wheels:
            assert w.peak_v_w < 0.5
            assert w.peak_v_e < 0.25
            assert w.peak_tau_m_cmd < 290.0
            assert w.peak_u_sat <= 0.44
        worst.append((name, max(r.peak / r.bound for r in cfg_bounds_rows)))
        if res.summary.duration_recorded >= 119.9:
            assert res.summary.runtime_s < 30.0, (
                f"{name} took {res.summary.runtime_s:.1f} s")
    detail = "; ".join(f"{n}: worst peak/bound {m:.3f}" for n, m in worst)
    announce(1, True, f"all shipped scenarios nominal within bounds ({detail})")


def _bounds_of(res):
    from hydrodrive.report import config_from_trace
    return config_from_trace(res.trace).bounds


# -------------------------------------------------------------------- 2 ---


def test_criterion_2_saturation_identity():
    rng = np.random.default_rng(2024)
    hi, lo = 0.44, -0.44
    lam2_cap = max(abs(lo) + 1.0, abs(hi) + 1.0)
    worst_identity = 0.0
    lam2_min = float("inf")
    for u in rng.uniform(-10.0, 10.0, size=100_000):
        u = float(u)
        u_sat, lam1, lam2 = saturate(u, hi, lo)
        worst_identity = max(worst_identity, abs(u_sat - (lam1 * u + lam2)))
        assert 0.0 <= lam1 <= 1.0
        assert abs(lam2) <= lam2_cap
        lam2_min = min(lam2_min, lam2)
    assert worst_identity <= 1e-12
    announce(2, True,
             f"identity exact to {worst_identity:.1e}, lam1 in [0,1], "
             f"|lam2| <= {lam2_cap} over 1e5 draws "
             f"(min lam2 {lam2_min:.3f}; its sign clause is xfail, see "
             f"companion test)")


@pytest.mark.xfail(
    strict=True,
    reason="With the identity Sat(u) = lam1*u + lam2 exact and "
           "lam1 = 1/(|u|+1), the offset is forced to "
           "lam2 = Sat(u) - u/(|u|+1), which is negative on real inputs: "
           "u=+1.0 with u_hi=0.44 gives lam2 = 0.44 - 0.5 = -0.06, and "
           "u=-0.5 with u_lo=-0.44 gives lam2 = -0.107. A non-negative "
           "lam2 over u in [-10,10] is therefore unsatisfiable whenever "
           "|u_hi| < 1 or u_lo < 0; the clause is kept verbatim as a "
           "documented defect instead of being weakened (the magnitude "
           "bound |lam2| <= max(|u_lo|+1, |u_hi|+1) does hold and is "
           "asserted in the main criterion test).")
def test_criterion_2_lam2_nonnegative_clause():
    rng = np.random.default_rng(2024)
    for u in rng.uniform(-10.0, 10.0, size=100_000):
        _, _, lam2 = saturate(float(u), 0.44, -0.44)
        assert lam2 >= 0.0


# -------------------------------------------------------------------- 3 ---


def test_criterion_3_log_inequality(shipped_results):
    rng = np.random.default_rng(33)
    ratio = rng.uniform(-1.0, 1.0, size=1_000_000)
    ratio = ratio[np.abs(ratio) < 1.0 - 1e-9]
    margins = log_barrier_margin(ratio, 1.0)
    worst = float(np.min(margins))
    assert worst > -LOG_SLACK

    trace_worst = float("inf")
    n_checked = 0
    for name, res in shipped_results.items():
        bounds = _bounds_of(res)
        for j in range(len(res.trace.wheel_names)):
            for signal, bound in (("v_e", bounds.error_limit),
                                  ("tau_m_cmd", bounds.torque_limit)):
                x = res.trace.column(signal, j)
                m = log_barrier_margin(x, bound)
                trace_worst = min(trace_worst, float(np.min(m)))
                n_checked += len(m)
    assert trace_worst > -LOG_SLACK
    announce(3, True,
             f"1e6 random pairs worst margin {worst:.2e}; every shipped "
             f"trace step ({n_checked} samples) worst {trace_worst:.2e}")


# -------------------------------------------------------------------- 4 ---


def test_criterion_4_hydraulic_model_equivalence(exp1_cfg):
    h = exp1_cfg.wheels[0].hydraulics
    rng = np.random.default_rng(44)
    worst = 0.0
    for _ in range(10_000):
        dp = float(rng.uniform(-0.95, 0.95)) * h.supply_pressure
        u = float(rng.uniform(-1.5, 1.5))
        om = float(rng.uniform(-40.0, 40.0))
        sign = 1 if u > 0 else (-1 if u < 0 else 0)
        chained = pressure_rate(h, valve_flow(h, u, dp, sign),
                                om) * h.torque_per_pressure
        reduced, _ = torque_rate(h, u, dp, om, sign)
        scale = max(abs(chained), abs(reduced), 1e-9)
        worst = max(worst, abs(chained - reduced) / scale)
    assert worst < 1e-9
    announce(4, True, f"reduced vs chained torque rate agree to {worst:.2e} "
                      f"relative over 1e4 states")


# -------------------------------------------------------------------- 5 ---


def test_criterion_5_exponential_convergence(regulation_result):
    res = regulation_result
    worst_zeta = 0.0
    worst_rate = float("inf")
    bounds = _bounds_of(res)
    for j in range(4):
        theta = log_barrier(res.trace.column("v_e", j), bounds.error_limit)
        fit = envelope_fit(theta, res.trace.t)
        assert fit.valid
        assert fit.rate > 0.0
        assert fit.zeta <= 1e-3
        worst_zeta = max(worst_zeta, fit.zeta)
        worst_rate = min(worst_rate, fit.rate)
    announce("5a", True,
             f"regulation from 0.2 m/s: valid envelopes, min rate "
             f"{worst_rate:.3f} 1/s, max zeta {worst_zeta:.2e} <= 1e-3")


def _rough_cfg(base, amplitude, seed, duration=20.0):
    ev = DisturbanceEvent(start=1.0, end=duration - 1.0, amplitude=amplitude,
                          shape="rough", rise_fraction=0.05)
    wheels = tuple(replace(w, disturbance=DisturbanceModel(slip_events=(ev,)),
                           initial_velocity=0.25) for w in base.wheels)
    return replace(base, name=f"rough-{amplitude:.3f}", duration=duration,
                   seed=seed, wheels=wheels,
                   reference=ReferenceProfile(knots=((0.0, 0.25),)))


def _stationary_zeta(cfg, warmup_steps=2000):
    res = run_scenario(cfg)
    assert not res.summary.tripped
    theta = log_barrier(res.trace.column("v_e", 0)[warmup_steps:],
                        cfg.bounds.error_limit)
    return envelope_fit(theta, res.trace.t[warmup_steps:]).zeta


def test_criterion_5_residual_grows_with_slip(exp1_cfg):
    amps = np.geomspace(0.5, 4.0, 10)
    zetas = [_stationary_zeta(_rough_cfg(exp1_cfg, float(a), seed=21))
             for a in amps]
    rho = float(spearmanr(amps, zetas).statistic)
    assert rho > 0.9
    announce("5b", True,
             f"residual radius grows with slip amplitude: Spearman rho "
             f"{rho:.4f} over 10 amplitudes "
             f"(zeta {zetas[0]:.2e} .. {zetas[-1]:.2e})")


def test_criterion_5_doubling_never_shrinks_residual(exp1_cfg):
    holds = 0
    for seed in range(10):
        z1 = _stationary_zeta(_rough_cfg(exp1_cfg, 1.5, seed=300 + seed,
                                         duration=12.0))
        z2 = _stationary_zeta(_rough_cfg(exp1_cfg, 3.0, seed=300 + seed,
                                         duration=12.0))
        if z2 >= z1:
            holds += 1
    assert holds == 10
    announce("5c", True,
             "doubling the slip amplitude never decreased the fitted "
             "residual over a 10-seed set")


# -------------------------------------------------------------------- 6 ---


def test_criterion_6_storage_decrease(shipped_results):
    from hydrodrive.report import config_from_trace

    lines = []
    for name, res in shipped_results.items():
        cfg = config_from_trace(res.trace)
        worst_frac = 1.0
        for j in range(4):
            a = measure_wheel_analysis(res.trace, cfg, j)
            chk = lyapunov_decrease_check(a.v_bar, a.residual,
                                          a.constants.rate, res.trace.dt)
            assert chk.fraction_ok >= 0.999, (name, j, chk)
            worst_frac = min(worst_frac, chk.fraction_ok)
        lines.append(f"{name}: {worst_frac:.4%}")
    announce(6, True, "storage decrease satisfied at " + "; ".join(lines))


# -------------------------------------------------------------------- 7 ---


def test_criterion_7_controller_comparison(exp1_result, exp1_pid_result,
                                           hard_result, hard_pid_result):
    # standard slip scenario: the barrier controller beats PID wheel by wheel
    pairs = []
    for wb, wp in zip(exp1_result.summary.wheels,
                      exp1_pid_result.summary.wheels):
        assert wb.rms_v_e <= wp.rms_v_e, (wb.name, wb.rms_v_e, wp.rms_v_e)
        pairs.append(f"{wb.name} {wb.rms_v_e:.4f}<={wp.rms_v_e:.4f}")
    assert not exp1_result.summary.tripped

    # severe scenario: PID trips or degrades, the barrier controller tracks
    assert not hard_result.summary.tripped
    for w in hard_result.summary.wheels:
        assert w.rms_v_e <= 0.125
    pid_failed = hard_pid_result.summary.tripped or any(
        w.rms_v_e > 0.2 for w in hard_pid_result.summary.wheels)
    assert pid_failed
    announce(7, True,
             "rms per wheel " + ", ".join(pairs) +
             f"; severe scenario: barrier max rms "
             f"{max(w.rms_v_e for w in hard_result.summary.wheels):.4f} "
             f"<= 0.125 while pid tripped="
             f"{hard_pid_result.summary.tripped}")


# -------------------------------------------------------------------- 8 ---


def test_criterion_8_positivity_and_latching(shipped_results, hard_cfg,
                                             hard_pid_result):
    w_min = float("inf")
    for name, res in shipped_results.items():
        for j in range(4):
            w_min = min(w_min, float(np.min(res.trace.column("w_vel", j))),
                        float(np.min(res.trace.column("w_trq", j))))
    assert w_min > 0.0

    # a forced approach to the error bound trips within a single step and
    # latches at zero output
    ctrl = WheelController(hard_cfg.gains, hard_cfg.bounds,
                           hard_cfg.adaptive_init)
    out = ctrl.step(0.2498 - 0.1, -0.1, 0.0, 1e-3)
    assert ctrl.status.tripped and out.u_sat == 0.0
    assert ctrl.step(0.0, 0.0, 0.0, 1e-3).u_sat == 0.0

    # trips are deterministic across repeated runs
    again = run_scenario(replace(hard_cfg, controller="pid"))
    assert again.summary.steps_recorded == \
        hard_pid_result.summary.steps_recorded
    assert [w.trip_time for w in again.summary.wheels] == \
        [w.trip_time for w in hard_pid_result.summary.wheels]
    announce(8, True,
             f"adaptive weights stayed positive (min {w_min:.3e}); forced "
             f"approach trips in one step and latches; repeated trip at "
             f"step {again.summary.steps_recorded} is identical")


# -------------------------------------------------------------------- 9 ---


def test_criterion_9_integrator_order(exp1_cfg):
    # Richardson check of the plant integrator with the valve command held
    # (the discrete controller is a 1 kHz zero-order hold, so integration
    # order is defined for the plant rollout between controller updates)
    w = exp1_cfg.wheels[0]
    drive = WheelDrive(params=w.plant, hydraulics=w.hydraulics,
                       disturbance=DisturbanceModel(), model="pressure")

    def rollout(dt, T=0.5, spool=0.1):
        st = PlantState()
        for k in range(round(T / dt)):
            st, _ = advance_plant(drive, st, spool, k * dt, dt)
        return st.omega

    ref = rollout(1e-3 / 64)
    e1 = abs(rollout(1e-3) - ref)
    e2 = abs(rollout(5e-4) - ref)
    assert e2 > 0.0
    ratio = e1 / e2
    assert ratio >= 12.0
    announce(9, True, f"halving dt shrank the error by x{ratio:.1f} "
                      f"(e1={e1:.2e}, e2={e2:.2e})")


# ------------------------------------------------------------------- 10 ---


def test_criterion_10_determinism(exp1_cfg):
    cfg = eventless(exp1_cfg, 3.0,
                    ((0.0, 0.0), (1.0, 0.25), (3.0, 0.25)))
    a = trace_to_text(run_scenario(cfg).trace)
    b = trace_to_text(run_scenario(cfg).trace)
    c = trace_to_text(run_scenario(cfg, parallel=True).trace)
    assert a == b
    assert a == c
    announce(10, True, f"byte-identical traces ({len(a)} bytes) across "
                       f"repeated sequential and parallel runs")
