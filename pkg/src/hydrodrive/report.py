"""Structured-text verification report over a recorded trace.

Every PASS/FAIL verdict in the report is backed by the numeric margin that
produced it, in the same line or table. The report covers: the safety
constraint suite, the barrier/quadratic-majorant inequality, the per-step
storage decrease, per-wheel and aggregate exponential envelope fits.
"""

from __future__ import annotations

import io

import numpy as np

from .config import parse_config_text
from .errors import ConfigError
from .stability import (constraint_suite, envelope_fit, log_barrier_margin,
                        lyapunov_decrease_check, measure_wheel_analysis,
                        vehicle_aggregate)

LOG_MARGIN_SLACK = 1.0e-12
DECREASE_FRACTION = 0.999


def config_from_trace(trace):
    if not trace.config_text:
        raise ConfigError("trace carries no embedded configuration")
    cfg = parse_config_text(trace.config_text, path="<trace header>")
    return cfg


def verify_trace(trace, zeta_max=None):
    """Run every check; returns (report_text, all_ok)."""
    cfg = config_from_trace(trace)
    out = io.StringIO()
    ok_all = True

    def emit(line=""):
        out.write(line + "\n")

    emit("verification report")
    emit(f"  scenario: {cfg.name}")
    emit(f"  config_hash: {trace.config_hash}")
    emit(f"  steps: {trace.n_steps}  dt: {trace.dt}  wheels: "
         f"{','.join(trace.wheel_names)}")
    tripped = bool(np.any(trace.signals["status"] > 0.0))
    emit(f"  final status: {'TRIPPED' if tripped else 'nominal'}")
    bad = trace.finite_check()
    if bad is not None:
        emit(f"  FAIL non-finite values in column {bad}")
        return out.getvalue(), False

    emit()
    emit("[1] safety constraint suite (peak |signal| vs bound)")
    for row in constraint_suite(trace, cfg.bounds):
        verdict = "PASS" if row.ok else "FAIL"
        ok_all &= row.ok
        emit(f"  {verdict} {row.wheel:>3} |{row.signal}| "
             f"peak={row.peak:.6g} bound={row.bound:.6g} "
             f"margin={row.margin:.6g}")

    emit()
    emit("[2] barrier value vs quadratic majorant (strict inequality)")
    for j, name in enumerate(trace.wheel_names):
        worst = float("inf")
        n = 0
        for signal, bound in (("v_e", cfg.bounds.error_limit),
                              ("tau_m_cmd", cfg.bounds.torque_limit)):
            x = trace.column(signal, j)
            x = x[np.abs(x) < bound]
            if len(x) == 0:
                continue
            worst = min(worst, float(np.min(log_barrier_margin(x, bound))))
            n += len(x)
        ok = worst > -LOG_MARGIN_SLACK
        ok_all &= ok
        emit(f"  {'PASS' if ok else 'FAIL'} {name:>3} worst margin "
             f"{worst:.6g} over {n} samples (slack {LOG_MARGIN_SLACK:g})")

    emit()
    emit("[3] storage decrease dV/dt <= -rate*V + residual(t) + slack")
    analyses = []
    for j, name in enumerate(trace.wheel_names):
        a = measure_wheel_analysis(trace, cfg, j)
        analyses.append(a)
        chk = lyapunov_decrease_check(a.v_bar, a.residual, a.constants.rate,
                                      trace.dt)
        ok = chk.fraction_ok >= DECREASE_FRACTION
        ok_all &= ok
        emit(f"  {'PASS' if ok else 'FAIL'} {name:>3} ok at "
             f"{chk.fraction_ok:.4%} of {chk.n_checked} steps, worst margin "
             f"{chk.worst_margin:.6g}, slack {chk.slack:.6g}, "
             f"rate {a.constants.rate:.6g}, offset {a.constants.offset:.6g}")

    emit()
    emit("[4] exponential envelope fits (c, rate, zeta, sup residual)")
    agg = vehicle_aggregate(analyses)
    for name, fit1, fit2 in agg.wheel_fits:
        for label, fit in (("tracking", fit1), ("torque", fit2)):
            ok = fit.valid
            ok_all &= ok
            note = "decaying" if fit.decays else "residual-ball"
            emit(f"  {'PASS' if ok else 'FAIL'} {name:>3} {label:<8} "
                 f"c={fit.c_bar:.3g} rate={fit.rate:.6g} zeta={fit.zeta:.6g} "
                 f"residual={fit.fit_residual:.3g} [{note}]")
            if zeta_max is not None and label == "tracking":
                okz = fit.zeta <= zeta_max
                ok_all &= okz
                emit(f"  {'PASS' if okz else 'FAIL'} {name:>3} zeta bound "
                     f"{fit.zeta:.6g} <= {zeta_max:g}")

    emit()
    emit("[5] four-wheel aggregate")
    fit = agg.aggregate_fit
    ok = fit.valid
    ok_all &= ok
    emit(f"  {'PASS' if ok else 'FAIL'} stacked-norm envelope "
         f"c={fit.c_bar:.3g} rate={fit.rate:.6g} zeta={fit.zeta:.6g} "
         f"residual={fit.fit_residual:.3g}")
    emit(f"  aggregate rate={agg.rate:.6g} offset={agg.offset:.6g} "
         f"V_total(start)={agg.v_total[0]:.6g} "
         f"V_total(end)={agg.v_total[-1]:.6g}")

    emit()
    emit(f"overall: {'PASS' if ok_all else 'FAIL'}")
    return out.getvalue(), ok_all


def comparison_table(rows, label_a, label_b) -> str:
    """Fixed-width table of per-wheel (rms error, peak torque) pairs."""
    out = io.StringIO()
    out.write(f"{'wheel':<6} {'criteria':<22} {label_a:>12} {label_b:>12}\n")
    for row in rows:
        a, b = row[label_a], row[label_b]
        out.write(f"{row['wheel']:<6} {'rms vel. error [m/s]':<22} "
                  f"{a['rms_v_e']:>12.5f} {b['rms_v_e']:>12.5f}\n")
        out.write(f"{'':<6} {'peak torque [N*m]':<22} "
                  f"{a['peak_tau_m']:>12.2f} {b['peak_tau_m']:>12.2f}\n")
        out.write(f"{'':<6} {'tripped':<22} "
                  f"{str(a['tripped']):>12} {str(b['tripped']):>12}\n")
    return out.getvalue()
