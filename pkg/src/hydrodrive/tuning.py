"""Gain auto-tuning against a probe scenario.

Procedure: the safety bounds come fixed from the configuration; the model
dominance gain is clamped to the declared inertia/radius bound; then the two
tracking gains ramp multiplicatively until the probe run meets the target
RMS velocity error, looping up to an iteration cap. The adaptive triples are
left alone unless convergence refinement is requested, in which case the
adaptation rates are doubled when doing so does not hurt the probe (their
effect is secondary).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .config import ScenarioConfig
from .controller import Gains
from .errors import TuningFailed
from .simulate import run_scenario


@dataclass(frozen=True)
class TuneStep:
    iteration: int
    gains: Gains
    rms: float
    tripped: bool


def _probe_rms(cfg: ScenarioConfig, gains: Gains) -> tuple:
    result = run_scenario(replace(cfg, gains=gains, controller="barrier"),
                          record=False)
    if result.summary.tripped or result.summary.aborted:
        return float("inf"), True
    return max(w.rms_v_e for w in result.summary.wheels), False


def auto_tune(cfg: ScenarioConfig, rms_target: float = 0.02,
              growth: float = 1.6, max_iters: int = 10,
              refine: bool = False):
    """Tune the tracking gains on the given probe scenario.

    Returns (gains, history). Raises TuningFailed (carrying the best gains
    seen) when the cap is reached without meeting the target.
    """
    if rms_target <= 0 or growth <= 1.0 or max_iters < 1:
        raise ValueError("need rms_target > 0, growth > 1, max_iters >= 1")

    gains = cfg.gains
    floor = cfg.inertia_over_radius_bound
    nominal_floor = max(
        w.nominal_params(cfg.nominal_mismatch).inertia /
        w.nominal_params(cfg.nominal_mismatch).radius for w in cfg.wheels)
    gains = replace(gains, model_term_gain=max(
        gains.model_term_gain, floor, nominal_floor))

    history = []
    best = (float("inf"), gains)
    for iteration in range(max_iters):
        rms, tripped = _probe_rms(cfg, gains)
        history.append(TuneStep(iteration=iteration, gains=gains, rms=rms,
                                tripped=tripped))
        if rms < best[0]:
            best = (rms, gains)
        if rms <= rms_target:
            if refine:
                gains = _refine_rates(cfg, gains, rms)
            return gains, history
        gains = replace(
            gains,
            velocity_tracking_gain=gains.velocity_tracking_gain * growth,
            torque_tracking_gain=gains.torque_tracking_gain * growth,
        )
    raise TuningFailed(
        f"no gain set met rms <= {rms_target} within {max_iters} iterations "
        f"(best rms {best[0]:.5g})", best_gains=best[1], best_rms=best[0])


def _refine_rates(cfg: ScenarioConfig, gains: Gains, base_rms: float) -> Gains:
    candidate = replace(
        gains,
        velocity_adapt_rate=gains.velocity_adapt_rate * 2.0,
        torque_adapt_rate=gains.torque_adapt_rate * 2.0,
    )
    try:
        candidate.validate_step(cfg.dt)
    except ValueError:
        return gains
    rms, tripped = _probe_rms(cfg, candidate)
    return candidate if (not tripped and rms <= base_rms) else gains
