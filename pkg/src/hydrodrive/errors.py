"""Exception types shared across the package."""

from __future__ import annotations


class HydrodriveError(Exception):
    """Base class for all package errors."""


class ConfigError(HydrodriveError):
    """Scenario configuration is malformed or violates an invariant."""

    def __init__(self, message, *, path=None, context=None):
        loc = ""
        if path is not None:
            loc += f"{path}: "
        if context is not None:
            loc += f"[{context}] "
        super().__init__(loc + message)
        self.path = path
        self.context = context


class PressureDomainViolation(HydrodriveError):
    """Valve orifice radicand went negative (demanded pressure above supply).

    Recoverable: callers clamp the radicand to the singularity guard offset
    and count a warning instead of aborting.
    """

    def __init__(self, radicand, delta_p, spool_sign):
        super().__init__(
            f"valve flow radicand {radicand:.6g} < 0 "
            f"(delta_p={delta_p:.6g} Pa, spool_sign={spool_sign:+d})"
        )
        self.radicand = radicand


class BarrierViolation(HydrodriveError):
    """A constrained signal reached the guard fraction of its safety bound."""

    def __init__(self, cause, value, bound):
        self.cause = cause
        self.value = value
        self.bound = bound
        self.margin_fraction = abs(value) / bound if bound else float("inf")
        super().__init__(
            f"{cause}: |{value:.6g}| reached guard of bound {bound:.6g} "
            f"({self.margin_fraction:.4%} of bound)"
        )


class NonFiniteStateError(HydrodriveError):
    """Plant state or input became non-finite; the simulation must abort."""


class TuningFailed(HydrodriveError):
    """Gain auto-tuning hit its iteration cap before meeting the target."""

    def __init__(self, message, best_gains, best_rms):
        super().__init__(message)
        self.best_gains = best_gains
        self.best_rms = best_rms


class NotExponentiallyBounded(HydrodriveError):
    """No positive-rate exponential envelope dominates the trajectory."""
