"""Barrier-constrained adaptive valve control for hydraulic in-wheel drives:
plant models, per-wheel controller, deterministic closed-loop simulator and
a numerical stability-verification toolkit."""

from .config import ScenarioConfig, parse_config, serialize_config
from .controller import (AdaptiveState, Gains, SafetyBounds, WheelController,
                         saturate)
from .plant import (DisturbanceEvent, DisturbanceModel, HydraulicParams,
                    WheelParams, WheelState)
from .simulate import run_scenario

__all__ = [
    "AdaptiveState",
    "DisturbanceEvent",
    "DisturbanceModel",
    "Gains",
    "HydraulicParams",
    "SafetyBounds",
    "ScenarioConfig",
    "WheelController",
    "WheelParams",
    "WheelState",
    "parse_config",
    "run_scenario",
    "saturate",
    "serialize_config",
]
