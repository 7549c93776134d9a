"""Scenario configuration: schema, validation, parsing and serialization.

A scenario file is YAML. Every key is validated strictly (unknown keys are
rejected with the offending section named) and every cross-field invariant
is checked at parse time so a ScenarioConfig object is valid by
construction. parse_config(serialize_config(cfg)) round-trips exactly.
"""

from __future__ import annotations

import hashlib
import math
from bisect import bisect_right
from dataclasses import dataclass, field

import yaml

from .controller import AdaptiveState, Gains, SafetyBounds
from .errors import ConfigError
from .pid import PidGains
from .plant import DisturbanceEvent, DisturbanceModel, HydraulicParams, WheelParams

CONTROLLER_KINDS = ("barrier", "pid")
HYDRAULIC_MODELS = ("pressure", "reduced")
WHEEL_NAMES_DEFAULT = ("RL", "RR", "FL", "FR")


@dataclass(frozen=True)
class ReferenceProfile:
    """Piecewise-linear reference velocity, held constant outside the knots."""

    knots: tuple = ((0.0, 0.0),)

    def __post_init__(self):
        if not self.knots:
            raise ValueError("reference profile needs at least one knot")
        times = [t for t, _ in self.knots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("reference knot times must be strictly increasing")

    def value(self, t: float) -> float:
        knots = self.knots
        if t <= knots[0][0]:
            return knots[0][1]
        if t >= knots[-1][0]:
            return knots[-1][1]
        i = bisect_right([k[0] for k in knots], t) - 1
        t0, v0 = knots[i]
        t1, v1 = knots[i + 1]
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0)

    def slope(self, t: float) -> float:
        knots = self.knots
        if t < knots[0][0] or t >= knots[-1][0]:
            return 0.0
        i = bisect_right([k[0] for k in knots], t) - 1
        t0, v0 = knots[i]
        t1, v1 = knots[i + 1]
        return (v1 - v0) / (t1 - t0)

    def max_abs(self) -> float:
        return max(abs(v) for _, v in self.knots)


@dataclass(frozen=True)
class CouplingConfig:
    """Optional load-redistribution hook: during slip events a fraction of
    the slipping wheels' normal force is shifted onto the others, reading
    the previous step's slip samples only."""

    enabled: bool = False
    gain: float = 0.0


@dataclass(frozen=True)
class WheelConfig:
    name: str
    plant: WheelParams
    hydraulics: HydraulicParams
    disturbance: DisturbanceModel = DisturbanceModel()
    nominal: WheelParams | None = None
    initial_velocity: float = 0.0

    def nominal_params(self, mismatch: float) -> WheelParams:
        if self.nominal is not None:
            return self.nominal
        return self.plant.with_mismatch(mismatch)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    duration: float = 10.0
    dt: float = 1.0e-3
    seed: int = 0
    controller: str = "barrier"
    stop_on_trip: bool = True
    plant_substeps: int = 1
    hydraulic_model: str = "pressure"
    valve_polarity: int = -1
    guard_margin: float = 1.0e-3
    nominal_mismatch: float = 0.1
    inertia_over_radius_bound: float = 100.0
    reference: ReferenceProfile = ReferenceProfile()
    bounds: SafetyBounds = SafetyBounds()
    gains: Gains = Gains()
    adaptive_init: AdaptiveState = AdaptiveState()
    pid: PidGains = PidGains()
    coupling: CouplingConfig = CouplingConfig()
    wheels: tuple = field(default_factory=tuple)

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))


# ---------------------------------------------------------------------------
# strict dict walking

_REQUIRED = object()


class _Section:
    """Dict wrapper that tracks consumed keys and reports leftovers."""

    def __init__(self, data, context, path):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"expected a mapping, got {type(data).__name__}",
                              path=path, context=context)
        self.data = dict(data)
        self.context = context
        self.path = path

    def take(self, key, kind, default=_REQUIRED):
        if key not in self.data:
            if default is _REQUIRED:
                raise ConfigError(f"missing required key '{key}'",
                                  path=self.path, context=self.context)
            return default
        value = self.data.pop(key)
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind in (int, float) and isinstance(value, bool):
            raise ConfigError(f"key '{key}' must be a number, got a boolean",
                              path=self.path, context=self.context)
        if kind is not None and not isinstance(value, kind):
            raise ConfigError(
                f"key '{key}' must be {getattr(kind, '__name__', kind)}, "
                f"got {type(value).__name__}", path=self.path, context=self.context)
        return value

    def sub(self, key, default=None):
        raw = self.data.pop(key, default)
        return _Section(raw, f"{self.context}.{key}" if self.context else key,
                        self.path)

    def finish(self):
        if self.data:
            raise ConfigError(f"unknown keys: {sorted(self.data)}",
                              path=self.path, context=self.context)


def _build(cls, section, **extra):
    try:
        return cls(**extra)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), path=section.path,
                          context=section.context) from exc


def _events_from(raw, context, path):
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise ConfigError("events must be a list", path=path, context=context)
    events = []
    for i, item in enumerate(raw):
        sec = _Section(item, f"{context}[{i}]", path)
        kwargs = dict(
            start=sec.take("start", float),
            end=sec.take("end", float),
            amplitude=sec.take("amplitude", float),
            shape=sec.take("shape", str, "halfsine"),
            rise_fraction=sec.take("rise_fraction", float, 0.1),
        )
        sec.finish()
        events.append(_build(DisturbanceEvent, sec, **kwargs))
    return tuple(events)


def _wheel_params_from(sec):
    kwargs = dict(
        radius=sec.take("radius", float, 0.854),
        inertia=sec.take("inertia", float, 100.0),
        damping=sec.take("damping", float, 50.0),
        coulomb=sec.take("coulomb", float, 20.0),
        normal_force=sec.take("normal_force", float, 16309.125),
        gear_ratio=sec.take("gear_ratio", float, 17.7),
    )
    sec.finish()
    return _build(WheelParams, sec, **kwargs)


def _hydraulics_from(sec):
    kwargs = dict(
        displacement=sec.take("displacement", float, 1.0e-4),
        bulk_modulus=sec.take("bulk_modulus", float, 1.0e9),
        eta_hm=sec.take("eta_hm", float, 0.9),
        eta_vol=sec.take("eta_vol", float, 0.95),
        flow_coeff=sec.take("flow_coeff", float, 2.52e-7),
        supply_pressure=sec.take("supply_pressure", float, 2.0e7),
        tank_pressure=sec.take("tank_pressure", float, 0.0),
        guard_pressure=sec.take("guard_pressure", float, 1.0e3),
    )
    sec.finish()
    return _build(HydraulicParams, sec, **kwargs)


def config_from_dict(data, path=None) -> ScenarioConfig:
    root = _Section(data, "", path)

    name = root.take("name", str, "scenario")
    duration = root.take("duration", float)
    dt = root.take("dt", float)
    seed = root.take("seed", int, 0)
    controller = root.take("controller", str, "barrier")
    stop_on_trip = root.take("stop_on_trip", bool, True)
    plant_substeps = root.take("plant_substeps", int, 1)
    hydraulic_model = root.take("hydraulic_model", str, "pressure")
    valve_polarity = root.take("valve_polarity", int, -1)
    guard_margin = root.take("guard_margin", float, 1.0e-3)
    nominal_mismatch = root.take("nominal_mismatch", float, 0.1)
    joverr = root.take("inertia_over_radius_bound", float, 100.0)

    ref_sec = root.sub("reference")
    knots_raw = ref_sec.take("knots", list, [[0.0, 0.0]])
    ref_sec.finish()
    knots = []
    for i, pair in enumerate(knots_raw):
        if (not isinstance(pair, (list, tuple)) or len(pair) != 2
                or not all(isinstance(x, (int, float)) for x in pair)):
            raise ConfigError(f"reference knot {i} must be [time, velocity]",
                              path=path, context="reference.knots")
        knots.append((float(pair[0]), float(pair[1])))
    reference = _build(ReferenceProfile, ref_sec, knots=tuple(knots))

    b_sec = root.sub("bounds")
    bounds_kwargs = dict(
        velocity_limit=b_sec.take("velocity_limit", float, 0.5),
        reference_limit=b_sec.take("reference_limit", float, 0.25),
        torque_limit=b_sec.take("torque_limit", float, 290.0),
        u_hi=b_sec.take("u_hi", float, 0.44),
        u_lo=b_sec.take("u_lo", float, -0.44),
    )
    declared_error_limit = b_sec.take("error_limit", float, None)
    b_sec.finish()
    bounds = _build(SafetyBounds, b_sec, **bounds_kwargs)
    if declared_error_limit is not None and not math.isclose(
            declared_error_limit, bounds.error_limit, rel_tol=0, abs_tol=1e-12):
        raise ConfigError(
            f"error_limit {declared_error_limit} != velocity_limit - "
            f"reference_limit = {bounds.error_limit}", path=path,
            context="bounds")

    g_sec = root.sub("gains")
    gains_kwargs = {
        f: g_sec.take(f, float, getattr(Gains, f))
        for f in ("velocity_tracking_gain", "velocity_adapt_weight",
                  "velocity_adapt_rate", "velocity_adapt_leak",
                  "model_term_gain", "torque_tracking_gain",
                  "torque_adapt_weight", "torque_adapt_rate",
                  "torque_adapt_leak")
    }
    g_sec.finish()
    gains = _build(Gains, g_sec, **gains_kwargs)

    a_sec = root.sub("adaptive_init")
    adaptive = _build(AdaptiveState, a_sec,
                      vel=a_sec.take("vel", float, 0.1),
                      trq=a_sec.take("trq", float, 0.1))
    a_sec.finish()

    p_sec = root.sub("pid")
    pid = _build(PidGains, p_sec,
                 kp=p_sec.take("kp", float, 2.0),
                 ki=p_sec.take("ki", float, 0.5),
                 kd=p_sec.take("kd", float, 0.0),
                 integral_clamp=p_sec.take("integral_clamp", float, 0.44))
    p_sec.finish()

    c_sec = root.sub("coupling")
    coupling = CouplingConfig(enabled=c_sec.take("enabled", bool, False),
                              gain=c_sec.take("gain", float, 0.0))
    c_sec.finish()

    wheels_raw = root.take("wheels", list, None)
    root.finish()

    wheels = []
    if wheels_raw is None:
        wheels_raw = [{"name": n} for n in WHEEL_NAMES_DEFAULT]
    for i, item in enumerate(wheels_raw):
        sec = _Section(item, f"wheels[{i}]", path)
        wname = sec.take("name", str, WHEEL_NAMES_DEFAULT[i] if i < 4 else f"W{i}")
        initial_velocity = sec.take("initial_velocity", float, 0.0)
        plant = _wheel_params_from(sec.sub("plant"))
        hydraulics = _hydraulics_from(sec.sub("hydraulics"))
        nom_raw = sec.data.pop("nominal", None)
        nominal = None
        if nom_raw is not None:
            nominal = _wheel_params_from(
                _Section(nom_raw, f"wheels[{i}].nominal", path))
        d_sec = sec.sub("disturbance")
        disturbance = DisturbanceModel(
            torque_events=_events_from(
                d_sec.data.pop("torque_events", None),
                f"{d_sec.context}.torque_events", path),
            slip_events=_events_from(
                d_sec.data.pop("slip_events", None),
                f"{d_sec.context}.slip_events", path),
            extra_accel=d_sec.take("extra_accel", float, 0.0),
        )
        d_sec.finish()
        sec.finish()
        wheels.append(WheelConfig(name=wname, plant=plant,
                                  hydraulics=hydraulics,
                                  disturbance=disturbance, nominal=nominal,
                                  initial_velocity=initial_velocity))

    cfg = ScenarioConfig(
        name=name, duration=duration, dt=dt, seed=seed, controller=controller,
        stop_on_trip=stop_on_trip, plant_substeps=plant_substeps,
        hydraulic_model=hydraulic_model, valve_polarity=valve_polarity,
        guard_margin=guard_margin, nominal_mismatch=nominal_mismatch,
        inertia_over_radius_bound=joverr, reference=reference, bounds=bounds,
        gains=gains, adaptive_init=adaptive, pid=pid, coupling=coupling,
        wheels=tuple(wheels),
    )
    validate_config(cfg, path)
    return cfg


def validate_config(cfg: ScenarioConfig, path=None):
    def fail(msg, context=""):
        raise ConfigError(msg, path=path, context=context)

    if cfg.dt <= 0 or cfg.duration <= 0:
        fail("dt and duration must be > 0")
    n = cfg.duration / cfg.dt
    if abs(n - round(n)) > 1e-6:
        fail(f"dt={cfg.dt} does not divide duration={cfg.duration}")
    if cfg.plant_substeps < 1:
        fail("plant_substeps must be >= 1")
    if cfg.controller not in CONTROLLER_KINDS:
        fail(f"controller must be one of {CONTROLLER_KINDS}")
    if cfg.hydraulic_model not in HYDRAULIC_MODELS:
        fail(f"hydraulic_model must be one of {HYDRAULIC_MODELS}")
    if cfg.valve_polarity not in (-1, 1):
        fail("valve_polarity must be -1 or +1")
    if not (0.0 < cfg.guard_margin < 1.0):
        fail("guard_margin must lie in (0, 1)")
    if not (0.0 <= cfg.nominal_mismatch < 1.0):
        fail("nominal_mismatch must lie in [0, 1)")
    if cfg.adaptive_init.vel <= 0 or cfg.adaptive_init.trq <= 0:
        fail("adaptive_init weights must be > 0", "adaptive_init")
    if cfg.reference.max_abs() > cfg.bounds.reference_limit + 1e-12:
        fail(f"reference profile exceeds reference_limit "
             f"{cfg.bounds.reference_limit}", "reference")
    try:
        cfg.gains.validate_model_dominance(cfg.inertia_over_radius_bound)
        cfg.gains.validate_step(cfg.dt)
    except ValueError as exc:
        fail(str(exc), "gains")
    if len(cfg.wheels) != 4:
        fail(f"exactly 4 wheels required, got {len(cfg.wheels)}", "wheels")
    names = [w.name for w in cfg.wheels]
    if len(set(names)) != 4:
        fail(f"wheel names must be unique, got {names}", "wheels")
    guard = 1.0 - cfg.guard_margin
    v_d0 = cfg.reference.value(0.0)
    for w in cfg.wheels:
        if abs(w.initial_velocity) >= cfg.bounds.velocity_limit * guard:
            fail("initial_velocity already at the velocity guard",
                 f"wheels[{w.name}]")
        if abs(w.initial_velocity - v_d0) >= cfg.bounds.error_limit * guard:
            fail("initial tracking error already at the error guard",
                 f"wheels[{w.name}]")
        for ev in w.disturbance.slip_events + w.disturbance.torque_events:
            if ev.end > cfg.duration + 1e-9:
                fail(f"event on [{ev.start}, {ev.end}] ends after duration",
                     f"wheels[{w.name}]")


# ---------------------------------------------------------------------------
# serialization


def _events_to_dicts(events):
    return [
        {"start": ev.start, "end": ev.end, "amplitude": ev.amplitude,
         "shape": ev.shape, "rise_fraction": ev.rise_fraction}
        for ev in events
    ]


def _wheel_params_to_dict(p: WheelParams):
    return {"radius": p.radius, "inertia": p.inertia, "damping": p.damping,
            "coulomb": p.coulomb, "normal_force": p.normal_force,
            "gear_ratio": p.gear_ratio}


def config_to_dict(cfg: ScenarioConfig) -> dict:
    wheels = []
    for w in cfg.wheels:
        h = w.hydraulics
        entry = {
            "name": w.name,
            "initial_velocity": w.initial_velocity,
            "plant": _wheel_params_to_dict(w.plant),
            "hydraulics": {
                "displacement": h.displacement,
                "bulk_modulus": h.bulk_modulus,
                "eta_hm": h.eta_hm,
                "eta_vol": h.eta_vol,
                "flow_coeff": h.flow_coeff,
                "supply_pressure": h.supply_pressure,
                "tank_pressure": h.tank_pressure,
                "guard_pressure": h.guard_pressure,
            },
            "disturbance": {
                "torque_events": _events_to_dicts(w.disturbance.torque_events),
                "slip_events": _events_to_dicts(w.disturbance.slip_events),
                "extra_accel": w.disturbance.extra_accel,
            },
        }
        if w.nominal is not None:
            entry["nominal"] = _wheel_params_to_dict(w.nominal)
        wheels.append(entry)
    return {
        "name": cfg.name,
        "duration": cfg.duration,
        "dt": cfg.dt,
        "seed": cfg.seed,
        "controller": cfg.controller,
        "stop_on_trip": cfg.stop_on_trip,
        "plant_substeps": cfg.plant_substeps,
        "hydraulic_model": cfg.hydraulic_model,
        "valve_polarity": cfg.valve_polarity,
        "guard_margin": cfg.guard_margin,
        "nominal_mismatch": cfg.nominal_mismatch,
        "inertia_over_radius_bound": cfg.inertia_over_radius_bound,
        "reference": {"knots": [[t, v] for t, v in cfg.reference.knots]},
        "bounds": {
            "velocity_limit": cfg.bounds.velocity_limit,
            "reference_limit": cfg.bounds.reference_limit,
            "error_limit": cfg.bounds.error_limit,
            "torque_limit": cfg.bounds.torque_limit,
            "u_hi": cfg.bounds.u_hi,
            "u_lo": cfg.bounds.u_lo,
        },
        "gains": {f: getattr(cfg.gains, f) for f in (
            "velocity_tracking_gain", "velocity_adapt_weight",
            "velocity_adapt_rate", "velocity_adapt_leak", "model_term_gain",
            "torque_tracking_gain", "torque_adapt_weight",
            "torque_adapt_rate", "torque_adapt_leak")},
        "adaptive_init": {"vel": cfg.adaptive_init.vel,
                          "trq": cfg.adaptive_init.trq},
        "pid": {"kp": cfg.pid.kp, "ki": cfg.pid.ki, "kd": cfg.pid.kd,
                "integral_clamp": cfg.pid.integral_clamp},
        "coupling": {"enabled": cfg.coupling.enabled,
                     "gain": cfg.coupling.gain},
        "wheels": wheels,
    }


def serialize_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False,
                          default_flow_style=None)


def config_hash(cfg: ScenarioConfig) -> str:
    canonical = yaml.safe_dump(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def parse_config_text(text: str, path=None) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}", path=path) from exc
    if data is None:
        raise ConfigError("empty configuration file", path=path)
    return config_from_dict(data, path)


def parse_config(path) -> ScenarioConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc}", path=str(path)) from exc
    return parse_config_text(text, path=str(path))
