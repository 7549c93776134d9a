"""Simulation trace container and its delimiter-separated file format.

A trace stores one row per step per wheel. On disk the file carries a
commented header with a format version, the hash of the producing
configuration, the full configuration itself (so verification is
self-contained), the column schema and a units row, followed by CSV rows.
Floats are written with repr() so a written trace parses back bit-exactly
and identical runs produce byte-identical files.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

FORMAT_VERSION = "hydrodrive-trace v1"

# (name, unit) for every per-wheel signal column; 't' and 'wheel' lead each row
SIGNAL_COLUMNS = (
    ("v_d", "m/s"),
    ("v_w", "m/s"),
    ("v_e", "m/s"),
    ("omega_w", "rad/s"),
    ("tau_m", "N*m"),
    ("delta_p", "Pa"),
    ("tau_w_cmd", "N*m"),
    ("tau_m_cmd", "N*m"),
    ("u_raw", "-"),
    ("u_sat", "-"),
    ("w_vel", "-"),
    ("w_trq", "-"),
    ("status", "-"),
    ("slip_accel", "m/s^2"),
    ("torque_dist", "N*m"),
    ("f1_star", "m/s^2"),
    ("pressure_clamped", "-"),
)
SIGNAL_NAMES = tuple(name for name, _ in SIGNAL_COLUMNS)


@dataclass
class SimTrace:
    """Recorded signals of one scenario run.

    t has shape (n,); every signal array has shape (n, n_wheels). status is
    0.0 for nominal steps and 1.0 after a trip.
    """

    config_hash: str
    dt: float
    wheel_names: tuple
    t: np.ndarray
    signals: dict = field(default_factory=dict)
    config_text: str = ""

    @property
    def n_steps(self) -> int:
        return len(self.t)

    def wheel_index(self, name: str) -> int:
        try:
            return self.wheel_names.index(name)
        except ValueError:
            raise KeyError(f"unknown wheel {name!r}; have {self.wheel_names}")

    def column(self, signal: str, wheel) -> np.ndarray:
        if signal == "t":
            return self.t
        if signal not in self.signals:
            raise KeyError(
                f"unknown signal {signal!r}; have {sorted(self.signals)}")
        idx = wheel if isinstance(wheel, int) else self.wheel_index(wheel)
        return self.signals[signal][:, idx]

    def finite_check(self):
        """Every recorded field must be finite on nominal steps."""
        nominal = self.signals["status"] == 0.0
        for name, arr in self.signals.items():
            if not np.all(np.isfinite(arr[nominal])):
                return name
        return None


def write_trace(trace: SimTrace, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        _write(trace, fh)


def trace_to_text(trace: SimTrace) -> str:
    buf = io.StringIO()
    _write(trace, buf)
    return buf.getvalue()


def _write(trace: SimTrace, fh):
    fh.write(f"# {FORMAT_VERSION}\n")
    fh.write(f"# config_hash: {trace.config_hash}\n")
    fh.write(f"# dt: {trace.dt!r}\n")
    fh.write(f"# wheels: {','.join(trace.wheel_names)}\n")
    for line in trace.config_text.splitlines():
        fh.write(f"#cfg {line}\n")
    fh.write("# columns: t,wheel," + ",".join(SIGNAL_NAMES) + "\n")
    fh.write("# units: s,-," + ",".join(u for _, u in SIGNAL_COLUMNS) + "\n")
    fh.write("t,wheel," + ",".join(SIGNAL_NAMES) + "\n")
    cols = [trace.signals[name] for name in SIGNAL_NAMES]
    for k in range(trace.n_steps):
        t_repr = repr(float(trace.t[k]))
        for j, wname in enumerate(trace.wheel_names):
            row = [t_repr, wname]
            row.extend(repr(float(c[k, j])) for c in cols)
            fh.write(",".join(row) + "\n")


def read_trace(path) -> SimTrace:
    with open(path, "r", encoding="utf-8") as fh:
        return _read(fh, str(path))


def trace_from_text(text: str) -> SimTrace:
    return _read(io.StringIO(text), "<text>")


def _read(fh, path) -> SimTrace:
    header = {}
    cfg_lines = []
    first = fh.readline().strip()
    if first != f"# {FORMAT_VERSION}":
        raise ConfigError(f"not a {FORMAT_VERSION} file", path=path)
    columns_line = None
    for line in fh:
        line = line.rstrip("\n")
        if line.startswith("#cfg"):
            cfg_lines.append(line[5:] if line.startswith("#cfg ") else "")
            continue
        if line.startswith("# "):
            key, _, value = line[2:].partition(":")
            header[key.strip()] = value.strip()
            continue
        columns_line = line
        break
    if columns_line is None:
        raise ConfigError("trace has no data section", path=path)
    names = columns_line.split(",")
    if names[:2] != ["t", "wheel"] or tuple(names[2:]) != SIGNAL_NAMES:
        raise ConfigError("trace column schema does not match this version",
                          path=path)
    wheel_names = tuple(header.get("wheels", "").split(","))
    n_wheels = len(wheel_names)
    dt = float(header.get("dt", "nan"))

    rows = {name: [] for name in wheel_names}
    times = []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2 + len(SIGNAL_NAMES):
            raise ConfigError(f"malformed trace row: {line[:60]}...", path=path)
        wname = parts[1]
        if wname not in rows:
            raise ConfigError(f"row for unknown wheel {wname!r}", path=path)
        if wname == wheel_names[0]:
            times.append(float(parts[0]))
        rows[wname].append([float(x) for x in parts[2:]])

    n = len(times)
    signals = {name: np.empty((n, n_wheels)) for name in SIGNAL_NAMES}
    for j, wname in enumerate(wheel_names):
        if len(rows[wname]) != n:
            raise ConfigError(f"wheel {wname} has {len(rows[wname])} rows, "
                              f"expected {n}", path=path)
        block = np.asarray(rows[wname])
        for i, name in enumerate(SIGNAL_NAMES):
            signals[name][:, j] = block[:, i]

    return SimTrace(
        config_hash=header.get("config_hash", ""),
        dt=dt,
        wheel_names=wheel_names,
        t=np.asarray(times),
        signals=signals,
        config_text="\n".join(cfg_lines) + ("\n" if cfg_lines else ""),
    )
