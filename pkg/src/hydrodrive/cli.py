"""Command-line entry point.

Subcommands:
  simulate <cfg>             run a scenario, write the trace, print a summary
  compare <cfg_a> <cfg_b>    run two controllers on one plant, print a table
  verify <trace>             run the stability verification report
  tune <cfg>                 auto-tune tracking gains on a probe scenario
  plotdata <trace> --signal  emit a two-column (t, value) series

Exit codes: 0 success, 1 usage or configuration error, 2 a safety barrier
tripped during simulate (distinct so scripts can react).
"""

from __future__ import annotations

import argparse
import sys

import yaml

from .config import parse_config
from .errors import ConfigError, HydrodriveError, TuningFailed
from .report import comparison_table, verify_trace
from .simulate import compare_controllers, run_scenario
from .trace import read_trace, write_trace
from .tuning import auto_tune

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_TRIPPED = 2


def _summary_lines(summary):
    yield (f"scenario '{summary.name}' [{summary.controller}] "
           f"hash={summary.config_hash}")
    yield (f"  recorded {summary.steps_recorded} steps "
           f"({summary.duration_recorded:.3f} s) in {summary.runtime_s:.2f} s"
           + ("  [ABORTED: non-finite state]" if summary.aborted else ""))
    for w in summary.wheels:
        line = (f"  {w.name:>3}: rms_v_e={w.rms_v_e:.5f} m/s  "
                f"peak|v_e|={w.peak_v_e:.4f}  peak|tau_m_cmd|="
                f"{w.peak_tau_m_cmd:.2f}  peak|u_sat|={w.peak_u_sat:.3f}")
        if w.tripped:
            line += f"  TRIPPED({w.trip_cause} @ {w.trip_time:.3f} s)"
        if w.clamp_events:
            line += f"  pressure-clamps={w.clamp_events}"
        yield line


def cmd_simulate(args):
    cfg = parse_config(args.config)
    result = run_scenario(cfg, parallel=args.parallel)
    out = args.out or (cfg.name + ".trace.csv")
    write_trace(result.trace, out)
    for line in _summary_lines(result.summary):
        print(line)
    print(f"trace written to {out}")
    if result.summary.aborted:
        print("simulation aborted on non-finite state", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_TRIPPED if result.summary.tripped else EXIT_OK


def cmd_compare(args):
    cfg_a = parse_config(args.config_a)
    cfg_b = parse_config(args.config_b)
    rows, res_a, res_b = compare_controllers(cfg_a, cfg_b)
    table = comparison_table(rows, cfg_a.controller, cfg_b.controller)
    print(table, end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table)
    return EXIT_OK


def cmd_verify(args):
    trace = read_trace(args.trace)
    text, ok = verify_trace(trace, zeta_max=args.zeta_max)
    print(text, end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK if ok else EXIT_USAGE


def cmd_tune(args):
    cfg = parse_config(args.config)
    try:
        gains, history = auto_tune(cfg, rms_target=args.rms_target,
                                   max_iters=args.max_iters,
                                   refine=args.refine)
    except TuningFailed as exc:
        print(f"tuning failed: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for step in history:
        print(f"  iter {step.iteration}: "
              f"k_track={step.gains.velocity_tracking_gain:.4g} "
              f"k_valve={step.gains.torque_tracking_gain:.4g} "
              f"rms={step.rms:.5g}" + ("  TRIPPED" if step.tripped else ""))
    doc = {"gains": {
        "velocity_tracking_gain": gains.velocity_tracking_gain,
        "velocity_adapt_weight": gains.velocity_adapt_weight,
        "velocity_adapt_rate": gains.velocity_adapt_rate,
        "velocity_adapt_leak": gains.velocity_adapt_leak,
        "model_term_gain": gains.model_term_gain,
        "torque_tracking_gain": gains.torque_tracking_gain,
        "torque_adapt_weight": gains.torque_adapt_weight,
        "torque_adapt_rate": gains.torque_adapt_rate,
        "torque_adapt_leak": gains.torque_adapt_leak,
    }}
    text = yaml.safe_dump(doc, sort_keys=False)
    print(text, end="")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


def cmd_plotdata(args):
    trace = read_trace(args.trace)
    try:
        col = trace.column(args.signal, args.wheel)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    lines = [f"{repr(float(t))} {repr(float(v))}"
             for t, v in zip(trace.t, col)]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text, end="")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hydrodrive",
        description="Hydraulic in-wheel drive control simulator and "
                    "stability verifier")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write its trace")
    p.add_argument("config")
    p.add_argument("--out", help="trace file path (default <name>.trace.csv)")
    p.add_argument("--parallel", action="store_true",
                   help="advance wheels on a thread pool (identical output)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="compare two controllers on one plant")
    p.add_argument("config_a")
    p.add_argument("config_b")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("verify", help="stability verification of a trace")
    p.add_argument("trace")
    p.add_argument("--out")
    p.add_argument("--zeta-max", type=float, default=None,
                   help="also require the tracking envelope radius below "
                        "this value")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("tune", help="auto-tune tracking gains on a probe")
    p.add_argument("config")
    p.add_argument("--rms-target", type=float, default=0.02)
    p.add_argument("--max-iters", type=int, default=10)
    p.add_argument("--refine", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("plotdata", help="two-column series for plotting")
    p.add_argument("trace")
    p.add_argument("--signal", required=True)
    p.add_argument("--wheel", default=0,
                   help="wheel name or index (default first wheel)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    if getattr(args, "wheel", None) is not None and isinstance(args.wheel, str):
        if args.wheel.isdigit():
            args.wheel = int(args.wheel)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HydrodriveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
