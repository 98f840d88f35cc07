"""Command-line interface: simulate one trial, sweep a parameter, analyze.

Exit codes: 0 on success, 1 for configuration errors (bad arguments or
unreadable files), 2 when every trial in the run failed dynamically.
"""

from __future__ import annotations

import argparse
import sys

from .errors import BoundlabError, ConfigError
from .gait import GaitParams
from .harness import (SweepSpec, TrialSpec, parse_range, read_sweep_csv,
                      run_trial, stats_to_json, sweep, write_sweep_csv)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ALL_FAILED = 2


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="boundlab",
        description="Quadruped bounding simulator and gait energetics tool")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one bounding trial")
    sim.add_argument("--model", default=None, help="model file path")
    sim.add_argument("--control", default=None, help="controller config path")
    sim.add_argument("--gamma", type=float, default=0.22, help="duty factor")
    sim.add_argument("--phi", type=float, default=0.50, help="phase shift")
    sim.add_argument("--stride", type=float, default=0.22,
                     help="stride duration (s)")
    sim.add_argument("--speed", type=float, default=0.5,
                     help="commanded forward speed (m/s)")
    sim.add_argument("--strides", type=int, default=30,
                     help="strides to record after spin-up")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", default=None, help="trace CSV output path")

    sw = sub.add_parser("sweep", help="sweep one gait parameter")
    sw.add_argument("--param", required=True,
                    choices=("gamma", "phi", "stride"))
    sw.add_argument("--range", required=True, metavar="MIN:MAX:STEP")
    sw.add_argument("--speed", type=float, default=0.5)
    sw.add_argument("--seeds", type=int, default=1)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--model", default=None)
    sw.add_argument("--control", default=None)
    sw.add_argument("--out", required=True, help="sweep CSV output path")

    an = sub.add_parser("analyze", help="box statistics from a sweep CSV")
    an.add_argument("--in", dest="infile", required=True)
    an.add_argument("--out", required=True, help="stats JSON output path")
    return parser


def _cmd_simulate(args):
    spec = TrialSpec(
        params=GaitParams(args.gamma, args.phi, args.stride),
        speed=args.speed, recording_strides=args.strides, seed=args.seed,
        model_path=args.model, control_path=args.control)
    result = run_trial(spec)
    if args.out and result.trace is not None:
        from .energetics import write_trace_csv
        write_trace_csv(result.trace, args.out)
        print(f"trace written to {args.out}")
    if result.status == "steady":
        from .energetics import cot_statistics
        stats = cot_statistics(result.cot)
        print(f"steady: {len(result.cot)} strides, "
              f"COT median {stats.median:.3f} "
              f"[Q1 {stats.q1:.3f}, Q3 {stats.q3:.3f}], "
              f"mean speed {result.mean_speed:.3f} m/s, "
              f"flight phases {result.flight_phases}")
        return EXIT_OK
    print(f"failed: {result.reason} "
          f"(mean speed {result.mean_speed:.3f} m/s)")
    return EXIT_ALL_FAILED


def _cmd_sweep(args):
    values = parse_range(args.range)
    trial = TrialSpec(model_path=args.model, control_path=args.control)
    spec = SweepSpec(param=args.param, values=values, speed=args.speed,
                     seeds=args.seeds, trial=trial)
    rows = sweep(spec, jobs=args.jobs)
    write_sweep_csv(rows, args.out)
    n_steady = sum(1 for r in rows if r.status == "steady")
    print(f"{len(rows)} trials, {n_steady} steady; wrote {args.out}")
    if n_steady == 0:
        return EXIT_ALL_FAILED
    return EXIT_OK


def _cmd_analyze(args):
    rows = read_sweep_csv(args.infile)
    payload = stats_to_json(rows, args.out)
    n_points = sum(1 for p in payload if p["n_steady"] > 0)
    print(f"{len(payload)} grid points ({n_points} with steady trials); "
          f"wrote {args.out}")
    if n_points == 0:
        print("warning: no steady points", file=sys.stderr)
        return EXIT_ALL_FAILED
    return EXIT_OK


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_analyze(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BoundlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
