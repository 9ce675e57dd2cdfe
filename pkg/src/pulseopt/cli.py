"""Command-line front end.

Subcommands: optimize, gridsearch, rollout, drag-check.  Exit codes:
0 success, 1 configuration/validation error, 2 solver made no progress.
"""

from __future__ import annotations

import argparse
import sys

from .exceptions import DimensionMismatch, PulseOptError
from .config import load_config
from .harness import drag_check_run, gridsearch_run, optimize_run, rollout_run


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pulseopt",
        description="Synthesize piecewise-constant microwave pulses for transmon gates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory")

    p_opt = sub.add_parser("optimize", help="run one pulse optimization")
    common(p_opt)

    p_grid = sub.add_parser("gridsearch", help="sweep cost-matrix multipliers")
    common(p_grid)
    p_grid.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p_roll = sub.add_parser("rollout", help="replay an exported controls.csv")
    common(p_roll)
    p_roll.add_argument("--controls", required=True, help="controls.csv produced by optimize")

    p_drag = sub.add_parser("drag-check", help="envelope/derivative proportionality check")
    common(p_drag)
    p_drag.add_argument("--controls", required=True, help="controls.csv of a smoothed 1q3l run")

    return parser


def _resolve_out(args, config) -> str:
    out = args.out or config.out_dir
    if out is None:
        raise PulseOptError("config.out: no output directory (set it or pass --out)")
    return out


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.command == "optimize":
            out = _resolve_out(args, config)
            result = optimize_run(config, out_dir=out)
            print(f"wrote {result.out_dir}/summary.json"
                  f"  trace-infidelity={result.summary['trace-infidelity']:.3e}"
                  f"  termination={result.report.termination}")
            return 2 if result.report.termination == "no_progress" else 0
        if args.command == "gridsearch":
            out = _resolve_out(args, config)
            if args.jobs < 1:
                raise PulseOptError("--jobs must be at least 1")
            rows = gridsearch_run(config, out, jobs=args.jobs)
            ok = [r for r in rows if r["status"] == "ok"]
            best = ok[0] if ok else None
            if best is None:
                print(f"wrote {out}/grid_results.csv  (all {len(rows)} cells failed)")
            else:
                print(f"wrote {out}/grid_results.csv  best cell {best['cell']}"
                      f"  trace-infidelity={best['trace-infidelity']:.3e}")
            return 0
        if args.command == "rollout":
            out = _resolve_out(args, config)
            result = rollout_run(config, args.controls, out_dir=out)
            print(f"wrote {result.out_dir}/summary.json"
                  f"  trace-infidelity={result.summary['trace-infidelity']:.3e}")
            return 0
        if args.command == "drag-check":
            out = args.out or config.out_dir
            report = drag_check_run(config, args.controls, out_dir=out)
            if report["degenerate"]:
                print("correlation undefined (constant envelope)")
            else:
                print(f"correlation={report['correlation']:.4f}"
                      f"  factor={report['factor']:.4f}"
                      f"  -1/delta1={report['neg-inverse-delta1']:.4f}"
                      f"  -delta1={report['neg-delta1']:.4f}")
            return 0
        raise PulseOptError(f"unknown command {args.command!r}")
    except (PulseOptError, DimensionMismatch, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
