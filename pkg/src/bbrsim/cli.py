"""Command-line front end.

Subcommands:
  simulate <scenario.json>   run one scenario, write trace/summary/plots
  sweep <dir>                run every scenario JSON in a directory
  validate <scenario.json>   check a scenario against the schema

Exit codes: 0 success, 2 validation/parse error, 3 integrator failure.
The default output directory is ``./out`` or ``$BBRSIM_OUT``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import pathlib
import sys

from .engine import run_scenario
from .errors import IntegratorPanic, ParseError, ValidationError
from .report import emit_csv, emit_plot_data, summarize, summary_to_dict
from .scenario import parse_scenario


def _default_out() -> str:
    return os.environ.get("BBRSIM_OUT", "out")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bbrsim",
        description="Deterministic fluid-model simulator of BBR-style "
                    "congestion control over a shared wireless bottleneck.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one scenario")
    sim.add_argument("scenario", help="scenario JSON file")
    sim.add_argument("--out", default=None, help="output directory")
    sim.add_argument("--dt", type=float, default=None,
                     help="override integrator step (s)")
    sim.add_argument("--duration", type=float, default=None,
                     help="override scenario duration (s)")
    sim.add_argument("--csv", action="store_true",
                     help="write the trace CSV (default on)")
    sim.add_argument("--plots", action="store_true",
                     help="write per-panel plot data files")
    sim.add_argument("--summary", action="store_true",
                     help="write summary.json (default on)")

    sw = sub.add_parser("sweep", help="run every scenario in a directory")
    sw.add_argument("directory")
    sw.add_argument("--out", default=None)
    sw.add_argument("--plots", action="store_true")
    sw.add_argument("--jobs", type=int, default=1,
                    help="scenarios run in parallel (default 1)")

    val = sub.add_parser("validate", help="validate a scenario file")
    val.add_argument("scenario")
    return parser


def _load(path, dt=None, duration=None):
    scenario = parse_scenario(path)
    changes = {}
    if dt is not None:
        changes["integrator"] = dataclasses.replace(scenario.integrator, dt=dt)
    if duration is not None:
        changes["duration"] = duration
    if changes:
        scenario = dataclasses.replace(scenario, **changes)
    return scenario


def _run_one(scenario, out_root: pathlib.Path, write_csv: bool,
             write_plots: bool, write_summary: bool) -> dict:
    trace = run_scenario(scenario)
    report = summarize(trace, scenario.report.steady_fraction)
    out_dir = out_root / scenario.name
    out_dir.mkdir(parents=True, exist_ok=True)
    if write_csv:
        emit_csv(trace, out_dir / "trace.csv")
    if write_summary:
        (out_dir / "summary.json").write_text(
            json.dumps(summary_to_dict(report), indent=2, sort_keys=True)
            + "\n")
    if write_plots:
        emit_plot_data(trace, report, out_dir / "plots")
    return summary_to_dict(report)


def _print_summary(summary: dict) -> None:
    print(f"scenario {summary['scenario']}: "
          f"window [{summary['window_start_s']:.1f}, "
          f"{summary['window_end_s']:.1f}] s, jain={summary['jain']:.4f}")
    for f in summary["flows"]:
        print(f"  {f['flow_id']:>12}: "
              f"mean {f['mean_throughput_mbps']:.3f} Mb/s, "
              f"rtt {f['mean_rtt_ms']:.2f} ms, "
              f"jitter {f['jitter_ms']:.2f} ms, "
              f"dropped/marked {f['drop_mark_bits']:.0f} bits")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            parse_scenario(args.scenario)
            print(f"{args.scenario}: OK")
            return 0

        out_root = pathlib.Path(args.out or _default_out())

        if args.command == "simulate":
            scenario = _load(args.scenario, args.dt, args.duration)
            # File toggles: with no flags given, write trace and summary.
            none_given = not (args.csv or args.plots or args.summary)
            summary = _run_one(
                scenario, out_root,
                write_csv=args.csv or none_given,
                write_plots=args.plots,
                write_summary=args.summary or none_given)
            _print_summary(summary)
            return 0

        # sweep
        directory = pathlib.Path(args.directory)
        paths = sorted(directory.glob("*.json"))
        if not paths:
            print(f"no scenario files in {directory}", file=sys.stderr)
            return 2
        scenarios = [_load(p) for p in paths]
        if args.jobs > 1:
            from concurrent.futures import ProcessPoolExecutor
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = [
                    pool.submit(_run_one, sc, out_root, True, args.plots, True)
                    for sc in scenarios]
                for future in futures:
                    _print_summary(future.result())
        else:
            for sc in scenarios:
                _print_summary(_run_one(sc, out_root, True, args.plots, True))
        return 0
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IntegratorPanic as exc:
        print(f"integrator failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
