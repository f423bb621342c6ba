"""Command-line entry point for the experiment bench.

Subcommands mirror the experiment runners; `all` chains every one.
Exit codes: 0 on success, 2 on a configuration error, 3 when any trial
failed (the run still completes and writes whatever it measured).
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from fpinv import bench

COMMANDS = ("reconstruct", "sweep-iters", "consistency", "interpolate", "all")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpinv",
        description="Run desk-scale diffusion-inversion experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment(s)")
        p.add_argument("--config", metavar="PATH", default=None,
                       help="JSON experiment config (overrides --scenario)")
        p.add_argument("--scenario", choices=sorted(bench.SCENARIO_PRESETS),
                       default="default", help="built-in scenario preset")
        p.add_argument("--out", metavar="DIR", default="bench_out",
                       help="output directory for CSV/JSON/plots")
        p.add_argument("--seed", metavar="N", type=int, default=None,
                       help="override the config rng_seed")
        p.add_argument("--plots", action="store_true", help="also emit SVG plots")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = bench.load_config(args.config)
        else:
            cfg = bench.SCENARIO_PRESETS[args.scenario]()
        if args.seed is not None:
            cfg = replace(cfg, rng_seed=args.seed)
    except bench.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "all":
        report = bench.run_all(cfg)
    else:
        report = bench.EXPERIMENT_RUNNERS[args.command](cfg)
    written = bench.emit(report, args.out, plots=args.plots)
    for path in written:
        print(path)
    if report.failures:
        print(f"{len(report.failures)} trial(s) failed; see the JSON report", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
