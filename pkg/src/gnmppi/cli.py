"""Command-line entry point ``gnmppi-bench``.

Examples::

    gnmppi-bench run                       # packaged default suite into ./results
    gnmppi-bench run my_suite.yaml -o out --seeds 0 1 2 --workers 8
    gnmppi-bench smoothing --sigmas 1 0.5 0.25 --grid -2 2 81 -o smoothing.csv
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from gnmppi.bench import (
    default_suite_path,
    dump_smoothing_figure_data,
    load_suite,
    render_table,
    run_suite,
)
from gnmppi.exceptions import ConfigError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gnmppi-bench", description="Run the black-box optimal-control benchmark suite."
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a suite and write results, table and traces")
    run.add_argument("suite", nargs="?", default=None,
                     help="suite YAML file (default: the packaged default suite)")
    run.add_argument("-o", "--out", default="results", help="output directory (default: results)")
    run.add_argument("--seeds", type=int, nargs="+", default=None,
                     help="override the seed list of the sampling methods")
    run.add_argument("-j", "--workers", type=int, default=None,
                     help="threads per evaluation batch")
    run.add_argument("--max-iters", type=int, default=None,
                     help="override the iteration cap of every cell")
    run.add_argument("--timing", action="store_true",
                     help="fill the wall_ms column (makes results.csv run-dependent)")

    smooth = sub.add_parser("smoothing", help="dump Gaussian smoothings of the step function")
    smooth.add_argument("--sigmas", type=float, nargs="+", default=[1.0, 0.5, 0.25])
    smooth.add_argument("--grid", type=float, nargs=3, metavar=("START", "STOP", "COUNT"),
                        default=[-2.0, 2.0, 81])
    smooth.add_argument("-M", "--samples", type=int, default=100_000)
    smooth.add_argument("--seed", type=int, default=0)
    smooth.add_argument("-o", "--out", default="smoothing.csv", help="CSV or .json output path")
    return parser


def _run(args: argparse.Namespace) -> int:
    path = args.suite or default_suite_path()
    suite = load_suite(
        path,
        seeds=args.seeds,
        workers=args.workers,
        max_iters=args.max_iters,
        timing=True if args.timing else None,
    )
    t0 = time.perf_counter()
    outcomes = run_suite(suite, args.out)
    print(render_table(outcomes), end="")
    print(f"\n{len(outcomes)} cells in {time.perf_counter() - t0:.1f} s; reports in {args.out}/")
    return 0


def _smoothing(args: argparse.Namespace) -> int:
    start, stop, count = args.grid
    if count < 1 or count != int(count):
        raise ConfigError("grid COUNT must be a positive integer")
    grid = np.linspace(start, stop, int(count))
    rows = dump_smoothing_figure_data(args.sigmas, grid, M=args.samples, seed=args.seed,
                                      path=args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _run(args)
        return _smoothing(args)
    except ConfigError as exc:
        print(f"gnmppi-bench: configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
