"""Command-line interface: dataset generation, experiment runs, summaries.

Subcommands
-----------
gen NAME        write one generated dataset as a .npy file
run NAME        run a registered experiment and write its artifacts
summarize DIR   recompute summary.csv from a finished experiment directory

Exit codes: 0 success, 1 usage error, 2 failed internal assertions,
3 numerical failure inside an algorithm.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from .completion import StagnationError
from .cross import CrossError
from .datagen import (
    gen_gaussian_mixture,
    gen_quantized_matrix,
    gen_quantized_tt,
    gen_smoluchowski,
)
from .experiments import (
    EXPERIMENT_NAMES,
    SCALES,
    ExperimentSpec,
    UsageError,
    run_experiment,
    summarize_experiment,
)
from .linalg import RngStream, SvdError
from .schemes import SchemeError

__all__ = ["main", "build_parser", "EXIT_PASS", "EXIT_USAGE", "EXIT_ASSERT", "EXIT_NUMERICAL"]

EXIT_PASS = 0
EXIT_USAGE = 1
EXIT_ASSERT = 2
EXIT_NUMERICAL = 3

GENERATOR_NAMES = ("smoluchowski", "mixture", "quantized-matrix", "quantized-tt")

_NUMERICAL_ERRORS = (
    SvdError,
    CrossError,
    SchemeError,
    StagnationError,
    np.linalg.LinAlgError,
    FloatingPointError,
    OverflowError,
)


class _Parser(argparse.ArgumentParser):
    """Argument parser whose errors map to the usage exit code."""

    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="qapprox", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    gen = sub.add_parser("gen", help="write one generated dataset as a .npy file")
    gen.add_argument("name", choices=GENERATOR_NAMES)
    gen.add_argument("--n", type=int, default=None, help="size (grid points or mode size)")
    gen.add_argument("--step", type=float, default=0.1, help="grid step (smoluchowski)")
    gen.add_argument("--t", type=float, default=6.0, help="time parameter (smoluchowski)")
    gen.add_argument("--rank", type=int, default=5, help="factor rank (quantized)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, default=Path("."), help="output directory")
    gen.set_defaults(func=_cmd_gen)

    run = sub.add_parser("run", help="run a registered experiment")
    run.add_argument("name", help=f"one of: {', '.join(EXPERIMENT_NAMES)}")
    run.add_argument("--scale", choices=SCALES, default="desk")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", type=Path, default=Path("results"), help="artifact directory")
    run.add_argument("--jobs", type=int, default=1, help="parallel trials")
    run.add_argument("--n", type=int, default=None)
    run.add_argument("--step", type=float, default=None)
    run.add_argument("--t", type=float, default=None)
    run.add_argument("--rank", type=float, default=None)
    run.add_argument(
        "--gamma",
        type=float,
        action="append",
        default=None,
        help="oversampling value, repeatable (completion-phase)",
    )
    run.add_argument("--trials", type=int, default=None)
    run.add_argument("--iters", type=int, default=None, help="iteration budget")
    run.set_defaults(func=_cmd_run)

    summ = sub.add_parser("summarize", help="recompute summary.csv from stored artifacts")
    summ.add_argument("directory", type=Path)
    summ.set_defaults(func=_cmd_summarize)
    return parser


def _cmd_gen(args):
    defaults = {"smoluchowski": 1024, "mixture": 1024, "quantized-matrix": 200, "quantized-tt": 100}
    n = args.n if args.n is not None else defaults[args.name]
    rng = RngStream(args.seed)
    if args.name == "smoluchowski":
        data = gen_smoluchowski(n, args.step, args.t)
    elif args.name == "mixture":
        data = gen_gaussian_mixture(n).values
    elif args.name == "quantized-matrix":
        data = gen_quantized_matrix(n, args.rank, rng)
    else:
        data = gen_quantized_tt(n, args.rank, rng)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"{args.name}.npy"
    np.save(path, data)
    print(path)
    return EXIT_PASS


def _cmd_run(args):
    spec = ExperimentSpec(
        args.name,
        args.out,
        scale=args.scale,
        seed=args.seed,
        jobs=args.jobs,
        n=args.n,
        step=args.step,
        t=args.t,
        rank=args.rank,
        gammas=tuple(args.gamma) if args.gamma else None,
        trials=args.trials,
        max_iters=args.iters,
    )
    result = run_experiment(spec)
    for status in result.statuses:
        if not status.ok:
            print(status.line())
    passed = sum(s.ok for s in result.statuses)
    print(f"{result.name}: {passed}/{len(result.statuses)} checks passed; artifacts in {result.out_dir}")
    return result.exit_code


def _cmd_summarize(args):
    print(summarize_experiment(args.directory))
    return EXIT_PASS


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            parser.error("a subcommand is required")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # Parameter validation raised by a generator or algorithm entry point.
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
