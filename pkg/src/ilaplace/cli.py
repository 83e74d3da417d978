"""Command-line entry point: ``ilaplace approx | bench-skewt | bench-gompertz``.

Exit codes: 0 success, 2 model or parameter error, 3 numerical failure,
4 tolerance failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import bench
from .engine import EngineOptions
from .errors import (BudgetExceeded, DimensionTooLarge, HessianNotPD, ILaplaceError,
                     NoConvergence, NonFiniteObjective, ToleranceNotMet, UnboundedProfile,
                     UnknownModel)
from .models import MODELS

EXIT_OK = 0
EXIT_PARAM = 2
EXIT_NUMERICAL = 3
EXIT_TOLERANCE = 4

THREADS_ENV = "ILAPLACE_THREADS"
APPROX_METHODS = ("laplace", "ilaplace", "ilaplace-exact", "ilaplace-approx", "bruteforce")


def exit_code_for(err: BaseException) -> int:
    if isinstance(err, ToleranceNotMet):
        return EXIT_TOLERANCE
    if isinstance(err, (NonFiniteObjective, NoConvergence, HessianNotPD, UnboundedProfile,
                        BudgetExceeded)):
        return EXIT_NUMERICAL
    if isinstance(err, (UnknownModel, DimensionTooLarge, ValueError, KeyError)):
        return EXIT_PARAM
    if isinstance(err, ILaplaceError):
        return EXIT_NUMERICAL
    raise err


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise SystemExit(f"ilaplace: {THREADS_ENV} must be a positive integer, got {raw!r}")
    if value < 1:
        raise SystemExit(f"ilaplace: {THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated integer list, got {text!r}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated number list, got {text!r}")


def _permutation(text):
    if text in ("auto", "identity"):
        return text
    return tuple(_int_list(text))


def _key_value(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key.strip(), value.strip()


def _add_engine_flags(p):
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or 1)")
    p.add_argument("--quad-rel-tol", type=float, default=EngineOptions.quad_rel_tol)
    p.add_argument("--grad-tol", type=float, default=EngineOptions.opt_grad_tol)
    p.add_argument("--permutation", type=_permutation, default=None,
                   help="comma list of 0-based indices, 'auto' or 'identity'")
    p.add_argument("--strategy", choices=("exact", "approx"), default="exact",
                   help="conditional minima: exact optimization or linearized")
    p.add_argument("--out", type=Path, default=None, help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ilaplace",
                                     description="Improved Laplace approximation of integrals.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("approx", help="approximate one integral; prints a JSON record")
    p.add_argument("--model", required=True, help=f"one of: {', '.join(MODELS)}")
    p.add_argument("--method", choices=APPROX_METHODS, default="ilaplace")
    p.add_argument("--dim", type=int, default=None,
                   help="dimension (the number of random effects for glmm-binary)")
    p.add_argument("--seed", type=int, default=None, help="dataset or matrix seed")
    p.add_argument("-p", "--param", type=_key_value, action="append", default=[],
                   metavar="KEY=VALUE", help="extra model parameter, repeatable")
    _add_engine_flags(p)

    p = sub.add_parser("bench-skewt", help="skew-t accuracy grid; writes CSV")
    p.add_argument("--dims", type=_int_list, default=list(bench.DEFAULT_SKEWT_DIMS))
    p.add_argument("--nus", type=_float_list, default=list(bench.DEFAULT_SKEWT_NUS))
    p.add_argument("--a", type=float, default=None, help="single scenario instead of the defaults")
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--methods", default=",".join(bench.DEFAULT_SKEWT_METHODS))
    _add_engine_flags(p)

    p = sub.add_parser("bench-gompertz", help="Gompertz convergence-rate study; writes CSV")
    p.add_argument("--n-start", type=int, default=20)
    p.add_argument("--steps", type=int, default=15)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    _add_engine_flags(p)
    return parser


def _options(args, parallelism=1) -> EngineOptions:
    return EngineOptions(
        strategy="approximate" if args.strategy == "approx" else "exact",
        permutation=args.permutation, quad_rel_tol=args.quad_rel_tol,
        opt_grad_tol=args.grad_tol, parallelism=parallelism)


def _emit(text: str, out):
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def cmd_approx(args) -> int:
    params = dict(args.param)
    if args.dim is not None:
        if args.model == "gompertz-posterior":
            if args.dim != 2:
                raise ValueError("gompertz-posterior is 2-dimensional")
        else:
            params["n" if args.model == "glmm-binary" else "dim"] = args.dim
    if args.seed is not None:
        params["seed"] = args.seed
    method = args.method
    if method == "ilaplace":
        method = "ilaplace-approx" if args.strategy == "approx" else "ilaplace-exact"
    record = bench.run_method(args.model, params, method, _options(args, args.threads))
    _emit(record.to_json() + "\n", args.out)
    return EXIT_OK


def cmd_bench_skewt(args) -> int:
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    for m in methods:
        if m not in bench.METHODS:
            raise ValueError(f"unknown method {m!r}")
    if (args.a is None) != (args.c is None):
        raise ValueError("--a and --c must be given together")
    scenarios = bench.DEFAULT_SKEWT_SCENARIOS if args.a is None else ((args.a, args.c),)
    if not args.dims:
        raise ValueError("--dims must be nonempty")
    rows = bench.bench_skewt(args.dims, args.nus, scenarios, methods, _options(args),
                             args.threads)
    _emit(bench.csv_text(bench.SKEWT_COLUMNS, rows), args.out)
    return EXIT_OK


def slopes_path(out: Path) -> Path:
    return out.with_name(out.stem + "_slopes.csv")


def cmd_bench_gompertz(args) -> int:
    rows, slopes = bench.bench_gompertz(args.n_start, args.steps, args.reps, args.seed,
                                        _options(args), args.threads)
    _emit(bench.csv_text(bench.GOMPERTZ_COLUMNS, rows), args.out)
    slope_text = bench.csv_text(bench.SLOPE_COLUMNS, slopes)
    if args.out is not None:
        _emit(slope_text, slopes_path(args.out))
        sys.stdout.write(slope_text)
    else:
        sys.stderr.write(slope_text)
    return EXIT_OK


COMMANDS = {"approx": cmd_approx, "bench-skewt": cmd_bench_skewt,
            "bench-gompertz": cmd_bench_gompertz}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is None:
        args.threads = _default_threads()
    if args.threads < 1:
        print("ilaplace: --threads must be >= 1", file=sys.stderr)
        return EXIT_PARAM
    try:
        return COMMANDS[args.command](args)
    except (ILaplaceError, ValueError, KeyError) as err:
        code = exit_code_for(err)
        print(f"ilaplace: {type(err).__name__}: {err}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
