"""Benchmark runners: single runs, the skew-t accuracy grid, the Gompertz
convergence-rate study and a brute-force cubature oracle for d <= 3."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .engine import EngineOptions, improved_laplace, standard_laplace
from .errors import DimensionTooLarge, ILaplaceError, ToleranceNotMet
from .function_model import EvaluationBudget, Objective, evaluate, evaluate_batch
from .models import build_model
from .optimize import (DEFAULT_GRAD_TOL, DEFAULT_MAX_ITER, ModeInfo, _conditional_solve,
                       approx_conditional_minimum, chol_solve, cholesky_logdet, minimize)
from .quad1d import breakpoints, find_support_bounds, integrate_adaptive

METHODS = ("laplace", "ilaplace-exact", "ilaplace-approx", "bruteforce")
BRUTE_FORCE_MAX_DIM = 3
BRUTE_FORCE_REL_TOL = 1e-11
BRUTE_FORCE_TAIL_DROP = 40.0
BRUTE_FORCE_MAX_EVALS = 1_000_000_000

SKEWT_COLUMNS = ["d", "nu", "a", "c", "method", "log_I", "truth_log_I", "abs_log_error",
                 "wall_time_ms", "error"]
GOMPERTZ_COLUMNS = ["n", "rep", "seed", "method", "log_I", "log_I_true", "rel_error",
                    "wall_time_ms", "error"]
SLOPE_COLUMNS = ["method", "slope", "intercept", "n_cells", "n_sizes"]


# ---------------------------------------------------------------------------
# Brute-force cubature
# ---------------------------------------------------------------------------


def brute_force_integral(obj: Objective, mode: ModeInfo,
                         rel_tol: float = BRUTE_FORCE_REL_TOL) -> float:
    """log of the integral of exp(-h) by nested adaptive Gauss-Kronrod.

    Integration limits are searched per slice rather than fixed to one box:
    at every level the innermost remaining coordinates are centered at their
    exact conditional minimum, and each level's limits come from a
    support-bound search on the log of the integral it nests.  This keeps
    curved or sheared ridges inside the integration region.
    """
    d = obj.dim
    if d > BRUTE_FORCE_MAX_DIM:
        raise DimensionTooLarge(f"brute-force cubature supports d <= {BRUTE_FORCE_MAX_DIM}, got {d}")
    obj = obj.with_budget(EvaluationBudget(BRUTE_FORCE_MAX_EVALS))
    x_hat = mode.x_hat
    h_hat = mode.h_hat
    warm = {}

    def slice_mode(prefix):
        """Conditional minimum of coordinates len(prefix).. and its local sd."""
        j = len(prefix)
        if j == 0:
            return x_hat.copy(), math.sqrt(chol_solve(mode.chol_V_hat, np.eye(d)[:, 0])[0])
        x = np.empty(d)
        x[:j] = prefix
        candidates = [warm.get(j), approx_conditional_minimum(mode, j, prefix), x_hat[j:]]
        best, init = math.inf, None
        for z in candidates:
            if z is None:
                continue
            x[j:] = z
            h = evaluate(obj, x)
            if h < best:
                best, init = h, z
        if init is None:
            raise ToleranceNotMet(f"integrand vanishes on the slice through {list(prefix)}")
        z, _, Hzz = _conditional_solve(obj, j, prefix, init, DEFAULT_GRAD_TOL, DEFAULT_MAX_ITER)
        warm[j] = z
        x[j:] = z
        chol, _ = cholesky_logdet(Hzz, x)
        return x, math.sqrt(chol_solve(chol, np.eye(d - j)[:, 0])[0])

    def level(prefix):
        """log of the integral over coordinates len(prefix).., relative to exp(-h_hat)."""
        j = len(prefix)
        center_x, scale = slice_mode(prefix)
        center = float(center_x[j])
        tol = rel_tol if j == 0 else 0.1 * rel_tol
        if j == d - 1:
            def log_f(ts):
                ts = np.atleast_1d(np.asarray(ts, dtype=float))
                xs = np.empty((len(ts), d))
                xs[:, :j] = prefix
                xs[:, j] = ts
                return h_hat - evaluate_batch(obj, xs)
            vectorized = True
            scalar = lambda t: float(log_f(t)[0])
        else:
            log_f = scalar = lambda t: level(list(prefix) + [t])
            vectorized = False
        lo, hi = find_support_bounds(scalar, center, scale, BRUTE_FORCE_TAIL_DROP)
        # outer levels are expensive per point: start coarse and let bisection refine
        pts = (breakpoints(center, scale, lo, hi) if vectorized
               else [p for p in (center - scale, center, center + scale) if lo < p < hi])
        return integrate_adaptive(log_f, lo, hi, tol, tol * 1e-3, pts, vectorized=vectorized,
                                  max_panels=4000).log_value

    return level([]) - h_hat


# ---------------------------------------------------------------------------
# Single runs
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    """Self-describing result of one method on one model instance."""

    model: str
    params: dict
    method: str
    log_I: Optional[float]
    log_c_q: list = field(default_factory=list)
    wall_time_ms: int = 0
    seed: Optional[int] = None
    quad_rel_tol: float = EngineOptions.quad_rel_tol
    grad_tol: float = EngineOptions.opt_grad_tol
    strategy: str = "exact"
    permutation: object = None
    log_truth: Optional[float] = None
    error: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"), allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls(**json.loads(text))

    def options(self) -> EngineOptions:
        perm = self.permutation
        if isinstance(perm, list):
            perm = tuple(perm)
        return EngineOptions(strategy=self.strategy, permutation=perm,
                             quad_rel_tol=self.quad_rel_tol, opt_grad_tol=self.grad_tol)


def _strategy_for(method, opts):
    if method == "ilaplace-exact":
        return "exact"
    if method == "ilaplace-approx":
        return "approximate"
    return opts.strategy


def run_method(model_name: str, params: dict, method: str,
               opts: Optional[EngineOptions] = None) -> RunRecord:
    """Run one method on a registered model.  Errors propagate."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    opts = opts or EngineOptions()
    strategy = _strategy_for(method, opts)
    if strategy != opts.strategy:
        opts = EngineOptions(**{**asdict_options(opts), "strategy": strategy})
    inst = build_model(model_name, params)
    perm = opts.permutation
    if isinstance(perm, np.ndarray):
        perm = perm.tolist()
    elif isinstance(perm, tuple):
        perm = list(perm)
    t0 = time.perf_counter()
    log_c_q = []
    if method == "laplace":
        log_I = standard_laplace(inst.objective, inst.x0, opts).log_I
    elif method == "bruteforce":
        mode = minimize(inst.objective, inst.x0, opts.opt_grad_tol, opts.max_iter)
        log_I = brute_force_integral(inst.objective, mode)
    else:
        res = improved_laplace(inst.objective, inst.x0, opts)
        log_I = res.log_I_iL
        log_c_q = [float(v) for v in res.log_c_q]
    ms = int(round(1000 * (time.perf_counter() - t0)))
    return RunRecord(inst.name, inst.params, method, float(log_I), log_c_q, ms,
                     inst.params.get("seed"), opts.quad_rel_tol, opts.opt_grad_tol, strategy,
                     perm, inst.log_truth)


def asdict_options(opts: EngineOptions) -> dict:
    return {f: getattr(opts, f) for f in EngineOptions.__dataclass_fields__}


def rerun(record: RunRecord) -> RunRecord:
    """Recompute a record from its own fields."""
    return run_method(record.model, record.params, record.method, record.options())


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def _pool_map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def csv_text(columns, rows) -> str:
    """Header plus rows in ``columns`` order; LF endings, repr floats, blanks for None."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k)) for k in columns})
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


DEFAULT_SKEWT_DIMS = (2, 5, 10, 20, 50)
DEFAULT_SKEWT_NUS = (3, 5, 10, 20)
DEFAULT_SKEWT_SCENARIOS = ((1.5, 1.5), (12.0, 0.5))
DEFAULT_SKEWT_METHODS = ("laplace", "ilaplace-exact", "ilaplace-approx")


def bench_skewt(dims=DEFAULT_SKEWT_DIMS, nus=DEFAULT_SKEWT_NUS,
                scenarios=DEFAULT_SKEWT_SCENARIOS, methods=DEFAULT_SKEWT_METHODS,
                opts: Optional[EngineOptions] = None, threads: int = 1):
    """One row per (scenario, d, nu, method); failures land in the error column."""
    opts = opts or EngineOptions()
    cells = [(a, c, d, nu, m) for a, c in scenarios for d in dims for nu in nus for m in methods]

    def run(cell):
        a, c, d, nu, method = cell
        row = {"d": d, "nu": float(nu), "a": float(a), "c": float(c), "method": method,
               "truth_log_I": 0.0}
        try:
            rec = run_method("skew-t", {"dim": d, "a": a, "c": c, "nu": nu}, method, opts)
            row.update(log_I=rec.log_I, abs_log_error=abs(rec.log_I),
                       wall_time_ms=rec.wall_time_ms)
        except ILaplaceError as err:
            row["error"] = f"{type(err).__name__}: {err}"
        return row

    rows = _pool_map(run, cells, threads)
    rows.sort(key=lambda r: (r["a"], r["c"], r["d"], r["nu"], methods.index(r["method"])))
    return rows


def sample_sizes(n_start: int, steps: int):
    """n_1 = n_start, n_i = ceil(n_{i-1} + 1.2 sqrt(n_{i-1})); ``steps`` sizes in total."""
    if n_start < 2 or steps < 1:
        raise ValueError("need n_start >= 2 and steps >= 1")
    ns = [int(n_start)]
    while len(ns) < steps:
        ns.append(int(math.ceil(ns[-1] + 1.2 * math.sqrt(ns[-1]))))
    return ns


def cell_seed(seed: int, n: int, rep: int) -> int:
    return int(np.random.SeedSequence([seed, n, rep]).generate_state(1)[0])


GOMPERTZ_METHODS = ("laplace", "ilaplace-exact", "bruteforce")


def bench_gompertz(n_start=20, steps=15, reps=20, seed=0,
                   opts: Optional[EngineOptions] = None, threads: int = 1):
    """Relative errors of the Laplace methods against cubature truth.

    Returns (rows, slopes); slopes are least-squares fits of
    log(mean over reps of |I_hat/I - 1|) on log n, per method.
    """
    opts = opts or EngineOptions()
    cells = [(n, rep) for n in sample_sizes(n_start, steps) for rep in range(reps)]

    def run(cell):
        n, rep = cell
        s = cell_seed(seed, n, rep)
        params = {"n": n, "seed": s}
        out = []
        try:
            truth = run_method("gompertz-posterior", params, "bruteforce", opts)
        except ILaplaceError as err:
            msg = f"{type(err).__name__}: {err}"
            return [{"n": n, "rep": rep, "seed": s, "method": m, "error": msg}
                    for m in GOMPERTZ_METHODS]
        for method in GOMPERTZ_METHODS:
            row = {"n": n, "rep": rep, "seed": s, "method": method, "log_I_true": truth.log_I}
            try:
                rec = truth if method == "bruteforce" else run_method(
                    "gompertz-posterior", params, method, opts)
                row.update(log_I=rec.log_I, rel_error=abs(math.expm1(rec.log_I - truth.log_I)),
                           wall_time_ms=rec.wall_time_ms)
            except ILaplaceError as err:
                row["error"] = f"{type(err).__name__}: {err}"
            out.append(row)
        return out

    rows = [r for chunk in _pool_map(run, cells, threads) for r in chunk]
    rows.sort(key=lambda r: (r["n"], r["rep"], GOMPERTZ_METHODS.index(r["method"])))
    return rows, convergence_slopes(rows)


def convergence_slopes(rows, methods=("laplace", "ilaplace-exact")):
    slopes = []
    for method in methods:
        by_n = {}
        for r in rows:
            if r["method"] == method and r.get("error") is None and r.get("rel_error") is not None:
                by_n.setdefault(r["n"], []).append(r["rel_error"])
        ns = sorted(n for n, errs in by_n.items() if np.mean(errs) > 0)
        if len(ns) >= 2:
            x = np.log(ns)
            y = np.log([np.mean(by_n[n]) for n in ns])
            slope, intercept = np.polyfit(x, y, 1)
        else:
            slope = intercept = float("nan")
        slopes.append({"method": method, "slope": float(slope), "intercept": float(intercept),
                       "n_cells": sum(len(by_n[n]) for n in ns), "n_sizes": len(ns)})
    return slopes
