"""Evaluable objectives h(x) and their derivatives.

An :class:`Objective` bundles the negative log-integrand ``h`` with optional
analytic gradient and Hessian suppliers.  Missing derivatives are replaced
by central finite differences.  Objectives must be pure functions of ``x``
over immutable captured data so they can be evaluated from several threads
at once; the evaluation counter is the only mutable state and is guarded by
a lock.
"""

from __future__ import annotations

import dataclasses
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BudgetExceeded, NonFiniteObjective

EPS = np.finfo(float).eps
VALUE_STEP = EPS ** (1.0 / 3.0)
GRAD_STEP = EPS ** 0.5
SECOND_DIFF_STEP = EPS ** 0.25

DEFAULT_MAX_EVALS = 10_000_000


class EvaluationBudget:
    """Thread-safe running count of objective calls with a hard ceiling."""

    def __init__(self, max_evals: int = DEFAULT_MAX_EVALS):
        if max_evals <= 0:
            raise ValueError("max_evals must be positive")
        self.max_evals = int(max_evals)
        self._count = 0
        self._lock = threading.Lock()

    @property
    def eval_count(self) -> int:
        return self._count

    def charge(self, n: int = 1) -> None:
        with self._lock:
            if self._count + n > self.max_evals:
                raise BudgetExceeded(
                    f"evaluation budget of {self.max_evals} exhausted")
            self._count += n

    def reset(self) -> None:
        with self._lock:
            self._count = 0

    def __repr__(self):
        return f"EvaluationBudget(eval_count={self._count}, max_evals={self.max_evals})"


@dataclass(frozen=True)
class Objective:
    """The function h: R^d -> R of the integral of exp(-h).

    ``batch_fn`` optionally maps an (m, d) array of points to m values and is
    only used by brute-force cubature.  ``dependencies[i]``, when given, is
    the set of coordinates that the i-th gradient component depends on.
    """

    dim: int
    value_fn: Callable[[np.ndarray], float]
    grad_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    batch_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    dependencies: Optional[Sequence[frozenset]] = None
    budget: EvaluationBudget = field(default_factory=EvaluationBudget,
                                     compare=False, repr=False)

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError("dim must be a positive integer")

    def with_budget(self, budget: EvaluationBudget) -> "Objective":
        return dataclasses.replace(self, budget=budget)

    @property
    def eval_count(self) -> int:
        return self.budget.eval_count


def _check_point(obj: Objective, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (obj.dim,):
        raise ValueError(f"expected a point of length {obj.dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite coordinates in {x.tolist()}")
    return x


def _raw_value(obj: Objective, x: np.ndarray) -> float:
    obj.budget.charge()
    v = float(obj.value_fn(x))
    # +inf is a legitimate zero of the integrand; nan and -inf are not
    if np.isnan(v) or v == -np.inf:
        raise NonFiniteObjective(x, v)
    return v


def evaluate(obj: Objective, x) -> float:
    """Return h(x)."""
    x = _check_point(obj, x)
    return _raw_value(obj, x)


def evaluate_batch(obj: Objective, points) -> np.ndarray:
    """Evaluate h on each row of ``points`` (uses ``batch_fn`` when present)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != obj.dim:
        raise ValueError(f"expected points with {obj.dim} columns")
    if obj.batch_fn is None:
        return np.array([_raw_value(obj, p) for p in pts])
    obj.budget.charge(len(pts))
    vals = np.asarray(obj.batch_fn(pts), dtype=float)
    bad = np.isnan(vals) | (vals == -np.inf)
    if bad.any():
        i = int(np.argmax(bad))
        raise NonFiniteObjective(pts[i], vals[i])
    return vals


def gradient(obj: Objective, x) -> np.ndarray:
    """Analytic gradient of h if supplied, else central differences."""
    x = _check_point(obj, x)
    if obj.grad_fn is not None:
        obj.budget.charge()
        g = np.array(obj.grad_fn(x), dtype=float)
        if not np.all(np.isfinite(g)):
            raise NonFiniteObjective(x, g.tolist())
        return g
    return _fd_gradient(obj, x)


def _fd_gradient(obj: Objective, x: np.ndarray) -> np.ndarray:
    g = np.empty(obj.dim)
    for i in range(obj.dim):
        step = VALUE_STEP * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        fp = _raw_value(obj, xp)
        fm = _raw_value(obj, xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteObjective(xp if not np.isfinite(fp) else xm, fp)
        g[i] = (fp - fm) / (xp[i] - xm[i])
    return g


def hessian(obj: Objective, x) -> np.ndarray:
    """Symmetric Hessian of h at x.

    Analytic if supplied; otherwise central differences of the gradient, or
    second differences of values when no gradient is available either.
    """
    x = _check_point(obj, x)
    if obj.hess_fn is not None:
        obj.budget.charge()
        m = np.array(obj.hess_fn(x), dtype=float)
        if m.shape != (obj.dim, obj.dim):
            raise ValueError(f"hess_fn returned shape {m.shape}")
    elif obj.grad_fn is not None:
        m = np.empty((obj.dim, obj.dim))
        for j in range(obj.dim):
            step = GRAD_STEP * (1.0 + abs(x[j]))
            xp = x.copy()
            xm = x.copy()
            xp[j] += step
            xm[j] -= step
            m[:, j] = (gradient(obj, xp) - gradient(obj, xm)) / (xp[j] - xm[j])
    else:
        m = _fd_hessian_values(obj, x)
    if not np.all(np.isfinite(m)):
        raise NonFiniteObjective(x, "hessian")
    return (m + m.T) / 2.0


def _fd_hessian_values(obj: Objective, x: np.ndarray) -> np.ndarray:
    d = obj.dim
    steps = SECOND_DIFF_STEP * (1.0 + np.abs(x))
    f0 = _raw_value(obj, x)
    m = np.empty((d, d))

    def f(offsets):
        v = _raw_value(obj, x + offsets)
        if not np.isfinite(v):
            raise NonFiniteObjective(x + offsets, v)
        return v

    for i in range(d):
        ei = np.zeros(d)
        ei[i] = steps[i]
        m[i, i] = (f(ei) - 2.0 * f0 + f(-ei)) / steps[i] ** 2
        for j in range(i):
            ej = np.zeros(d)
            ej[j] = steps[j]
            m[i, j] = m[j, i] = (f(ei + ej) - f(ei - ej) - f(ej - ei) + f(-ei - ej)) / (
                4.0 * steps[i] * steps[j])
    return m


def finite_difference_gradient(obj: Objective, x) -> np.ndarray:
    """Central-difference gradient, ignoring any analytic supplier."""
    return _fd_gradient(obj, _check_point(obj, x))


def finite_difference_hessian(obj: Objective, x) -> np.ndarray:
    """Central differences of the (analytic, if present) gradient, symmetrized."""
    stripped = dataclasses.replace(obj, hess_fn=None)
    return hessian(stripped, x)


def permuted(obj: Objective, perm) -> Objective:
    """Reorder coordinates: coordinate i of the new objective is ``perm[i]``
    of the original."""
    perm = np.asarray(perm, dtype=int)
    d = obj.dim
    if sorted(perm.tolist()) != list(range(d)):
        raise ValueError(f"{perm.tolist()} is not a permutation of 0..{d - 1}")
    if np.array_equal(perm, np.arange(d)):
        return obj

    def unpermute(z):
        x = np.empty(d)
        x[perm] = z
        return x

    grad_fn = hess_fn = batch_fn = None
    if obj.grad_fn is not None:
        grad_fn = lambda z: np.asarray(obj.grad_fn(unpermute(z)))[perm]  # noqa: E731
    if obj.hess_fn is not None:
        hess_fn = lambda z: np.asarray(obj.hess_fn(unpermute(z)))[np.ix_(perm, perm)]  # noqa: E731
    if obj.batch_fn is not None:
        def batch_fn(zs):
            xs = np.empty_like(zs)
            xs[:, perm] = zs
            return obj.batch_fn(xs)
    deps = None
    if obj.dependencies is not None:
        inv = np.empty(d, dtype=int)
        inv[perm] = np.arange(d)
        deps = [frozenset(int(inv[j]) for j in obj.dependencies[p]) for p in perm]
    return Objective(d, lambda z: obj.value_fn(unpermute(z)), grad_fn, hess_fn,
                     batch_fn, deps, obj.budget)
