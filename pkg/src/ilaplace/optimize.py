"""Global and conditional minimization of h.

Damped Newton with Armijo backtracking, falling back to steepest descent
whenever the Hessian is not positive definite at an iterate.  Conditional
minimization runs the same iteration on the trailing coordinate block with
the leading block held fixed.  ``approx_conditional_minimum`` is the
one-step linear regression of the trailing block on the fixed block around
the global mode, exact for quadratic h.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HessianNotPD, NoConvergence, NonFiniteObjective
from .function_model import Objective, evaluate, gradient, hessian

DEFAULT_GRAD_TOL = 1e-8
DEFAULT_MAX_ITER = 200
ARMIJO_SLOPE = 1e-4
CONTRACTION = 0.5
MAX_BACKTRACKS = 60
# a Newton step predicting less decrease than this (relative to 1 + |h|) is
# below what h can resolve; the gradient is then rounding noise
DECREMENT_FLOOR = 64.0 * np.finfo(float).eps


def cholesky_logdet(m, point=None):
    """Lower Cholesky factor of ``m`` and log|m|; HessianNotPD on failure."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return m.reshape(0, 0), 0.0
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise HessianNotPD(f"{m.shape[0]}x{m.shape[0]} Hessian block is not positive definite",
                           point) from None
    diag = np.diag(chol)
    if not np.all(diag > 0) or not np.all(np.isfinite(diag)):
        raise HessianNotPD("Hessian block has a non-positive pivot", point)
    return chol, 2.0 * float(np.sum(np.log(diag)))


def chol_solve(chol, b):
    """Solve (L L^T) x = b given the lower factor L."""
    y = np.linalg.solve(chol, b)
    return np.linalg.solve(chol.T, y)


@dataclass(frozen=True)
class ModeInfo:
    x_hat: np.ndarray
    h_hat: float
    V_hat: np.ndarray
    chol_V_hat: np.ndarray
    logdet_V_hat: float
    grad_hat: np.ndarray
    n_iter: int = 0

    @property
    def dim(self):
        return self.x_hat.shape[0]

    @classmethod
    def from_point(cls, x, h, g, V, n_iter=0):
        V = (np.asarray(V, dtype=float) + np.asarray(V, dtype=float).T) / 2.0
        chol, logdet = cholesky_logdet(V, x)
        arrays = [np.array(a, dtype=float) for a in (x, V, chol, g)]
        for a in arrays:
            a.setflags(write=False)
        x, V, chol, g = arrays
        return cls(x, float(h), V, chol, logdet, g, n_iter)

    def permuted(self, perm) -> "ModeInfo":
        perm = np.asarray(perm, dtype=int)
        if np.array_equal(perm, np.arange(self.dim)):
            return self
        return ModeInfo.from_point(self.x_hat[perm], self.h_hat, self.grad_hat[perm],
                                   self.V_hat[np.ix_(perm, perm)], self.n_iter)


def _safe_value(f, x):
    try:
        v = f(x)
    except NonFiniteObjective:
        return np.inf
    return v if np.isfinite(v) else np.inf


def _line_search(f, x, fx, g, p):
    slope = float(g @ p)
    step = 1.0
    for _ in range(MAX_BACKTRACKS):
        x_new = x + step * p
        f_new = _safe_value(f, x_new)
        if f_new <= fx + ARMIJO_SLOPE * step * slope:
            return x_new, f_new
        step *= CONTRACTION
    return None, None


def _newton_direction(g, H):
    try:
        chol = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        return None
    p = -chol_solve(chol, g)
    if not np.all(np.isfinite(p)) or g @ p >= 0:
        return None
    return p


def _damped_newton(f, grad, hess, x0, grad_tol, max_iter):
    """Minimize f from x0.  Returns (x, f(x), grad(x), hess(x), iterations)."""
    x = np.array(x0, dtype=float)
    fx = f(x)
    if not np.isfinite(fx):
        raise NoConvergence(f"objective is infinite at the starting point {x.tolist()}")
    for it in range(max_iter + 1):
        g = grad(x)
        H = hess(x)
        if np.max(np.abs(g), initial=0.0) <= grad_tol * (1.0 + abs(fx)):
            return _polish(f, grad, hess, x, fx, g, H) + (it,)
        if it == max_iter:
            break
        x_new = None
        p = _newton_direction(g, H)
        if p is not None and -0.5 * float(g @ p) <= DECREMENT_FLOOR * (1.0 + abs(fx)):
            return _polish(f, grad, hess, x, fx, g, H) + (it,)
        if p is not None:
            x_new, f_new = _line_search(f, x, fx, g, p)
        if x_new is None:
            p = -g / max(1.0, float(np.max(np.abs(g))))
            x_new, f_new = _line_search(f, x, fx, g, p)
        if x_new is None:
            raise NoConvergence(
                f"line search failed at x={x.tolist()} with |grad|={np.max(np.abs(g)):.3e}")
        x, fx = x_new, f_new
    raise NoConvergence(f"no convergence after {max_iter} iterations; "
                        f"|grad|={np.max(np.abs(g)):.3e} at x={x.tolist()}")


def _polish(f, grad, hess, x, fx, g, H):
    # one extra full Newton step: removes the tolerance-sized residual
    p = _newton_direction(g, H)
    if p is None:
        return x, fx, g, H
    x_new = x + p
    f_new = _safe_value(f, x_new)
    if not f_new <= fx + 4.0 * np.finfo(float).eps * (1.0 + abs(fx)):
        return x, fx, g, H
    g_new = grad(x_new)
    if np.max(np.abs(g_new), initial=0.0) >= np.max(np.abs(g), initial=0.0):
        return x, fx, g, H
    return x_new, f_new, g_new, hess(x_new)


def minimize(obj: Objective, x0, grad_tol: float = DEFAULT_GRAD_TOL,
             max_iter: int = DEFAULT_MAX_ITER) -> ModeInfo:
    """Global minimizer of h with its Hessian and log-determinant.

    Convergence means max|grad h| <= grad_tol * (1 + |h|), or a Newton
    decrement too small for h to resolve.
    """
    if grad_tol <= 0:
        raise ValueError("grad_tol must be positive")
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (obj.dim,) or not np.all(np.isfinite(x0)):
        raise ValueError(f"x0 must be a finite vector of length {obj.dim}")
    x, fx, g, H, it = _damped_newton(
        lambda x: evaluate(obj, x), lambda x: gradient(obj, x),
        lambda x: hessian(obj, x), x0, grad_tol, max_iter)
    return ModeInfo.from_point(x, fx, g, H, it)


def _conditional_solve(obj: Objective, q: int, fixed_vals, init, grad_tol, max_iter):
    d = obj.dim
    fixed_vals = np.asarray(fixed_vals, dtype=float).reshape(q)

    def full(z):
        x = np.empty(d)
        x[:q] = fixed_vals
        x[q:] = z
        return x

    z, fz, _, Hzz, _ = _damped_newton(
        lambda z: evaluate(obj, full(z)),
        lambda z: gradient(obj, full(z))[q:],
        lambda z: hessian(obj, full(z))[q:, q:],
        init, grad_tol, max_iter)
    return z, fz, Hzz


def conditional_minimize(obj: Objective, fixed_count: int, fixed_vals, init,
                         grad_tol: float = DEFAULT_GRAD_TOL,
                         max_iter: int = DEFAULT_MAX_ITER) -> np.ndarray:
    """Minimizer over the trailing d - q coordinates with the first q fixed."""
    q = int(fixed_count)
    if not 1 <= q < obj.dim:
        raise ValueError(f"fixed_count must satisfy 1 <= q < {obj.dim}")
    init = np.asarray(init, dtype=float).reshape(obj.dim - q)
    z, _, Hzz = _conditional_solve(obj, q, fixed_vals, init, grad_tol, max_iter)
    cholesky_logdet(Hzz, np.concatenate([np.asarray(fixed_vals, float).reshape(q), z]))
    return z


def approx_conditional_minimum(mode: ModeInfo, fixed_count: int, fixed_vals) -> np.ndarray:
    """Linearized conditional minimum z_hat + V_zz^{-1} V_zy (y_hat - y)."""
    q = int(fixed_count)
    if not 0 <= q < mode.dim:
        raise ValueError(f"fixed_count must satisfy q < {mode.dim}")
    y = np.asarray(fixed_vals, dtype=float).reshape(q)
    V = mode.V_hat
    chol_zz, _ = cholesky_logdet(V[q:, q:], mode.x_hat)
    return mode.x_hat[q:] + chol_solve(chol_zz, V[q:, :q] @ (mode.x_hat[:q] - y))
