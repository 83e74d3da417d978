"""Standard Laplace approximation and the sequential Laplace profile densities.

All quantities are log densities.  The profile of coordinate k (0-based,
after permutation) fixes the leading coordinates at their modal values,
sets coordinate k to t and replaces the trailing block by its (exact or
linearized) conditional minimum:

    h(x_hat) - h(x) + 0.5 * [log|V_{k:}(x_hat)| - log(2 pi) - log|V_{k+1:}(x)|]

For k = 0 this is the Tierney-Kadane marginal; for the last coordinate the
trailing block is empty and no minimization is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HessianNotPD
from .function_model import Objective, evaluate, hessian, permuted
from .optimize import (DEFAULT_GRAD_TOL, DEFAULT_MAX_ITER, ModeInfo, _conditional_solve,
                       chol_solve, cholesky_logdet)

LOG_2PI = math.log(2.0 * math.pi)
STRATEGIES = ("exact", "approximate")


@dataclass(frozen=True)
class LaplaceResult:
    log_I: float
    logdet_V_hat: float
    dim: int


def log_laplace(obj: Objective, mode: ModeInfo) -> LaplaceResult:
    """(d/2) log 2pi - 0.5 log|V_hat| - h(x_hat)."""
    d = mode.dim
    return LaplaceResult(0.5 * d * LOG_2PI - 0.5 * mode.logdet_V_hat - mode.h_hat,
                         mode.logdet_V_hat, d)


def gradient_order(obj: Objective) -> np.ndarray:
    """Coordinate order putting first the coordinates whose gradient component
    depends on the most coordinates.  Identity without declared dependencies."""
    d = obj.dim
    if obj.dependencies is None:
        return np.arange(d)
    sizes = [len(obj.dependencies[i]) for i in range(d)]
    return np.array(sorted(range(d), key=lambda i: (-sizes[i], i)))


def resolve_permutation(obj: Objective, permutation) -> np.ndarray:
    d = obj.dim
    if permutation is None or (isinstance(permutation, str) and permutation == "identity"):
        return np.arange(d)
    if isinstance(permutation, str):
        if permutation == "auto":
            return gradient_order(obj)
        raise ValueError(f"unknown permutation {permutation!r}")
    perm = np.asarray(permutation, dtype=int)
    if sorted(perm.tolist()) != list(range(d)):
        raise ValueError(f"{perm.tolist()} is not a permutation of 0..{d - 1}")
    return perm


@dataclass
class ProfileContext:
    """Read-only state shared by the d profile integrations.

    ``obj`` and ``mode`` are expressed in permuted coordinates.  The only
    mutable part is ``warm_starts``, one slot per coordinate, each written
    only by the task integrating that coordinate.
    """

    obj: Objective
    mode: ModeInfo
    permutation: np.ndarray
    strategy: str = "exact"
    grad_tol: float = DEFAULT_GRAD_TOL
    max_iter: int = DEFAULT_MAX_ITER
    trailing_logdets: np.ndarray = field(init=False)
    marginal_scales: np.ndarray = field(init=False)
    approx_slopes: list = field(init=False)
    warm_starts: dict = field(init=False, default_factory=dict)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        d = self.mode.dim
        V = self.mode.V_hat
        logdets = np.zeros(d + 1)
        scales = np.empty(d)
        slopes = []
        for k in range(d):
            chol, logdets[k] = cholesky_logdet(V[k:, k:], self.mode.x_hat)
            e0 = np.zeros(d - k)
            e0[0] = 1.0
            # marginal sd of x_k given x_{<k}: sqrt of [(V_{k:})^{-1}]_{00}
            scales[k] = math.sqrt(chol_solve(chol, e0)[0])
            if k < d - 1:
                chol_zz, _ = cholesky_logdet(V[k + 1:, k + 1:], self.mode.x_hat)
                slopes.append(chol_solve(chol_zz, V[k + 1:, k]))
            else:
                slopes.append(np.zeros(0))
        self.trailing_logdets = logdets
        self.marginal_scales = scales
        self.approx_slopes = slopes

    @property
    def dim(self) -> int:
        return self.mode.dim

    def approx_trailing(self, k: int, t: float) -> np.ndarray:
        """Linearized conditional minimum of coordinates k+1.. given x_k = t."""
        return self.mode.x_hat[k + 1:] + self.approx_slopes[k] * (self.mode.x_hat[k] - t)

    def _original(self, x):
        out = np.empty_like(x)
        out[self.permutation] = x
        return out

    def _trailing(self, k: int, t: float, x: np.ndarray):
        """Fill x[k+1:]; return (h(x), Hessian block of the trailing coordinates)."""
        z0 = self.approx_trailing(k, t)
        if self.strategy == "approximate":
            x[k + 1:] = z0
            h = evaluate(self.obj, x)
            if h == math.inf:
                return h, None
            return h, hessian(self.obj, x)[k + 1:, k + 1:]
        # warm start: the better of the linearized minimum and the previous solution
        candidates = [z0]
        if k in self.warm_starts:
            candidates.append(self.warm_starts[k])
        best_h, init = math.inf, z0
        for z in candidates:
            x[k + 1:] = z
            h = evaluate(self.obj, x)
            if h < best_h:
                best_h, init = h, z
        if best_h == math.inf:
            init = self.mode.x_hat[k + 1:]
            x[k + 1:] = init
            if evaluate(self.obj, x) == math.inf:
                # no finite starting point: the slice is taken to lie off the support
                return math.inf, None
        z, h, Hzz = _conditional_solve(self.obj, k + 1, x[:k + 1], init,
                                       self.grad_tol, self.max_iter)
        self.warm_starts[k] = z
        x[k + 1:] = z
        return h, Hzz

    def log_profile(self, k: int, t: float) -> float:
        """Un-renormalized log profile density of coordinate k (0-based) at t."""
        d = self.dim
        if not 0 <= k < d:
            raise IndexError(k)
        x = self.mode.x_hat.copy()
        x[k] = t
        if k == d - 1:
            h = evaluate(self.obj, x)
            logdet_rest = 0.0
        else:
            h, Hzz = self._trailing(k, t, x)
            if h == math.inf:
                return -math.inf
            try:
                _, logdet_rest = cholesky_logdet(Hzz, x)
            except HessianNotPD as err:
                raise HessianNotPD(
                    f"trailing Hessian block for coordinate {k} not positive definite",
                    self._original(x)) from err
        if h == math.inf:
            return -math.inf
        return (self.mode.h_hat - h
                + 0.5 * (self.trailing_logdets[k] - LOG_2PI - logdet_rest))

    def log_profile_at_mode(self, k: int) -> float:
        """Profile of coordinate k at x_hat_k, from the cached logdets."""
        return 0.5 * (self.trailing_logdets[k] - LOG_2PI - self.trailing_logdets[k + 1])


def build_profile_context(obj: Objective, mode: ModeInfo, permutation=None,
                          strategy: str = "exact", grad_tol: float = DEFAULT_GRAD_TOL,
                          max_iter: int = DEFAULT_MAX_ITER) -> ProfileContext:
    perm = resolve_permutation(obj, permutation)
    return ProfileContext(permuted(obj, perm), mode.permuted(perm), perm, strategy,
                          grad_tol, max_iter)


def log_profile_marginal(ctx: ProfileContext, x1: float) -> float:
    """Laplace approximation of the log marginal density of the first coordinate."""
    return ctx.log_profile(0, x1)


def log_profile_conditional(ctx: ProfileContext, q: int, xq: float) -> float:
    """Profile of coordinate q (1-based, 2 <= q <= d-1) given the first q-1 at the mode."""
    if not 2 <= q <= ctx.dim - 1:
        raise ValueError(f"q must satisfy 2 <= q <= {ctx.dim - 1}")
    return ctx.log_profile(q - 1, xq)


def log_profile_last(ctx: ProfileContext, xd: float) -> float:
    """Profile of the last coordinate given all others at the mode."""
    if ctx.dim < 2:
        raise ValueError("requires d >= 2")
    return ctx.log_profile(ctx.dim - 1, xd)
