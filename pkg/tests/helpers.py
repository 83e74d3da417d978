"""Test-only objectives and small utilities."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, special

from ilaplace.function_model import Objective
from ilaplace.models import block_sum, gompertz_sample


def gompertz_log_alpha_term(y, beta=3.0, prior_var=100.0) -> Objective:
    """1-d Gompertz negative log posterior in t = log(alpha) with beta held fixed."""
    y = np.asarray(y, dtype=float)
    m = len(y)
    s = float(np.sum(np.expm1(beta * y)))
    const = m * math.log(beta) + beta * float(np.sum(y))

    def value(x):
        t = float(x[0])
        if t > 700.0:
            return math.inf
        return -(m * t + const - math.exp(t) * s) + t * t / (2 * prior_var)

    return Objective(
        1, value,
        lambda x: np.array([-m + math.exp(float(x[0])) * s + float(x[0]) / prior_var]),
        lambda x: np.array([[math.exp(float(x[0])) * s + 1.0 / prior_var]]),
    )


def logistic_term(y, b, sigma2) -> Objective:
    """softplus(b + u) - y (b + u) + u^2 / (2 sigma2)."""

    def value(x):
        eta = b + float(x[0])
        return float(np.logaddexp(0.0, eta)) - y * eta + float(x[0]) ** 2 / (2 * sigma2)

    def grad(x):
        return np.array([special.expit(b + float(x[0])) - y + float(x[0]) / sigma2])

    def hess(x):
        p = special.expit(b + float(x[0]))
        return np.array([[p * (1 - p) + 1.0 / sigma2]])

    return Objective(1, value, grad, hess)


def separable_parts(d=10, seed=7):
    """Alternating Gompertz-style and logistic 1-d terms."""
    rng = np.random.default_rng(seed)
    parts = []
    for i in range(d):
        if i % 2 == 0:
            parts.append(gompertz_log_alpha_term(gompertz_sample(2.0, 3.0, 5 + 3 * i, seed + i)))
        else:
            parts.append(logistic_term(float(rng.integers(0, 2)), float(rng.normal()),
                                       float(rng.uniform(0.5, 2.0))))
    return parts


def separable_objective(d=10, seed=7):
    parts = separable_parts(d, seed)
    return block_sum(parts), parts


def log_integral_1d(obj: Objective) -> float:
    """log of the integral of exp(-g) for a 1-d objective, by scipy on a shifted integrand."""
    from scipy import optimize
    res = optimize.minimize_scalar(lambda t: obj.value_fn(np.array([t])), bracket=(-1.0, 1.0),
                                   tol=1e-12)
    t0, g0 = float(res.x), float(res.fun)
    f = lambda t: math.exp(min(g0 - obj.value_fn(np.array([t])), 700.0))
    val = (integrate.quad(f, -np.inf, t0, epsabs=0, epsrel=1e-13, limit=500)[0]
           + integrate.quad(f, t0, np.inf, epsabs=0, epsrel=1e-13, limit=500)[0])
    return math.log(val) - g0


def fd_gradient(f, x, step=1e-6):
    """Plain central differences, independent of the package's helpers."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        h = step * (1 + abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_jacobian(grad, x, step=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = step * (1 + abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(grad(x + e)) - np.asarray(grad(x - e))) / (2 * h))
    return np.column_stack(cols)
