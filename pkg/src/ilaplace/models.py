"""Built-in integrands with analytic derivatives.

Every builder returns an :class:`~ilaplace.function_model.Objective` for
h = -log(integrand).  The registry at the bottom maps model names to
builders taking a flat parameter mapping, which is what the CLI consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from . import _kernels
from .errors import UnknownModel
from .function_model import Objective

LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Gaussian kernels
# ---------------------------------------------------------------------------


def gaussian(dim: int) -> Objective:
    """h(x) = x.x / 2; the integral is (2 pi)^(d/2)."""
    eye = np.eye(dim)
    return Objective(
        dim,
        lambda x: 0.5 * float(x @ x),
        lambda x: np.array(x, dtype=float),
        lambda x: eye.copy(),
        lambda xs: 0.5 * np.sum(xs * xs, axis=1),
        [frozenset([i]) for i in range(dim)],
    )


def quadratic(A) -> Objective:
    """h(x) = x'Ax / 2 for symmetric positive definite A."""
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    A = (A + A.T) / 2.0
    A.setflags(write=False)
    deps = [frozenset(np.flatnonzero(A[i]).tolist()) for i in range(A.shape[0])]
    return Objective(
        A.shape[0],
        lambda x: 0.5 * float(x @ A @ x),
        lambda x: A @ x,
        lambda x: A.copy(),
        lambda xs: 0.5 * np.einsum("ij,jk,ik->i", xs, A, xs),
        deps,
    )


def random_pd_matrix(dim: int, cond: float = 100.0, seed: int = 0) -> np.ndarray:
    """Random SPD matrix with eigenvalues log-spaced in [1, cond]."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    eig = np.logspace(0.0, math.log10(cond), dim) if dim > 1 else np.ones(1)
    m = (q * eig) @ q.T
    return (m + m.T) / 2.0


def block_sum(parts) -> Objective:
    """Objective of the concatenated argument: h(x) = sum_i h_i(x_i)."""
    parts = list(parts)
    sizes = [p.dim for p in parts]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    dim = int(offsets[-1])
    slices = [slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])]

    def value(x):
        return sum(float(p.value_fn(x[s])) for p, s in zip(parts, slices))

    def grad(x):
        return np.concatenate([np.asarray(p.grad_fn(x[s]), dtype=float)
                               for p, s in zip(parts, slices)])

    def hess(x):
        out = np.zeros((dim, dim))
        for p, s in zip(parts, slices):
            out[s, s] = p.hess_fn(x[s])
        return out

    have_derivs = all(p.grad_fn is not None and p.hess_fn is not None for p in parts)
    deps = [frozenset(range(s.start, s.stop)) for s in slices for _ in range(s.start, s.stop)]
    return Objective(dim, value, grad if have_derivs else None,
                     hess if have_derivs else None, None, deps)


# ---------------------------------------------------------------------------
# Multivariate t / skew-t
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SkewTParams:
    dim: int
    a: float
    c: float
    nu: float

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not (self.a > 0 and self.c > 0 and self.nu > 0):
            raise ValueError("a, c and nu must be positive")

    @property
    def log_normalizer(self) -> float:
        """log of the density's constant factor."""
        a, c, nu, d = self.a, self.c, self.nu, self.dim
        log_beta = math.lgamma(a) + math.lgamma(c) - math.lgamma(a + c)
        return (math.lgamma(0.5 * (nu + d)) - math.lgamma(0.5 * (nu + 1.0)) - log_beta
                - 0.5 * math.log(a + c) - (a + c - 1.0) * math.log(2.0)
                - 0.5 * (d - 1) * math.log(nu * math.pi))


def _skew_pieces(y1, a, c):
    ac = a + c
    w = math.sqrt(ac + y1 * y1)
    if y1 >= 0.0:
        log1p_u = math.log1p(y1 / w)
        log1m_u = math.log(ac) - math.log(w) - math.log(w + y1)
        inv1p = w / (w + y1)
        inv1m = w * (w + y1) / ac
    else:
        log1p_u = math.log(ac) - math.log(w) - math.log(w - y1)
        log1m_u = math.log1p(-y1 / w)
        inv1p = w * (w - y1) / ac
        inv1m = w / (w - y1)
    return w, log1p_u, log1m_u, inv1p, inv1m


def skew_t_neg_log_density(p: SkewTParams, y) -> float:
    """-log of the multivariate t/skew-t density (integrates to exactly 1)."""
    y = np.asarray(y, dtype=float)
    a, c, nu, d = p.a, p.c, p.nu, p.dim
    y1 = float(y[0])
    _, log1p_u, log1m_u, _, _ = _skew_pieces(y1, a, c)
    s = float(y @ y)
    return (-p.log_normalizer - 0.5 * (nu + 1.0) * math.log1p(y1 * y1 / nu)
            - (a + 0.5) * log1p_u - (c + 0.5) * log1m_u
            + 0.5 * (nu + d) * math.log1p(s / nu))


def _skew_t_grad(p: SkewTParams, y):
    a, c, nu, d = p.a, p.c, p.nu, p.dim
    y = np.asarray(y, dtype=float)
    y1 = float(y[0])
    w, _, _, inv1p, inv1m = _skew_pieces(y1, a, c)
    du = (a + c) / w ** 3
    dg = -(a + 0.5) * inv1p + (c + 0.5) * inv1m
    g = (nu + d) * y / (nu + float(y @ y))
    g[0] += dg * du - (nu + 1.0) * y1 / (nu + y1 * y1)
    return g


def _skew_t_hess(p: SkewTParams, y):
    a, c, nu, d = p.a, p.c, p.nu, p.dim
    y = np.asarray(y, dtype=float)
    y1 = float(y[0])
    w, _, _, inv1p, inv1m = _skew_pieces(y1, a, c)
    ac = a + c
    du = ac / w ** 3
    d2u = -3.0 * ac * y1 / w ** 5
    dg = -(a + 0.5) * inv1p + (c + 0.5) * inv1m
    d2g = (a + 0.5) * inv1p ** 2 + (c + 0.5) * inv1m ** 2
    r = nu + float(y @ y)
    H = (nu + d) * (np.eye(d) / r - 2.0 * np.outer(y, y) / r ** 2)
    H[0, 0] += d2g * du * du + dg * d2u - (nu + 1.0) * (nu - y1 * y1) / (nu + y1 * y1) ** 2
    return H


def skew_t(p: SkewTParams) -> Objective:
    log_const = p.log_normalizer
    kern = _kernels.active
    full = frozenset(range(p.dim))
    return Objective(
        p.dim,
        lambda y: skew_t_neg_log_density(p, y),
        lambda y: _skew_t_grad(p, y),
        lambda y: _skew_t_hess(p, y),
        lambda ys: kern.skewt_batch(np.ascontiguousarray(ys, dtype=float),
                                    p.a, p.c, p.nu, log_const),
        [full] * p.dim,
    )


# ---------------------------------------------------------------------------
# Gompertz posterior
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GompertzPosterior:
    """Posterior of (log alpha, log beta) under independent N(0, prior_sd^2) priors."""

    data: np.ndarray
    prior_sd: float = 10.0

    def __post_init__(self):
        y = np.ascontiguousarray(self.data, dtype=float)
        if y.ndim != 1 or y.size == 0 or np.any(y <= 0) or not np.all(np.isfinite(y)):
            raise ValueError("data must be a non-empty vector of positive reals")
        y.setflags(write=False)
        object.__setattr__(self, "data", y)
        if not self.prior_sd > 0:
            raise ValueError("prior_sd must be positive")


def gompertz_neg_log_posterior(m: GompertzPosterior, theta) -> float:
    t1, t2 = float(theta[0]), float(theta[1])
    v = _kernels.active.gompertz_value(t1, t2, m.data)
    s2 = m.prior_sd ** 2
    return v + (t1 * t1 + t2 * t2) / (2.0 * s2) + math.log(2.0 * math.pi * s2)


def gompertz_posterior(m: GompertzPosterior) -> Objective:
    kern = _kernels.active
    y = m.data
    s2 = m.prior_sd ** 2
    prior_const = math.log(2.0 * math.pi * s2)

    def grad(theta):
        dv = kern.gompertz_derivs(float(theta[0]), float(theta[1]), y)
        return np.array([dv[0] + theta[0] / s2, dv[1] + theta[1] / s2])

    def hess(theta):
        dv = kern.gompertz_derivs(float(theta[0]), float(theta[1]), y)
        return np.array([[dv[2] + 1.0 / s2, dv[3]], [dv[3], dv[4] + 1.0 / s2]])

    def batch(thetas):
        thetas = np.ascontiguousarray(thetas, dtype=float)
        return (kern.gompertz_batch(thetas, y)
                + np.sum(thetas * thetas, axis=1) / (2.0 * s2) + prior_const)

    full = frozenset([0, 1])
    return Objective(2, lambda t: gompertz_neg_log_posterior(m, t), grad, hess, batch,
                     [full, full])


def gompertz_sample(alpha: float, beta: float, n: int, seed: int) -> np.ndarray:
    """Inverse-CDF draws from F(y) = 1 - exp{alpha (1 - e^{beta y})}."""
    if not (alpha > 0 and beta > 0):
        raise ValueError("alpha and beta must be positive")
    u = np.random.default_rng(seed).uniform(size=int(n))
    return gompertz_quantile(u, alpha, beta)


def gompertz_quantile(u, alpha: float, beta: float):
    u = np.asarray(u, dtype=float)
    return np.log1p(-np.log1p(-u) / alpha) / beta


def gompertz_start(m: GompertzPosterior) -> np.ndarray:
    """Crude starting point: beta from the sample scale, alpha from the mean equation."""
    beta = 1.0 / float(np.mean(m.data))
    alpha = 1.0 / max(float(np.mean(np.expm1(beta * m.data))), 1e-8)
    return np.array([math.log(alpha), math.log(beta)])


# ---------------------------------------------------------------------------
# Binary random-intercept GLMM
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BinaryGLMM:
    """Bernoulli-logit model logit(p_i) = beta + u_i with u_i ~ N(0, sigma2)."""

    responses: np.ndarray
    beta: float
    sigma2: float

    def __post_init__(self):
        y = np.ascontiguousarray(self.responses, dtype=float)
        if y.ndim != 1 or y.size == 0 or not np.all((y == 0) | (y == 1)):
            raise ValueError("responses must be a non-empty binary vector")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        y.setflags(write=False)
        object.__setattr__(self, "responses", y)

    @property
    def n(self) -> int:
        return self.responses.shape[0]


def glmm_joint_neg_log(m: BinaryGLMM, u) -> float:
    """-log[ L(beta; u, y) f(u; sigma2) ] as a function of the random effects."""
    u = np.ascontiguousarray(u, dtype=float)
    return float(_kernels.active.glmm_value(u, m.responses, float(m.beta), float(m.sigma2)))


def glmm_integrand(m: BinaryGLMM) -> Objective:
    kern = _kernels.active
    y, beta, s2 = m.responses, float(m.beta), float(m.sigma2)
    return Objective(
        m.n,
        lambda u: glmm_joint_neg_log(m, u),
        lambda u: kern.glmm_grad(np.ascontiguousarray(u, dtype=float), y, beta, s2),
        lambda u: np.diag(kern.glmm_hessdiag(np.ascontiguousarray(u, dtype=float), beta, s2)),
        lambda us: kern.glmm_batch(np.ascontiguousarray(us, dtype=float), y, beta, s2),
        [frozenset([i]) for i in range(m.n)],
    )


def glmm_simulate(n: int, beta: float, sigma2: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    u = rng.normal(0.0, math.sqrt(sigma2), size=int(n))
    p = 1.0 / (1.0 + np.exp(-(beta + u)))
    return (rng.uniform(size=int(n)) < p).astype(float)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------


@dataclass
class ModelInstance:
    name: str
    params: dict
    objective: Objective
    x0: np.ndarray
    log_truth: Optional[float] = None
    extra: dict = field(default_factory=dict)


def _get(params, key, default, cast):
    v = params.get(key, default)
    try:
        return cast(v)
    except (TypeError, ValueError):
        raise ValueError(f"parameter {key!r}: cannot interpret {v!r}") from None


def _build_gaussian(params):
    d = _get(params, "dim", 2, int)
    return ModelInstance("gaussian", {"dim": d}, gaussian(d), np.full(d, 0.5),
                         0.5 * d * LOG_2PI)


def _parse_matrix(text):
    rows = [[float(v) for v in r.split(",")] for r in str(text).split(";")]
    return np.array(rows)


def _build_quadratic(params):
    if "matrix" in params:
        A = _parse_matrix(params["matrix"])
        norm = {"matrix": params["matrix"]}
    else:
        d = _get(params, "dim", 2, int)
        cond = _get(params, "cond", 100.0, float)
        seed = _get(params, "seed", 0, int)
        A = random_pd_matrix(d, cond, seed)
        norm = {"dim": d, "cond": cond, "seed": seed}
    logdet = float(np.linalg.slogdet(A)[1])
    d = A.shape[0]
    return ModelInstance("quadratic", norm, quadratic(A), np.full(d, 0.5),
                         0.5 * d * LOG_2PI - 0.5 * logdet)


def _build_skew_t(params):
    p = SkewTParams(_get(params, "dim", 2, int), _get(params, "a", 1.5, float),
                    _get(params, "c", 1.5, float), _get(params, "nu", 3.0, float))
    return ModelInstance("skew-t", {"dim": p.dim, "a": p.a, "c": p.c, "nu": p.nu},
                         skew_t(p), np.zeros(p.dim), 0.0, {"skew_t": p})


def _build_gompertz(params):
    n = _get(params, "n", 20, int)
    seed = _get(params, "seed", 1, int)
    alpha = _get(params, "alpha", 2.0, float)
    beta = _get(params, "beta", 3.0, float)
    prior_sd = _get(params, "prior_sd", 10.0, float)
    m = GompertzPosterior(gompertz_sample(alpha, beta, n, seed), prior_sd)
    return ModelInstance("gompertz-posterior",
                         {"n": n, "seed": seed, "alpha": alpha, "beta": beta,
                          "prior_sd": prior_sd},
                         gompertz_posterior(m), gompertz_start(m), None, {"model": m})


def _build_glmm(params):
    n = _get(params, "n", 10, int)
    seed = _get(params, "seed", 1, int)
    gen_beta = _get(params, "gen_beta", 2.0, float)
    gen_sigma2 = _get(params, "gen_sigma2", 1.0, float)
    beta = _get(params, "beta", gen_beta, float)
    sigma2 = _get(params, "sigma2", gen_sigma2, float)
    m = BinaryGLMM(glmm_simulate(n, gen_beta, gen_sigma2, seed), beta, sigma2)
    return ModelInstance("glmm-binary",
                         {"n": n, "seed": seed, "gen_beta": gen_beta, "gen_sigma2": gen_sigma2,
                          "beta": beta, "sigma2": sigma2},
                         glmm_integrand(m), np.zeros(n), None, {"model": m})


MODELS: Mapping[str, Callable[[Mapping], ModelInstance]] = {
    "gaussian": _build_gaussian,
    "quadratic": _build_quadratic,
    "skew-t": _build_skew_t,
    "gompertz-posterior": _build_gompertz,
    "glmm-binary": _build_glmm,
}


def build_model(name: str, params: Optional[Mapping] = None) -> ModelInstance:
    try:
        builder = MODELS[name]
    except KeyError:
        raise UnknownModel(f"unknown model {name!r}; known: {', '.join(MODELS)}") from None
    return builder(dict(params or {}))
