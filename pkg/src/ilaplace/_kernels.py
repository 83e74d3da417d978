"""Hot numeric kernels of the built-in models.

Each kernel has a loop-style core that numba compiles with ``@njit`` and a
vectorized numpy twin.  Set ``ILAPLACE_DISABLE_NUMBA=1`` (or run without
numba installed) to use the numpy path.  Both paths are importable
directly as ``numba_impl`` / ``numpy_impl`` for benchmarking and tests.
"""

import math
import os
from types import SimpleNamespace

import numpy as np

_DISABLED = os.environ.get("ILAPLACE_DISABLE_NUMBA", "").strip().lower() in (
    "1", "true", "yes", "on")


# ---------------------------------------------------------------------------
# Loop cores (numba targets)
# ---------------------------------------------------------------------------


def _softplus(eta):
    if eta > 0.0:
        return eta + math.log1p(math.exp(-eta))
    return math.log1p(math.exp(eta))


def _sigmoid(eta):
    if eta >= 0.0:
        return 1.0 / (1.0 + math.exp(-eta))
    e = math.exp(eta)
    return e / (1.0 + e)


def _alpha_expm1(t1, by):
    # alpha (e^{by} - 1): expm1 keeps small by exact, the log form keeps
    # alpha = e^{t1} from underflowing against a huge e^{by}
    if by > 1.0:
        return math.exp(t1 + by + math.log1p(-math.exp(-by)))
    return math.exp(t1) * math.expm1(by)


def _gompertz_value_loop(t1, t2, y):
    if t1 > 709.0 or t2 > 709.0:
        return math.inf
    beta = math.exp(t2)
    total = 0.0
    for i in range(y.shape[0]):
        by = beta * y[i]
        if t1 + by > 709.0:
            return math.inf
        total -= t1 + t2 + by - _alpha_expm1(t1, by)
    return total


def _gompertz_derivs_loop(t1, t2, y):
    beta = math.exp(t2)
    n = y.shape[0]
    s_a = 0.0
    s_eb = 0.0
    s_ebb = 0.0
    s_b = 0.0
    for i in range(n):
        by = beta * y[i]
        e = math.exp(t1 + by)
        s_a += _alpha_expm1(t1, by)
        s_eb += e * by
        s_ebb += e * by * by
        s_b += by
    out = np.empty(5)
    out[0] = -n + s_a
    out[1] = -n - s_b + s_eb
    out[2] = s_a
    out[3] = s_eb
    out[4] = -s_b + s_eb + s_ebb
    return out


def _gompertz_batch_loop(thetas, y):
    m = thetas.shape[0]
    out = np.empty(m)
    for k in range(m):
        out[k] = _gompertz_value_loop(thetas[k, 0], thetas[k, 1], y)
    return out


def _glmm_value_loop(u, y, beta, sigma2):
    total = 0.0
    for i in range(u.shape[0]):
        eta = beta + u[i]
        total += _softplus(eta) - y[i] * eta + u[i] * u[i] / (2.0 * sigma2)
    return total + 0.5 * u.shape[0] * math.log(2.0 * math.pi * sigma2)


def _glmm_grad_loop(u, y, beta, sigma2):
    g = np.empty(u.shape[0])
    for i in range(u.shape[0]):
        g[i] = _sigmoid(beta + u[i]) - y[i] + u[i] / sigma2
    return g


def _glmm_hessdiag_loop(u, beta, sigma2):
    h = np.empty(u.shape[0])
    for i in range(u.shape[0]):
        p = _sigmoid(beta + u[i])
        h[i] = p * (1.0 - p) + 1.0 / sigma2
    return h


def _glmm_batch_loop(us, y, beta, sigma2):
    m = us.shape[0]
    out = np.empty(m)
    for k in range(m):
        out[k] = _glmm_value_loop(us[k], y, beta, sigma2)
    return out


def _skewt_batch_loop(ys, a, c, nu, log_const):
    m, d = ys.shape
    out = np.empty(m)
    ac = a + c
    for k in range(m):
        y1 = ys[k, 0]
        s = 0.0
        for j in range(d):
            s += ys[k, j] * ys[k, j]
        w = math.sqrt(ac + y1 * y1)
        if y1 >= 0.0:
            log1p_u = math.log1p(y1 / w)
            log1m_u = math.log(ac) - math.log(w) - math.log(w + y1)
        else:
            log1p_u = math.log(ac) - math.log(w) - math.log(w - y1)
            log1m_u = math.log1p(-y1 / w)
        out[k] = (-log_const
                  - 0.5 * (nu + 1.0) * math.log1p(y1 * y1 / nu)
                  - (a + 0.5) * log1p_u - (c + 0.5) * log1m_u
                  + 0.5 * (nu + d) * math.log1p(s / nu))
    return out


# ---------------------------------------------------------------------------
# Vectorized numpy twins
# ---------------------------------------------------------------------------


def _np_softplus(eta):
    return np.logaddexp(0.0, eta)


def _np_sigmoid(eta):
    return np.exp(-np.logaddexp(0.0, -eta))


def _np_alpha_expm1(t1, by):
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        big = np.exp(t1 + by + np.log1p(-np.exp(-by)))
        small = np.exp(t1) * np.expm1(np.minimum(by, 1.0))
    return np.where(by > 1.0, big, small)


def _gompertz_value_np(t1, t2, y):
    if t1 > 709.0 or t2 > 709.0:
        return math.inf
    by = math.exp(t2) * y
    if by.size and t1 + by.max() > 709.0:
        return math.inf
    return float(-np.sum(t1 + t2 + by - _np_alpha_expm1(t1, by)))


def _gompertz_derivs_np(t1, t2, y):
    by = math.exp(t2) * y
    e = np.exp(t1 + by)
    n = y.shape[0]
    s_a = _np_alpha_expm1(t1, by).sum()
    s_eb = (e * by).sum()
    s_b = by.sum()
    return np.array([-n + s_a, -n - s_b + s_eb, s_a, s_eb,
                     -s_b + s_eb + (e * by * by).sum()])


def _gompertz_batch_np(thetas, y):
    t1 = thetas[:, :1]
    t2 = thetas[:, 1:2]
    with np.errstate(over="ignore", invalid="ignore"):
        by = np.exp(t2) * y[None, :]
        arg = t1 + by
        vals = -np.sum(t1 + t2 + by - _np_alpha_expm1(t1, by), axis=1)
    vals[arg.max(axis=1, initial=-np.inf) > 709.0] = np.inf
    return vals


def _glmm_value_np(u, y, beta, sigma2):
    eta = beta + u
    return float(np.sum(_np_softplus(eta) - y * eta + u * u / (2.0 * sigma2))
                 + 0.5 * u.shape[0] * math.log(2.0 * math.pi * sigma2))


def _glmm_grad_np(u, y, beta, sigma2):
    return _np_sigmoid(beta + u) - y + u / sigma2


def _glmm_hessdiag_np(u, beta, sigma2):
    p = _np_sigmoid(beta + u)
    return p * (1.0 - p) + 1.0 / sigma2


def _glmm_batch_np(us, y, beta, sigma2):
    eta = beta + us
    return (np.sum(_np_softplus(eta) - y * eta + us * us / (2.0 * sigma2), axis=1)
            + 0.5 * us.shape[1] * math.log(2.0 * math.pi * sigma2))


def _skewt_batch_np(ys, a, c, nu, log_const):
    d = ys.shape[1]
    y1 = ys[:, 0]
    s = np.sum(ys * ys, axis=1)
    ac = a + c
    w = np.sqrt(ac + y1 * y1)
    pos = y1 >= 0.0
    log1p_u = np.where(pos, np.log1p(np.abs(y1) / w * pos),
                       np.log(ac) - np.log(w) - np.log(w + np.abs(y1)))
    log1m_u = np.where(pos, np.log(ac) - np.log(w) - np.log(w + np.abs(y1)),
                       np.log1p(np.abs(y1) / w * ~pos))
    return (-log_const - 0.5 * (nu + 1.0) * np.log1p(y1 * y1 / nu)
            - (a + 0.5) * log1p_u - (c + 0.5) * log1m_u
            + 0.5 * (nu + d) * np.log1p(s / nu))


numpy_impl = SimpleNamespace(
    gompertz_value=_gompertz_value_np,
    gompertz_derivs=_gompertz_derivs_np,
    gompertz_batch=_gompertz_batch_np,
    glmm_value=_glmm_value_np,
    glmm_grad=_glmm_grad_np,
    glmm_hessdiag=_glmm_hessdiag_np,
    glmm_batch=_glmm_batch_np,
    skewt_batch=_skewt_batch_np,
)

numba_impl = None
try:
    if not _DISABLED:
        from numba import njit

        _jit = njit(cache=True, nogil=True)
        # helpers first so the kernels resolve them as compiled globals
        _softplus = _jit(_softplus)
        _sigmoid = _jit(_sigmoid)
        _alpha_expm1 = _jit(_alpha_expm1)
        _gompertz_value_loop = _jit(_gompertz_value_loop)
        _glmm_value_loop = _jit(_glmm_value_loop)
        numba_impl = SimpleNamespace(
            gompertz_value=_gompertz_value_loop,
            gompertz_derivs=_jit(_gompertz_derivs_loop),
            gompertz_batch=_jit(_gompertz_batch_loop),
            glmm_value=_glmm_value_loop,
            glmm_grad=_jit(_glmm_grad_loop),
            glmm_hessdiag=_jit(_glmm_hessdiag_loop),
            glmm_batch=_jit(_glmm_batch_loop),
            skewt_batch=_jit(_skewt_batch_loop),
        )
except ImportError:
    numba_impl = None

NUMBA_ENABLED = numba_impl is not None
active = numba_impl if NUMBA_ENABLED else numpy_impl
