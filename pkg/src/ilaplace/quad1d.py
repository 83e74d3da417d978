"""Adaptive one-dimensional quadrature of exp(log_f) over the real line.

The integrand is supplied in log space.  Values are shifted by their running
maximum before exponentiation, so profiles whose log-values sit far from zero
integrate without overflow or underflow.  Infinite ranges are truncated by an
outward doubling search for points where the log-profile has dropped a fixed
amount below its central value.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NonFiniteObjective, ToleranceNotMet, UnboundedProfile

DEFAULT_REL_TOL = 1e-8
DEFAULT_ABS_TOL = 1e-12
DEFAULT_TAIL_DROP = 30.0
MAX_PANELS = 2000
MAX_DOUBLINGS = 60

# 15-point Kronrod nodes on [0, 1] (mirrored), with the embedded 7-point Gauss rule
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WK[:-1], _WK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[1:7:2] = _WG[:3]
GAUSS_WEIGHTS[7] = _WG[3]
GAUSS_WEIGHTS[9:14:2] = _WG[2::-1]


@dataclass(frozen=True)
class QuadratureResult:
    """``abs_err_est`` is on the linear scale after dividing by exp(log_scale)."""

    log_value: float
    abs_err_est: float
    n_evals: int
    log_scale: float = 0.0
    lo: float = -math.inf
    hi: float = math.inf
    n_panels: int = 0

    @property
    def value(self) -> float:
        return math.exp(self.log_value)


def _as_vector_fn(log_f, vectorized):
    if vectorized:
        return lambda t: np.asarray(log_f(t), dtype=float)
    return lambda t: np.array([float(log_f(float(s))) for s in t])


def find_support_bounds(log_f: Callable[[float], float], center: float, scale: float,
                        tail_drop: float = DEFAULT_TAIL_DROP):
    """Bracket where log_f has dropped ``tail_drop`` below log_f(center) on both sides."""
    if not scale > 0 or not tail_drop > 0:
        raise ValueError("scale and tail_drop must be positive")
    level = float(log_f(center)) - tail_drop
    if math.isnan(level):
        raise NonFiniteObjective([center], level)
    bounds = []
    for sign in (-1.0, 1.0):
        step = 3.0 * scale
        for _ in range(MAX_DOUBLINGS):
            b = center + sign * step
            v = float(log_f(b))
            if math.isnan(v):
                raise NonFiniteObjective([b], v)
            if v <= level:
                bounds.append(b)
                break
            step *= 2.0
        else:
            raise UnboundedProfile(
                f"log-profile does not drop by {tail_drop} within {MAX_DOUBLINGS} doublings "
                f"on the {'left' if sign < 0 else 'right'} of {center}")
    return bounds[0], bounds[1]


class _Panel:
    __slots__ = ("a", "b", "k", "g", "err")

    def __init__(self, a, b, k, g):
        self.a, self.b, self.k, self.g = a, b, k, g
        self.err = abs(k - g)

    def rescale(self, factor):
        self.k *= factor
        self.g *= factor
        self.err *= factor


def integrate_adaptive(log_f, lo: float, hi: float, rel_tol: float = DEFAULT_REL_TOL,
                       abs_tol: float = DEFAULT_ABS_TOL,
                       points: Optional[Sequence[float]] = None,
                       vectorized: bool = False,
                       max_panels: int = MAX_PANELS) -> QuadratureResult:
    """Integrate exp(log_f) over [lo, hi] by worst-panel-first bisection.

    Each panel uses the 15-point Kronrod rule with its embedded 7-point Gauss
    rule; the panel error estimate is their absolute difference.  ``points``
    are optional initial breakpoints.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    if not (rel_tol > 0 and abs_tol > 0):
        raise ValueError("tolerances must be positive")
    f = _as_vector_fn(log_f, vectorized)
    edges = sorted({lo, hi, *(p for p in (points or ()) if lo < p < hi)})
    n_evals = 0

    def raw_panel(a, b):
        nonlocal n_evals
        half = 0.5 * (b - a)
        t = 0.5 * (a + b) + half * NODES
        lv = f(t)
        n_evals += len(t)
        if np.isnan(lv).any() or (lv == np.inf).any():
            i = int(np.argmax(np.isnan(lv) | (lv == np.inf)))
            raise NonFiniteObjective([t[i]], float(lv[i]))
        return half, lv

    raw = [raw_panel(a, b) for a, b in zip(edges[:-1], edges[1:])]
    peak = max(float(lv.max()) for _, lv in raw)
    if peak == -math.inf:
        raise ToleranceNotMet(f"integrand vanishes on [{lo}, {hi}]")

    def make_panel(a, b, half, lv):
        w = np.exp(lv - peak)
        return _Panel(a, b, half * float(w @ KRONROD_WEIGHTS), half * float(w @ GAUSS_WEIGHTS))

    panels = [make_panel(a, b, *r) for (a, b), r in zip(zip(edges[:-1], edges[1:]), raw)]
    heap = [(-p.err, i, p) for i, p in enumerate(panels)]
    heapq.heapify(heap)
    counter = len(panels)

    while True:
        total = math.fsum(p.k for _, _, p in heap)
        err = math.fsum(p.err for _, _, p in heap)
        if err <= max(abs_tol, rel_tol * abs(total)):
            break
        if len(heap) >= max_panels:
            raise ToleranceNotMet(
                f"{max_panels} panels reached on [{lo}, {hi}]: error {err:.3e} vs value {total:.3e}")
        _, _, worst = heapq.heappop(heap)
        mid = 0.5 * (worst.a + worst.b)
        if not worst.a < mid < worst.b:
            raise ToleranceNotMet(f"panel [{worst.a}, {worst.b}] cannot be split further")
        halves = [(worst.a, mid, *raw_panel(worst.a, mid)), (mid, worst.b, *raw_panel(mid, worst.b))]
        new_peak = max(float(h[3].max()) for h in halves)
        if new_peak > peak:
            factor = math.exp(peak - new_peak)
            for _, _, p in heap:
                p.rescale(factor)
            peak = new_peak
            heap = [(-p.err, i, p) for _, i, p in heap]
            heapq.heapify(heap)
        for a, b, half, lv in halves:
            p = make_panel(a, b, half, lv)
            heapq.heappush(heap, (-p.err, counter, p))
            counter += 1

    ordered = sorted((p for _, _, p in heap), key=lambda p: p.a)
    total = math.fsum(p.k for p in ordered)
    if not total > 0:
        raise ToleranceNotMet(f"non-positive integral {total} on [{lo}, {hi}]")
    return QuadratureResult(peak + math.log(total), err, n_evals, peak, lo, hi, len(ordered))


def breakpoints(center: float, scale: float, lo: float, hi: float):
    """Geometric breakpoints center +/- scale * 2^k inside (lo, hi), plus center."""
    pts = [center]
    step = scale
    while center - step > lo or center + step < hi:
        pts.extend([center - step, center + step])
        step *= 2.0
    return sorted(p for p in pts if lo < p < hi)


def normalize_profile(log_f, center: float, scale: float, rel_tol: float = DEFAULT_REL_TOL,
                      abs_tol: float = DEFAULT_ABS_TOL,
                      tail_drop: float = DEFAULT_TAIL_DROP) -> QuadratureResult:
    """log of the integral of exp(log_f) over the real line."""
    lo, hi = find_support_bounds(log_f, center, scale, tail_drop)
    return integrate_adaptive(log_f, lo, hi, rel_tol, abs_tol,
                              points=breakpoints(center, scale, lo, hi))
