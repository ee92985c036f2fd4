"""Confidence regions and hypothesis tests read off a contour.

For the working-likelihood contours the level set ``{pi > alpha}`` is an
ellipsoid ``{(theta_check - theta)' J (theta_check - theta) <= q*}``:
``q*`` is a chi-square quantile for the large-n contour and an order
statistic of the cached reference table for the Monte Carlo ones.  Other
contours are cut on their grid and refined by bisection.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import minimize

from .contours import Contour, ContourKind
from .exceptions import DomainError, EmptyHypothesis, UnsupportedModel
from .specfun import chisq_quantile


@dataclass(frozen=True)
class ConfidenceRegion:
    """``{theta : pi(theta) > alpha}`` reported as per-coordinate intervals.

    For an ellipsoidal region ``center``, ``info`` and ``radius2`` describe
    it exactly and ``intervals`` are its coordinate projections.
    """

    alpha: float
    intervals: tuple
    is_empty: bool
    coordinates: tuple = ()
    center: np.ndarray | None = None
    info: np.ndarray | None = None
    radius2: float | None = None
    contour: Contour | None = field(default=None, repr=False)

    def lengths(self) -> np.ndarray:
        return np.array([sum(hi - lo for lo, hi in iv) for iv in self.intervals])

    def contains(self, theta) -> bool:
        if self.is_empty:
            return False
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        c = self.contour
        if c is not None and c.bounds is not None:
            b = np.atleast_2d(c.bounds)
            if np.any(th < b[:, 0]) or np.any(th > b[:, 1]):
                return False
        if self.radius2 is not None and c is not None and c.thresholds is not None and c.thresholds.ndim == 1:
            d = self.center - th
            return bool(d @ self.info @ d <= self.radius2)
        if c is not None:
            try:
                return bool(c.evaluate(th if not c.is_scalar else th[0]) > self.alpha)
            except UnsupportedModel:  # grid-only multivariate contour
                pass
        return all(any(lo <= t <= hi for lo, hi in iv) for t, iv in zip(th, self.intervals))

    def rows(self) -> list[dict]:
        out = []
        for coord, iv in zip(self.coordinates, self.intervals):
            if not iv:
                out.append({"alpha": self.alpha, "coordinate": coord, "lower": None, "upper": None})
            for lo, hi in iv:
                out.append({"alpha": self.alpha, "coordinate": coord, "lower": lo, "upper": hi})
        return out


def min_count_above(alpha: float, M: int) -> int:
    """Smallest integer ``c`` with ``c / M > alpha`` in floating point."""
    c = int(math.floor(alpha * M)) + 1
    while c > 0 and (c - 1) / M > alpha:
        c -= 1
    while c <= M and not c / M > alpha:
        c += 1
    return c


@lru_cache(maxsize=1024)
def _chisq_radius2(df: int, alpha: float) -> float:
    return float(chisq_quantile(df, 1.0 - alpha))


def _radius2(contour: Contour, alpha: float) -> float | None:
    """Squared radius ``q*`` of the level set, or ``None`` when it is empty."""
    if contour.kind == ContourKind.LARGE_N:
        return _chisq_radius2(int(contour.df), float(alpha))
    c = min_count_above(alpha, contour.M)
    if c > contour.M:
        return None
    return float(contour.thresholds[contour.M - c])


def _coordinate_labels(contour):
    if contour.coordinate is not None:
        return (contour.coordinate,)
    return tuple(range(contour.dim))


def _clip(lo, hi, bounds_row):
    if bounds_row is not None:
        lo = max(lo, bounds_row[0])
        hi = min(hi, bounds_row[1])
    return lo, hi


def level_set(contour: Contour, alpha: float) -> ConfidenceRegion:
    """The ``100(1 - alpha)%`` region ``{theta : pi(theta) > alpha}``.

    An empty region (``alpha`` at or above the contour maximum) is returned
    with ``is_empty=True`` rather than raised.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    labels = _coordinate_labels(contour)
    bounds = None if contour.bounds is None else np.atleast_2d(contour.bounds)
    exact = contour.kind == ContourKind.LARGE_N or (
        contour.thresholds is not None and contour.thresholds.ndim == 1)
    if exact:
        r2 = _radius2(contour, alpha)
        if r2 is None:
            return ConfidenceRegion(alpha, tuple(() for _ in labels), True, labels, contour=contour)
        cov = np.linalg.inv(contour.info) if contour.info.shape[0] > 1 else 1.0 / contour.info
        intervals = []
        for j in range(contour.info.shape[0]):
            half = math.sqrt(r2 * cov[j, j])
            lo, hi = _clip(contour.center[j] - half, contour.center[j] + half,
                           None if bounds is None else bounds[j])
            intervals.append(((lo, hi),) if lo <= hi else ())
        empty = any(len(iv) == 0 for iv in intervals)
        return ConfidenceRegion(alpha, tuple(intervals), empty, labels, contour.center, contour.info, r2, contour)
    return _grid_level_set(contour, alpha, labels)


def _grid_level_set(contour: Contour, alpha: float, labels) -> ConfidenceRegion:
    vals = np.asarray(contour.values)
    inside = vals > alpha
    if not inside.any():
        return ConfidenceRegion(alpha, tuple(() for _ in labels), True, labels, contour=contour)
    if not contour.is_scalar:
        pts = contour.grid[inside]
        intervals = tuple(((float(pts[:, j].min()), float(pts[:, j].max())),) for j in range(contour.dim))
        return ConfidenceRegion(alpha, intervals, False, labels, contour=contour)
    g = contour.grid
    tol = 1e-8 * (g[-1] - g[0])

    def refine(a, b, a_inside):
        # a and b bracket the boundary; a is on the inside iff a_inside
        while abs(b - a) > tol:
            mid = 0.5 * (a + b)
            if (contour.evaluate(mid) > alpha) == a_inside:
                a = mid
            else:
                b = mid
        return a if a_inside else b

    runs = []
    idx = np.flatnonzero(inside)
    start = idx[0]
    for prev, cur in zip(idx[:-1], idx[1:]):
        if cur != prev + 1:
            runs.append((start, prev))
            start = cur
    runs.append((start, idx[-1]))
    intervals = []
    for i0, i1 in runs:
        lo = refine(g[i0], g[i0 - 1], True) if i0 > 0 else g[0]
        hi = refine(g[i1], g[i1 + 1], True) if i1 < g.size - 1 else g[-1]
        intervals.append((float(lo), float(hi)))
    return ConfidenceRegion(alpha, (tuple(intervals),), False, labels, contour=contour)


class Decision(str, Enum):
    REJECT = "reject"
    RETAIN = "retain"


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``lower <= theta <= upper``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise EmptyHypothesis("box bounds have different shapes")
        if np.any(lo > hi):
            raise EmptyHypothesis("box has a lower bound above its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


@dataclass(frozen=True)
class HypothesisTestResult:
    decision: Decision
    sup_possibility: float
    argmax: np.ndarray


def _box_sup(contour: Contour, box: Box):
    lo, hi = box.lower, box.upper
    if contour.bounds is not None:
        b = np.atleast_2d(contour.bounds)
        lo, hi = np.maximum(lo, b[:, 0]), np.minimum(hi, b[:, 1])
        if np.any(lo > hi):
            raise EmptyHypothesis("box does not meet the parameter space")
    working = contour.kind.uses_working_likelihood and (
        contour.thresholds is None or contour.thresholds.ndim == 1)
    if working:
        # contour is nonincreasing in the quadratic form: minimize that over the box
        c, J = contour.center, contour.info
        x0 = np.clip(c, lo, hi)
        if c.size > 1 and not np.allclose(x0, c):
            res = minimize(lambda t: ((c - t) @ J @ (c - t), -2.0 * J @ (c - t)), x0, jac=True,
                           method="L-BFGS-B", bounds=list(zip(lo, hi)),
                           options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 1000})
            x0 = np.clip(res.x, lo, hi)
        val = contour.evaluate(x0[0] if contour.is_scalar else x0)
        return float(val), x0
    grid = contour.grid if not contour.is_scalar else contour.grid[:, None]
    mask = np.all((grid >= lo) & (grid <= hi), axis=1)
    if not mask.any():
        raise EmptyHypothesis("box contains no grid points")
    vals = np.asarray(contour.values)[mask]
    k = int(np.argmax(vals))
    return float(vals[k]), grid[mask][k]


def test_hypothesis(contour: Contour, hypothesis, alpha: float) -> HypothesisTestResult:
    """Reject ``H0: theta in A`` iff ``sup_A pi <= alpha``.

    ``hypothesis`` is a :class:`Box` or a collection of points.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    if isinstance(hypothesis, Box):
        sup, arg = _box_sup(contour, hypothesis)
    else:
        pts = np.asarray(hypothesis, dtype=float)
        if pts.size == 0:
            raise EmptyHypothesis("hypothesis contains no points")
        pts = pts.reshape(-1) if contour.is_scalar else pts.reshape(-1, contour.dim)
        vals = np.atleast_1d(contour.evaluate(pts))
        k = int(np.argmax(vals))
        sup, arg = float(vals[k]), np.atleast_1d(pts[k])
    return HypothesisTestResult(Decision.REJECT if sup <= alpha else Decision.RETAIN, sup, arg)


test_hypothesis.__test__ = False  # keep pytest from collecting it
