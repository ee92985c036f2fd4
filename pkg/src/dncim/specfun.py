"""Special functions: Lambert W, regularized incomplete gamma, chi-square, normal.

Everything here is pure and deterministic.  Scalar inputs give Python floats,
array inputs give arrays of the same shape.
"""

from __future__ import annotations

import math
from enum import IntEnum

import numpy as np
from numba import vectorize

from .exceptions import DomainError

__all__ = [
    "Branch",
    "lambert_w",
    "reg_gamma_upper",
    "reg_gamma_lower",
    "chisq_cdf",
    "chisq_sf",
    "chisq_pdf",
    "chisq_quantile",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_quantile",
]

INV_E = math.exp(-1.0)
_EPS = np.finfo(float).eps


class Branch(IntEnum):
    """Real branches of the Lambert W function."""

    PRINCIPAL = 0
    NEGATIVE_ONE = -1


def _as_output(values, scalar):
    if scalar:
        return float(np.asarray(values).reshape(()))
    return values


# ---------------------------------------------------------------------------
# Lambert W
# ---------------------------------------------------------------------------

def _branch_point_series(x, sign):
    # expansion of W about -1/e in p = +-sqrt(2(e x + 1))
    p = sign * np.sqrt(np.maximum(2.0 * (math.e * x + 1.0), 0.0))
    return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3


def _initial_guess(x, branch):
    near = x < -0.25
    w = np.empty_like(x)
    if branch == Branch.PRINCIPAL:
        w[near] = _branch_point_series(x[near], 1.0)
        far = ~near
        lg = np.log1p(x[far])
        w[far] = lg * (1.0 - np.log1p(lg) / (2.0 + lg))
    else:
        w[near] = _branch_point_series(x[near], -1.0)
        far = ~near
        l1 = np.log(-x[far])
        l2 = np.log(-l1)
        w[far] = l1 - l2 + l2 / l1
    return w


def _bisect_w(x, branch):
    f = lambda w: w * math.exp(w) - x  # noqa: E731
    if branch == Branch.PRINCIPAL:
        lo, hi = -1.0, 1.0
        while f(hi) < 0.0:
            hi *= 2.0
        increasing = True
    else:
        lo, hi = -2.0, -1.0
        while f(lo) < 0.0:  # w e^w tends to 0- as w -> -inf
            lo *= 2.0
        increasing = False
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        below = f(mid) < 0.0
        if below == increasing:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def lambert_w(x, branch: Branch | int = Branch.PRINCIPAL):
    """Real Lambert W function, ``w * exp(w) = x``.

    Parameters
    ----------
    x : float or array_like
        Argument.  ``x >= -1/e`` on the principal branch and
        ``-1/e <= x < 0`` on the ``-1`` branch.
    branch : Branch or int
        ``0`` (principal, ``w >= -1``) or ``-1`` (``w <= -1``).

    Returns
    -------
    float or ndarray
        Halley iterates from branch-specific starting values.  Points that
        fail to converge are finished by bisection.
    """
    branch = Branch(int(branch))
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(np.isnan(xa)):
        raise DomainError("lambert_w: NaN argument")
    if np.any(xa < -INV_E):
        raise DomainError(f"lambert_w: argument below -1/e on branch {int(branch)}")
    if branch == Branch.NEGATIVE_ONE and np.any(xa >= 0.0):
        raise DomainError("lambert_w: branch -1 is defined on [-1/e, 0)")

    w = _initial_guess(xa, branch)
    at_branch_point = xa == -INV_E
    w[at_branch_point] = -1.0
    active = ~at_branch_point
    for _ in range(60):
        if not active.any():
            break
        wa = w[active]
        ew = np.exp(wa)
        f = wa * ew - xa[active]
        wp1 = wa + 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            dw = f / (ew * wp1 - (wa + 2.0) * f / (2.0 * wp1))
        dw = np.where(np.isfinite(dw), dw, 0.0)
        wa = wa - dw
        # keep iterates on the requested side of the branch point
        wa = np.maximum(wa, -1.0) if branch == Branch.PRINCIPAL else np.minimum(wa, -1.0)
        w[active] = wa
        done = np.abs(dw) <= 4.0 * _EPS * (1.0 + np.abs(wa))
        idx = np.flatnonzero(active)
        active[idx[done]] = False

    resid = np.abs(w * np.exp(w) - xa)
    bad = ~(resid <= 1e-13 * np.maximum(np.abs(xa), np.finfo(float).tiny)) & ~at_branch_point
    for i in np.flatnonzero(bad | ~np.isfinite(w)):
        w[i] = _bisect_w(float(xa[i]), branch)
    return _as_output(w.reshape(np.shape(x)) if not scalar else w, scalar)


# ---------------------------------------------------------------------------
# Regularized incomplete gamma
# ---------------------------------------------------------------------------

_MAX_TERMS = 1_000_000
_FPMIN = 1e-300


def _gamma_pq(s: float, x: float) -> tuple[float, float]:
    """Return ``(P(s, x), Q(s, x))`` computed as exact complements."""
    if x == 0.0:
        return 0.0, 1.0
    if math.isinf(x):
        return 1.0, 0.0
    log_pref = -x + s * math.log(x) - math.lgamma(s)
    if x < s + 1.0:
        ap = s
        term = total = 1.0 / s
        for _ in range(_MAX_TERMS):
            ap += 1.0
            term *= x / ap
            total += term
            if abs(term) < abs(total) * 1e-17:
                break
        p = min(total * math.exp(log_pref), 1.0)
        return p, 1.0 - p
    # modified Lentz continued fraction for Q
    b = x + 1.0 - s
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    q = min(math.exp(log_pref) * h, 1.0)
    return 1.0 - q, q


def _check_gamma_args(s, x):
    s_arr = np.asarray(s, dtype=float)
    x_arr = np.asarray(x, dtype=float)
    if np.any(~(s_arr > 0.0)):
        raise DomainError("incomplete gamma: shape must be positive")
    if np.any(~(x_arr >= 0.0)):
        raise DomainError("incomplete gamma: argument must be non-negative")
    return s_arr, x_arr


_upper_vec = np.vectorize(lambda s, x: _gamma_pq(s, x)[1], otypes=[float])
_lower_vec = np.vectorize(lambda s, x: _gamma_pq(s, x)[0], otypes=[float])


def reg_gamma_upper(s, x):
    """Regularized upper incomplete gamma ``Gamma(s, x) / Gamma(s)``."""
    s_arr, x_arr = _check_gamma_args(s, x)
    if s_arr.ndim == 0 and x_arr.ndim == 0:
        return _gamma_pq(float(s_arr), float(x_arr))[1]
    return _upper_vec(s_arr, x_arr)


def reg_gamma_lower(s, x):
    """Regularized lower incomplete gamma ``gamma(s, x) / Gamma(s)``."""
    s_arr, x_arr = _check_gamma_args(s, x)
    if s_arr.ndim == 0 and x_arr.ndim == 0:
        return _gamma_pq(float(s_arr), float(x_arr))[0]
    return _lower_vec(s_arr, x_arr)


# ---------------------------------------------------------------------------
# Chi-square
# ---------------------------------------------------------------------------

def _check_df(df):
    if isinstance(df, (bool, np.bool_)) or int(df) != df or df < 1:
        raise DomainError(f"chi-square degrees of freedom must be a positive integer, got {df!r}")
    return int(df)


def _check_nonneg(x):
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa >= 0.0)):
        raise DomainError("chi-square argument must be non-negative")
    return x


def chisq_cdf(df: int, x):
    """ChiSq(df) distribution function."""
    df = _check_df(df)
    return reg_gamma_lower(0.5 * df, 0.5 * np.asarray(_check_nonneg(x), dtype=float))


def chisq_sf(df: int, x):
    """ChiSq(df) survival function, the computed complement of :func:`chisq_cdf`."""
    df = _check_df(df)
    return reg_gamma_upper(0.5 * df, 0.5 * np.asarray(_check_nonneg(x), dtype=float))


def chisq_pdf(df: int, x: float) -> float:
    df = _check_df(df)
    if x < 0.0:
        return 0.0
    if x == 0.0:
        return {1: math.inf, 2: 0.5}.get(df, 0.0)
    k = 0.5 * df
    return math.exp((k - 1.0) * math.log(x) - 0.5 * x - k * math.log(2.0) - math.lgamma(k))


def chisq_quantile(df: int, p: float) -> float:
    """Inverse of :func:`chisq_cdf` by safeguarded Newton iteration."""
    df = _check_df(df)
    if not 0.0 <= p < 1.0:
        raise DomainError(f"chisq_quantile: probability must lie in [0, 1), got {p!r}")
    if p == 0.0:
        return 0.0
    lo, hi = 0.0, df + 10.0 * math.sqrt(2.0 * df) + 10.0
    while chisq_cdf(df, hi) < p:
        lo, hi = hi, 2.0 * hi
    x = 0.5 * (lo + hi)
    for _ in range(400):
        f = chisq_cdf(df, x) - p
        if f == 0.0:
            return x
        if f < 0.0:
            lo = x
        else:
            hi = x
        dens = chisq_pdf(df, x)
        step = f / dens if dens > 0.0 and math.isfinite(dens) else math.inf
        nxt = x - step
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - x) <= 2.0 * _EPS * abs(x) or hi - lo <= 2.0 * _EPS * hi:
            return nxt
        x = nxt
    return x


# ---------------------------------------------------------------------------
# Standard normal
# ---------------------------------------------------------------------------

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Acklam's rational approximation, refined below by one Halley step.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)


@vectorize(["float64(float64)"], cache=True)
def _ncdf(z):
    return 0.5 * math.erfc(-z / 1.4142135623730951)


@vectorize(["float64(float64)"], cache=True)
def _npdf(z):
    return math.exp(-0.5 * z * z) / 2.5066282746310002


@vectorize(["float64(float64)"], cache=True)
def _nquantile(u):
    # lower half only; the caller reflects
    q = u if u <= 0.5 else 1.0 - u
    if q < 0.02425:
        r = math.sqrt(-2.0 * math.log(q))
        x = ((((((-7.784894002430293e-03 * r - 3.223964580411365e-01) * r
                 - 2.400758277161838e00) * r - 2.549732539343734e00) * r
               + 4.374664141464968e00) * r + 2.938163982698783e00)
             / ((((7.784695709041462e-03 * r + 3.224671290700398e-01) * r
                  + 2.445134137142996e00) * r + 3.754408661907416e00) * r + 1.0))
    else:
        s = q - 0.5
        r = s * s
        x = ((((((-3.969683028665376e01 * r + 2.209460984245205e02) * r
                 - 2.759285104469687e02) * r + 1.383577518672690e02) * r
               - 3.066479806614716e01) * r + 2.506628277459239e00) * s
             / (((((-5.447609879822406e01 * r + 1.615858368580409e02) * r
                   - 1.556989798598866e02) * r + 6.680131188771972e01) * r
                 - 1.328068155288572e01) * r + 1.0))
    for _ in range(2):
        e = 0.5 * math.erfc(-x / 1.4142135623730951) - q
        t = e * 2.5066282746310002 * math.exp(0.5 * x * x)
        x = x - t / (1.0 + 0.5 * x * t)
    return x if u <= 0.5 else -x


def std_normal_cdf(z):
    """Standard normal distribution function via ``erfc``."""
    out = _ncdf(np.asarray(z, dtype=float))
    return _as_output(out, np.ndim(z) == 0)


def std_normal_pdf(z):
    out = _npdf(np.asarray(z, dtype=float))
    return _as_output(out, np.ndim(z) == 0)


def std_normal_quantile(u):
    """Standard normal quantile ``z_u`` with ``Phi(z_u) = u``.

    Raises
    ------
    DomainError
        Unless ``0 < u < 1`` everywhere.
    """
    ua = np.asarray(u, dtype=float)
    if np.any(~((ua > 0.0) & (ua < 1.0))):
        raise DomainError("std_normal_quantile: probability must lie strictly inside (0, 1)")
    return _as_output(_nquantile(ua), np.ndim(u) == 0)
