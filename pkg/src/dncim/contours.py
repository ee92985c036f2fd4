"""Possibility contours.

The Monte Carlo contours store the sorted reference quadratic forms
``d_m = -2 log R(S_m, anchor)``.  Because the working relative likelihood
is ``exp(-d/2)``, the indicator ``R(S_m) <= R(s, theta)`` is the same as
``d_m >= d(theta)``, so a contour value is one binary search.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .exceptions import (
    SUMMARY_FAILURES,
    DomainError,
    SimulationBudgetExceeded,
    SingularInformation,
    UnsupportedModel,
)
from .models.base import Model, as_data
from .rng import as_generator
from .specfun import Branch, INV_E, chisq_sf, lambert_w, reg_gamma_lower, reg_gamma_upper
from .summaries import AggregatedSummary, combine_arrays, profile_quadratic, quadratic_form

DEFAULT_M = 3000
PLOT_M = 50_000
GRID_POINTS = 201
GRID_HALF_WIDTH = 6.0
REDRAW_FACTOR = 10


class ContourKind(str, Enum):
    LARGE_N = "large_n"
    VALID_ANCHORED = "valid_anchored"
    VALID_IMPORTANCE = "valid_importance"
    PROFILE_MARGINAL = "profile_marginal"
    ORACLE_FULL_DATA = "oracle_full_data"
    EXPONENTIAL_CLOSED_FORM = "exponential_closed_form"

    @property
    def uses_working_likelihood(self) -> bool:
        return self in (ContourKind.LARGE_N, ContourKind.VALID_ANCHORED, ContourKind.PROFILE_MARGINAL)


@dataclass(frozen=True, eq=False)
class Contour:
    """A contour evaluated on a grid, plus whatever is needed to evaluate it elsewhere.

    ``center``/``info`` define the quadratic form that ranks parameter values
    (for a marginal contour they are ``theta_check_q`` and ``J_qq``).
    ``thresholds`` is the sorted table of reference quadratic forms for
    the Monte Carlo kinds, with one row per anchor.
    """

    kind: ContourKind
    grid: np.ndarray
    values: np.ndarray
    center: np.ndarray | None = None
    info: np.ndarray | None = None
    coordinate: int | None = None
    anchor: np.ndarray | None = None
    M: int | None = None
    thresholds: np.ndarray | None = None
    df: int | None = None
    bounds: np.ndarray | None = None
    seed: int | None = None
    evaluator: Callable | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def is_scalar(self) -> bool:
        return self.grid.ndim == 1

    @property
    def dim(self) -> int:
        return 1 if self.is_scalar else self.grid.shape[1]

    def quadratic(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        if self.is_scalar:
            th = th[..., None]
        return quadratic_form(self.center, self.info, th)

    def _threshold_row(self, theta) -> np.ndarray:
        if self.thresholds.ndim == 1:
            return np.zeros(np.shape(self.quadratic(theta)), dtype=int)
        th = np.asarray(theta, dtype=float)
        if self.is_scalar:
            th = th[..., None]
        anchors = np.atleast_2d(self.anchor)
        diff = th[..., None, :] - anchors
        dist = np.einsum("...ki,ij,...kj->...k", diff, self.info, diff)
        return np.argmin(dist, axis=-1)

    def __call__(self, theta):
        return self.evaluate(theta)

    def evaluate(self, theta):
        """Contour value at arbitrary parameter values."""
        if self.thresholds is not None:
            d = self.quadratic(theta)
            if self.thresholds.ndim == 1:
                out = (self.M - np.searchsorted(self.thresholds, d, side="left")) / self.M
            else:
                rows = self._threshold_row(theta)
                d1 = np.atleast_1d(d)
                r1 = np.atleast_1d(rows)
                out = np.array([(self.M - np.searchsorted(self.thresholds[r], x, side="left")) / self.M
                                for r, x in zip(r1.ravel(), d1.ravel())]).reshape(d1.shape)
                out = out.reshape(np.shape(d))
        elif self.kind == ContourKind.LARGE_N:
            out = np.asarray(chisq_sf(self.df, self.quadratic(theta)))
        elif self.evaluator is not None:
            out = np.asarray(self.evaluator(theta))
        elif self.is_scalar:
            out = np.interp(np.asarray(theta, dtype=float), self.grid, self.values, left=0.0, right=0.0)
        else:
            raise UnsupportedModel("this contour can only be read at its grid points")
        out = np.clip(out, 0.0, 1.0)
        if self.bounds is not None:
            out = np.where(self.outside_bounds(theta), 0.0, out)
        return float(out) if np.ndim(out) == 0 else out

    def outside_bounds(self, theta) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        if self.is_scalar:
            th = th[..., None]
        b = np.atleast_2d(self.bounds)
        return np.any((th < b[:, 0]) | (th > b[:, 1]), axis=-1)


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

def _coordinate_range(center, jqq, lo, hi, half_width):
    half = half_width / math.sqrt(jqq)
    a, b = center - half, center + half
    span = b - a
    if lo is not None and a <= lo:
        a = lo + 1e-6 * span
    if hi is not None and b >= hi:
        b = hi - 1e-6 * span
    return a, b


def model_bounds(model: Model | None, p: int) -> np.ndarray:
    if model is None:
        return np.tile([-np.inf, np.inf], (p, 1))
    return np.array([[b[0], b[1]] for b in model.bounds], dtype=float)


def default_grid(agg: AggregatedSummary, coordinate: int | None = None, model: Model | None = None,
                 n_points: int = GRID_POINTS, half_width: float = GRID_HALF_WIDTH) -> np.ndarray:
    """Evaluation grid spanning ``theta_check_q +- 6 / sqrt(J_qq)``.

    A scalar grid for a single coordinate (or a one-dimensional model);
    a full product grid when ``p == 2``; for larger ``p`` the union of the
    axis lines through ``theta_check``.
    """
    bnd = model_bounds(model, agg.dim)

    def axis(q):
        lo, hi = bnd[q]
        a, b = _coordinate_range(agg.theta_check[q], agg.total_info[q, q],
                                 lo if np.isfinite(lo) else None, hi if np.isfinite(hi) else None, half_width)
        return np.linspace(a, b, n_points)

    if coordinate is not None or agg.dim == 1:
        return axis(0 if coordinate is None else coordinate)
    if agg.dim == 2:
        g0, g1 = np.meshgrid(axis(0), axis(1), indexing="ij")
        return np.column_stack([g0.ravel(), g1.ravel()])
    lines = []
    for q in range(agg.dim):
        pts = np.tile(agg.theta_check, (n_points, 1))
        pts[:, q] = axis(q)
        lines.append(pts)
    return np.vstack(lines)


def _as_grid(agg, grid, coordinate, model):
    if grid is None:
        return default_grid(agg, coordinate, model)
    g = np.asarray(grid, dtype=float)
    if coordinate is not None or agg.dim == 1:
        g = g.reshape(-1)
        if np.any(np.diff(g) <= 0):
            raise DomainError("scalar grid must be strictly increasing")
        return g
    g = np.atleast_2d(g)
    if g.shape[1] != agg.dim:
        raise DomainError(f"grid has {g.shape[1]} columns, expected {agg.dim}")
    return g


# ---------------------------------------------------------------------------
# large-n
# ---------------------------------------------------------------------------

def large_n_contour(agg: AggregatedSummary, theta):
    """``1 - F_p(q)`` with ``q`` the information quadratic form at ``theta``."""
    th = np.asarray(theta, dtype=float)
    if agg.dim == 1 and (th.ndim == 0 or th.shape[-1] != 1):
        th = th[..., None]  # scalar parameter: treat a flat array as a batch of points
    out = chisq_sf(agg.dim, quadratic_form(agg.theta_check, agg.total_info, th))
    return float(out) if np.ndim(out) == 0 else np.asarray(out)


def build_large_n_contour(agg: AggregatedSummary, grid=None, coordinate: int | None = None,
                          model: Model | None = None) -> Contour:
    """Large-n contour as an object; with ``coordinate`` it is the ChiSq(1) calibration of the profile quadratic."""
    g = _as_grid(agg, grid, coordinate, model)
    if coordinate is None:
        center, info, df = agg.theta_check, agg.total_info, agg.dim
    else:
        center = agg.theta_check[[coordinate]]
        info = agg.total_info[[coordinate]][:, [coordinate]]
        df = 1
    c = Contour(ContourKind.LARGE_N, g, np.empty(0), center=center, info=info, coordinate=coordinate,
                df=df, bounds=_bounds_for(model, agg.dim, coordinate))
    return _with_values(c)


def _bounds_for(model, p, coordinate):
    bnd = model_bounds(model, p)
    return bnd[[coordinate]] if coordinate is not None else bnd


def _with_values(c: Contour) -> Contour:
    object.__setattr__(c, "values", np.asarray(c.evaluate(c.grid), dtype=float).reshape(-1))
    return c


# ---------------------------------------------------------------------------
# reference draws at an anchor
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReferenceSample:
    """``M`` combined summaries simulated at ``anchor``."""

    anchor: np.ndarray
    sizes: tuple
    theta_checks: np.ndarray
    infos: np.ndarray
    n_redraws: int = 0

    @property
    def M(self) -> int:
        return self.theta_checks.shape[0]

    def joint_thresholds(self) -> np.ndarray:
        d = self.theta_checks - self.anchor
        return np.sort(np.einsum("mi,mij,mj->m", d, self.infos, d))

    def profile_thresholds(self, q: int) -> np.ndarray:
        d = self.theta_checks[:, q] - self.anchor[q]
        return np.sort(self.infos[:, q, q] * d * d)


def _draw_chunk(model, anchor, sizes, gens, cap):
    thetas, infos, redraws = [], [], 0

    def failed():
        nonlocal redraws
        redraws += 1
        if redraws > cap:
            raise SimulationBudgetExceeded(
                f"more than {cap} failed reference summaries at anchor {np.asarray(anchor).tolist()}"
            )

    for gen in gens:
        while True:
            hats, J = [], []
            # blocks are independent, so redrawing a failed block alone keeps the
            # law of the summary conditional on every block succeeding
            for nb in sizes:
                while True:
                    try:
                        th_b, J_b = model.summarize(model.sample(anchor, nb, gen))
                        break
                    except SUMMARY_FAILURES:
                        failed()
                hats.append(th_b)
                J.append(J_b)
            try:
                th, tot = combine_arrays(np.array(hats), np.array(J))
                break
            except SingularInformation:
                failed()
        thetas.append(th)
        infos.append(tot)
    return np.array(thetas), np.array(infos), redraws


def draw_reference(model: Model, sizes: Sequence[int], anchor, M: int = DEFAULT_M, rng=None,
                   workers: int = 1) -> ReferenceSample:
    """Simulate ``M`` combined summaries under ``anchor``.

    Closed-form families draw block summaries directly from their exact
    sampling law.  Other families simulate raw blocks and fit them; failed
    blocks are re-drawn one at a time, with at most ``10 M`` failures in total.  Each of the
    ``M`` draws has its own child stream, so the result does not depend on
    ``workers``.
    """
    anchor = model.check_theta(anchor)
    sizes = tuple(int(s) for s in sizes)
    rng = as_generator(rng)
    if M < 1:
        raise DomainError("M must be positive")
    try:
        hats, J = model.sample_summaries_batch(anchor, sizes, M, rng)
    except UnsupportedModel:
        pass
    else:
        th, tot = combine_arrays(hats, J)
        return ReferenceSample(anchor, sizes, th, tot, 0)

    cap = REDRAW_FACTOR * M
    gens = rng.spawn(M)
    if workers <= 1:
        th, tot, redraws = _draw_chunk(model, anchor, sizes, gens, cap)
    else:
        chunks = np.array_split(np.arange(M), workers)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(_draw_chunk, model, anchor, sizes, [gens[i] for i in idx], cap)
                    for idx in chunks if idx.size]
            parts = [f.result() for f in futs]
        th = np.concatenate([p[0] for p in parts])
        tot = np.concatenate([p[1] for p in parts])
        redraws = sum(p[2] for p in parts)
        if redraws > cap:
            raise SimulationBudgetExceeded(f"more than {cap} failed reference summaries")
    return ReferenceSample(anchor, sizes, th, tot, redraws)


# ---------------------------------------------------------------------------
# valid contours
# ---------------------------------------------------------------------------

def valid_contour_anchored(model: Model, agg: AggregatedSummary, grid=None, M: int = DEFAULT_M,
                           anchor=None, rng=None, anchors=None, reference=None, workers: int = 1,
                           seed: int | None = None) -> Contour:
    """Monte Carlo valid contour with reference summaries drawn at an anchor.

    The value at ``theta`` is the fraction of reference draws with
    ``R(S_m, anchor) <= R(s, theta)``.  ``anchors`` (a list) switches to
    several anchors, each parameter value using the nearest one in the
    metric of the observed total information.
    """
    g = _as_grid(agg, grid, None, model)
    if anchors is not None:
        anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
        rng = as_generator(rng)
        refs = [draw_reference(model, agg.sizes, a, M, rng, workers) for a in anchors]
        thr = np.vstack([r.joint_thresholds() for r in refs])
        anc = anchors
    else:
        if reference is None:
            anchor = agg.theta_check if anchor is None else anchor
            reference = draw_reference(model, agg.sizes, anchor, M, rng, workers)
        thr = reference.joint_thresholds()
        anc = reference.anchor
        M = reference.M
    c = Contour(ContourKind.VALID_ANCHORED, g, np.empty(0), center=agg.theta_check, info=agg.total_info,
                anchor=anc, M=M, thresholds=thr, bounds=model_bounds(model, agg.dim), seed=seed)
    return _with_values(c)


def profile_contour_anchored(model: Model, agg: AggregatedSummary, q: int, grid_q=None, M: int = DEFAULT_M,
                             anchor=None, rng=None, reference=None, workers: int = 1,
                             seed: int | None = None) -> Contour:
    """Marginal valid contour for coordinate ``q`` (zero-based) from anchored reference draws."""
    if not 0 <= q < agg.dim:
        raise DomainError(f"coordinate index {q} out of range for dimension {agg.dim}")
    g = _as_grid(agg, grid_q, q, model)
    if reference is None:
        anchor = agg.theta_check if anchor is None else anchor
        reference = draw_reference(model, agg.sizes, anchor, M, rng, workers)
    c = Contour(ContourKind.PROFILE_MARGINAL, g, np.empty(0), center=agg.theta_check[[q]],
                info=agg.total_info[[q]][:, [q]], coordinate=q, anchor=reference.anchor, M=reference.M,
                thresholds=reference.profile_thresholds(q), bounds=_bounds_for(model, agg.dim, q), seed=seed)
    return _with_values(c)


def valid_contour_importance(model: Model, agg: AggregatedSummary, grid=None, M: int = DEFAULT_M,
                             anchor=None, rng=None, summary_log_density=None) -> Contour:
    """Importance-weighted Monte Carlo contour.

    Reference summaries are drawn once at the anchor; at each target
    ``theta`` the working likelihood is evaluated at ``theta`` on both
    sides and each draw is weighted by ``f_theta(S_m) / f_anchor(S_m)``.
    """
    if summary_log_density is None:
        if not model.has_summary_density:
            raise UnsupportedModel(f"{model.name}: no summary density for importance weights")
        summary_log_density = model.summary_log_density
    g = _as_grid(agg, grid, None, model)
    anchor = model.check_theta(agg.theta_check if anchor is None else anchor)
    rng = as_generator(rng)
    sizes = agg.sizes
    hats, J = model.sample_summaries_batch(anchor, sizes, M, rng)
    th_m, tot_m = combine_arrays(hats, J)
    log_f_anchor = summary_log_density(anchor, hats, sizes)

    def evaluate(theta):
        pts = np.asarray(theta, dtype=float)
        flat = pts.reshape(-1, agg.dim) if agg.dim > 1 or pts.ndim > 0 else pts.reshape(1, 1)
        out = np.empty(flat.shape[0])
        for i, t in enumerate(flat):
            if not model.in_bounds(t):
                out[i] = 0.0
                continue
            d_obs = quadratic_form(agg.theta_check, agg.total_info, t)
            diff = th_m - t
            d_sim = np.einsum("mi,mij,mj->m", diff, tot_m, diff)
            w = np.exp(summary_log_density(t, hats, sizes) - log_f_anchor)
            out[i] = np.mean(w * (d_sim >= d_obs))
        return out.reshape(np.shape(theta)[:-1] if agg.dim > 1 else np.shape(theta))

    c = Contour(ContourKind.VALID_IMPORTANCE, g, np.empty(0), center=agg.theta_check, info=agg.total_info,
                anchor=anchor, M=M, bounds=model_bounds(model, agg.dim), evaluator=evaluate)
    return _with_values(c)


# ---------------------------------------------------------------------------
# Exponential closed forms
# ---------------------------------------------------------------------------

def _gamma_ratio_contour(n: float, x):
    """``P(T <= t)`` for ``T = X^n e^{-X}``, ``X ~ Gamma(n)``, at ``t = x^n e^{-x}``.

    With ``a = -(x/n) e^{-x/n} = -t^{1/n} / n``, the value is
    ``P(n, -n W_0(a)) + Q(n, -n W_{-1}(a))``, the same quantity as
    ``1 + Q(n, -n W_{-1}) - Q(n, -n W_0)`` written without cancellation.
    """
    x = np.asarray(x, dtype=float)
    r = x / n
    a = -r * np.exp(-r)
    out = np.zeros_like(a)
    snap_mask = (a < -INV_E) & (a >= -INV_E - 1e-12)
    a = np.where(snap_mask, -INV_E, a)
    if np.any(a < -INV_E):
        raise DomainError("Lambert W argument below -1/e beyond the snapping tolerance")
    live = a < 0.0
    if np.any(live):
        al = a[live]
        u_lo = -n * lambert_w(al, Branch.PRINCIPAL)
        u_hi = -n * lambert_w(al, Branch.NEGATIVE_ONE)
        out[live] = reg_gamma_lower(n, u_lo) + reg_gamma_upper(n, u_hi)
    return np.clip(out, 0.0, 1.0)


def exp_block_contour(n_b: int, theta_hat: float, theta):
    """Exact single-block Exponential contour at rate ``theta``."""
    if not theta_hat > 0 or int(n_b) < 1:
        raise DomainError("need n_b >= 1 and theta_hat > 0")
    th = np.asarray(theta, dtype=float)
    if np.any(~(th > 0)):
        raise DomainError("rate must be positive")
    out = _gamma_ratio_contour(float(n_b), th * n_b / theta_hat)
    return float(out) if np.ndim(out) == 0 else out


def exp_full_contour(blocks: Sequence[tuple[int, float]], theta):
    """Exact full-data Exponential contour rebuilt from ``(n_b, theta_hat_b)`` pairs."""
    ns = np.array([b[0] for b in blocks], dtype=float)
    hats = np.array([b[1] for b in blocks], dtype=float)
    if ns.size == 0 or np.any(ns < 1) or np.any(~(hats > 0)):
        raise DomainError("need at least one block with n_b >= 1 and theta_hat > 0")
    th = np.asarray(theta, dtype=float)
    if np.any(~(th > 0)):
        raise DomainError("rate must be positive")
    out = _gamma_ratio_contour(float(ns.sum()), th * float(np.sum(ns / hats)))
    return float(out) if np.ndim(out) == 0 else out


def exp_statistic_density(n: int, t):
    """Density of ``T = X^n e^{-X}``, ``X ~ Gamma(n)``: ``[(1 + W_0(a))^{-1} - (1 + W_{-1}(a))^{-1}] / n!``."""
    t = np.asarray(t, dtype=float)
    tmax = n ** n * math.exp(-n)
    if np.any((t < 0) | (t > tmax * (1 + 1e-14))):
        raise DomainError("t outside [0, n^n e^{-n}]")
    a = -np.minimum(t, tmax) ** (1.0 / n) / n
    a = np.maximum(a, -INV_E)
    out = np.zeros_like(a)
    live = (a < 0) & (a > -INV_E)
    w0 = lambert_w(a[live], 0)
    wm = lambert_w(a[live], -1)
    out[live] = (1.0 / (1.0 + w0) - 1.0 / (1.0 + wm)) / math.factorial(n)
    out[a == 0] = 1.0 / math.factorial(n)  # W_{-1} -> -inf at the origin
    return float(out) if out.ndim == 0 else out


def exp_statistic_density_mass(n: int) -> float:
    """Numerical integral of :func:`exp_statistic_density` over its support.

    The density has an inverse square-root singularity at the upper end;
    substituting ``t = t_max (1 - v^2)`` removes it.
    """
    tmax = n ** n * math.exp(-n)

    def integrand(v):
        return 2.0 * tmax * v * exp_statistic_density(n, tmax * (1.0 - v * v)) if v > 0 else 0.0

    return integrate.quad(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13, limit=500)[0]


def build_exp_closed_form_contour(agg: AggregatedSummary, grid=None, model: Model | None = None) -> Contour:
    """Exact full-data Exponential contour over a grid."""
    g = _as_grid(agg, grid, None, model)
    blocks = [(b.n_b, float(b.theta_hat[0])) for b in agg.blocks]
    c = Contour(ContourKind.EXPONENTIAL_CLOSED_FORM, g, np.empty(0), center=agg.theta_check,
                info=agg.total_info, bounds=np.array([[0.0, np.inf]]),
                evaluator=lambda th: _positive_eval(exp_full_contour, blocks, th))
    return _with_values(c)


def _positive_eval(fn, blocks, th):
    th = np.asarray(th, dtype=float)
    out = np.zeros(th.shape)
    pos = th > 0
    if np.any(pos):
        out[pos] = fn(blocks, th[pos])
    return out


# ---------------------------------------------------------------------------
# full-data oracle
# ---------------------------------------------------------------------------

def oracle_contour_mc(model: Model, data, theta, M: int, rng=None, chunk: int = 2_000_000) -> float:
    """Fraction of fresh size-``n`` datasets from ``P_theta`` whose exact relative likelihood at ``theta`` is no larger than the observed one."""
    y = as_data(data)
    theta = model.check_theta(theta)
    rng = as_generator(rng)
    obs = model.full_data_relative_loglik(theta, y)
    n = y.size
    per = max(1, chunk // n)
    hits, done = 0, 0
    while done < M:
        m = min(per, M - done)
        Z = model.sample(theta, n * m, rng).reshape(m, n)
        sims = np.array([model.full_data_relative_loglik(theta, z) for z in Z])
        hits += int(np.sum(sims <= obs))
        done += m
    return hits / M
