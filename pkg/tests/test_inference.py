import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from dncim.contours import (
    Contour,
    ContourKind,
    build_exp_closed_form_contour,
    build_large_n_contour,
    valid_contour_anchored,
)
from dncim.exceptions import DomainError, EmptyHypothesis
from dncim.inference import Box, Decision, level_set, min_count_above, test_hypothesis
from dncim.models import Exponential, GaussianKnownVar
from dncim.summaries import BlockSummary, combine, partition, summarize_block


def gaussian_agg(seed=0, n=40, tau2=1.0):
    m = GaussianKnownVar(tau2)
    y = m.sample([0.3], n, np.random.default_rng(seed))
    return m, combine([summarize_block(m, b) for b in partition(y, 4, np.random.default_rng(seed + 1))]), y


def test_z_interval():
    m, agg, y = gaussian_agg()
    c = build_large_n_contour(agg, model=m)
    r = level_set(c, 0.2)
    half = math.sqrt(stats.chi2.ppf(0.8, 1) / agg.total_info[0, 0])
    (lo, hi), = r.intervals[0]
    assert lo == pytest.approx(y.mean() - half, abs=1e-10)
    assert hi == pytest.approx(y.mean() + half, abs=1e-10)
    # the textbook z-interval
    assert half == pytest.approx(stats.norm.ppf(0.9) / math.sqrt(40), rel=1e-10)
    assert not r.is_empty and r.lengths()[0] == pytest.approx(2 * half)


def test_wald_ellipse_two_dimensional():
    J = np.array([[3.0, 0.8], [0.8, 1.5]])
    agg = combine([BlockSummary(10, [1.0, -0.5], J)])
    c = build_large_n_contour(agg, grid=np.zeros((1, 2)))
    r = level_set(c, 0.05)
    q = stats.chi2.ppf(0.95, 2)
    assert r.radius2 == pytest.approx(q, rel=1e-8)
    cov = np.linalg.inv(J)
    for j in range(2):
        (lo, hi), = r.intervals[j]
        assert hi - agg.theta_check[j] == pytest.approx(math.sqrt(q * cov[j, j]), rel=1e-8)
    rng = np.random.default_rng(0)
    pts = agg.theta_check + rng.normal(scale=1.5, size=(2000, 2))
    for t in pts:
        d = agg.theta_check - t
        assert r.contains(t) == (d @ J @ d <= q)


def test_empty_region():
    thr = np.array([1.0, 2.0])
    c = Contour(ContourKind.VALID_ANCHORED, np.array([0.0]), np.array([1.0]), center=np.array([0.0]),
                info=np.array([[1.0]]), anchor=np.array([0.0]), M=2, thresholds=thr)
    r = level_set(c, 0.999)
    assert not r.is_empty  # 2/2 > 0.999
    c2 = Contour(ContourKind.EXPONENTIAL_CLOSED_FORM, np.linspace(0.1, 1, 10), np.full(10, 0.3))
    assert level_set(c2, 0.5).is_empty
    assert not level_set(c2, 0.5).contains(0.5)
    with pytest.raises(DomainError):
        level_set(c, 1.0)


def test_min_count_above():
    assert min_count_above(0.1, 3000) == 301
    assert min_count_above(0.5, 2) == 2
    assert min_count_above(0.999, 2) == 2
    for M in (7, 100, 3000):
        for a in np.linspace(0.001, 0.999, 97):
            c = min_count_above(a, M)
            assert c / M > a and (c - 1) / M <= a


def test_anchored_region_matches_threshold_count():
    m, agg, _ = gaussian_agg(2)
    c = valid_contour_anchored(m, agg, M=1000, rng=np.random.default_rng(3))
    for a in (0.05, 0.1, 0.5, 0.9):
        r = level_set(c, a)
        (lo, hi), = r.intervals[0]
        # endpoints are closed at rounding level: the boundary threshold itself
        eps = 1e-9
        assert c.evaluate(lo + eps) > a and c.evaluate(hi - eps) > a
        assert c.evaluate(lo - eps) <= a and c.evaluate(hi + eps) <= a


def test_grid_level_set_bisection():
    m = Exponential()
    y = m.sample([0.5], 30, np.random.default_rng(1))
    agg = combine([summarize_block(m, b) for b in partition(y, 3, np.random.default_rng(2), sizes=(5, 10, 15))])
    c = build_exp_closed_form_contour(agg, model=m)
    r = level_set(c, 0.1)
    (lo, hi), = r.intervals[0]
    tol = 1e-7 * (c.grid[-1] - c.grid[0])
    assert c.evaluate(lo) > 0.1 and c.evaluate(lo - tol) <= 0.1
    assert c.evaluate(hi) > 0.1 and c.evaluate(hi + tol) <= 0.1


# -- hypothesis tests -------------------------------------------------------------

def test_hypothesis_examples():
    m, agg, _ = gaussian_agg(4)
    c = valid_contour_anchored(m, agg, M=500, rng=np.random.default_rng(5))
    res = test_hypothesis(c, [agg.theta_check[0]], 0.99)
    assert res.sup_possibility == 1.0 and res.decision == Decision.RETAIN
    res = test_hypothesis(c, c.grid, 0.5)
    assert res.sup_possibility == c.values.max() and res.decision == Decision.RETAIN
    far = agg.theta_check[0] + 10 / math.sqrt(agg.total_info[0, 0])
    assert test_hypothesis(c, [far], 0.05).decision == Decision.REJECT
    # a box containing the center has supremum 1
    assert test_hypothesis(c, Box(agg.theta_check - 1, agg.theta_check + 1), 0.5).sup_possibility == 1.0
    # a box to one side attains its supremum at the edge nearest the center
    res = test_hypothesis(c, Box([far - 1], [far]), 0.05)
    assert res.argmax[0] == pytest.approx(far - 1)


def test_box_supremum_two_dimensional():
    J = np.array([[2.0, 0.5], [0.5, 1.0]])
    agg = combine([BlockSummary(10, [0.0, 0.0], J)])
    c = build_large_n_contour(agg, grid=np.zeros((1, 2)))
    res = test_hypothesis(c, Box([1.0, -3.0], [2.0, 3.0]), 0.05)
    # minimize the quadratic over theta_0 = 1: theta_1 = -J01/J11
    t = np.array([1.0, -0.5])
    np.testing.assert_allclose(res.argmax, t, atol=1e-6)
    assert res.sup_possibility == pytest.approx(stats.chi2.sf(t @ J @ t, 2), rel=1e-8)


def test_empty_hypotheses():
    m, agg, _ = gaussian_agg()
    c = build_large_n_contour(agg, model=m)
    with pytest.raises(EmptyHypothesis):
        test_hypothesis(c, [], 0.1)
    with pytest.raises(EmptyHypothesis):
        Box([1.0], [0.0])
    e = build_large_n_contour(combine([BlockSummary(5, [0.5], [[20.0]])]), model=Exponential())
    with pytest.raises(EmptyHypothesis):
        test_hypothesis(e, Box([-2.0], [-1.0]), 0.1)


# -- nestedness and duality --------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 0.98), st.floats(0.001, 0.01))
def test_level_sets_nested(seed, a, gap):
    m, agg, _ = gaussian_agg(seed % 1000)
    c = valid_contour_anchored(m, agg, M=200, rng=np.random.default_rng(seed))
    small, big = level_set(c, min(a + gap, 0.999)), level_set(c, a)
    if small.is_empty:
        return
    (l1, h1), = small.intervals[0]
    (l0, h0), = big.intervals[0]
    assert l0 <= l1 and h1 <= h0


def test_region_test_duality():
    rng = np.random.default_rng(0)
    m, agg, _ = gaussian_agg(7)
    c = valid_contour_anchored(m, agg, M=300, rng=rng)
    sd = 1 / math.sqrt(agg.total_info[0, 0])
    for _ in range(1000):
        a = rng.uniform(0.01, 0.99)
        t = agg.theta_check[0] + rng.normal(scale=2 * sd)
        inside = level_set(c, a).contains(t)
        assert inside == (test_hypothesis(c, [t], a).decision == Decision.RETAIN)
