import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from dncim.exceptions import DomainError
from dncim.specfun import (
    INV_E,
    Branch,
    chisq_cdf,
    chisq_pdf,
    chisq_quantile,
    chisq_sf,
    lambert_w,
    reg_gamma_lower,
    reg_gamma_upper,
    std_normal_cdf,
    std_normal_pdf,
    std_normal_quantile,
)


def bisect_w(x, lo, hi):
    # w e^w is monotone on each branch interval
    f = lambda w: w * math.exp(w) - x
    flo = f(lo)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


# -- Lambert W -----------------------------------------------------------------

def test_lambert_w_fixed_points():
    assert lambert_w(0.0, Branch.PRINCIPAL) == 0.0
    assert lambert_w(math.e, Branch.PRINCIPAL) == pytest.approx(1.0, abs=1e-15)
    assert lambert_w(-INV_E, Branch.NEGATIVE_ONE) == pytest.approx(-1.0, abs=1e-7)
    assert lambert_w(-INV_E, Branch.PRINCIPAL) == pytest.approx(-1.0, abs=1e-7)


def test_lambert_w_negative_one_against_bisection():
    ref = bisect_w(-0.1, -50.0, -1.0)
    w = lambert_w(-0.1, Branch.NEGATIVE_ONE)
    assert w < -1
    assert abs(w - ref) < 1e-13
    # frozen from the bisection oracle
    assert w == pytest.approx(-3.577152063957297, abs=1e-13)


@pytest.mark.parametrize("x", [-0.367, -0.3, -0.2, -0.05, -1e-3, -1e-8, -1e-30])
def test_lambert_w_both_branches_match_scipy(x):
    assert lambert_w(x, Branch.PRINCIPAL) == pytest.approx(special.lambertw(x, 0).real, rel=1e-13, abs=1e-300)
    assert lambert_w(x, Branch.NEGATIVE_ONE) == pytest.approx(special.lambertw(x, -1).real, rel=1e-13)


def test_lambert_w_vectorized_shape():
    x = np.linspace(-INV_E, 5.0, 37).reshape(37)
    w = lambert_w(x, Branch.PRINCIPAL)
    assert w.shape == x.shape
    assert np.all(w >= -1.0)


@pytest.mark.parametrize("x,branch", [(-0.5, Branch.PRINCIPAL), (0.1, Branch.NEGATIVE_ONE),
                                      (0.0, Branch.NEGATIVE_ONE), (-1.0, Branch.NEGATIVE_ONE)])
def test_lambert_w_domain_errors(x, branch):
    with pytest.raises(DomainError):
        lambert_w(x, branch)


def test_lambert_w_round_trip_random():
    rng = np.random.default_rng(11)
    x0 = -INV_E + (INV_E + 50.0) * rng.random(1000)
    x1 = -INV_E * rng.random(1000)
    x1 = x1[x1 < 0]
    for x, b in ((x0, Branch.PRINCIPAL), (x1, Branch.NEGATIVE_ONE)):
        w = lambert_w(x, b)
        assert np.max(np.abs(w * np.exp(w) - x) / np.abs(x)) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-INV_E, max_value=1e6, allow_nan=False))
def test_lambert_w_principal_property(x):
    w = lambert_w(x, Branch.PRINCIPAL)
    assert w >= -1.0
    assert abs(w * math.exp(w) - x) <= 1e-12 * max(abs(x), 1e-300) + 1e-300


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-INV_E, max_value=-1e-300, allow_nan=False))
def test_lambert_w_negative_one_property(x):
    w = lambert_w(x, Branch.NEGATIVE_ONE)
    assert w <= -1.0
    assert abs(w * math.exp(w) - x) <= 1e-12 * abs(x)


# -- incomplete gamma ---------------------------------------------------------

def test_reg_gamma_upper_examples():
    for x in (0.0, 0.3, 2.0, 40.0):
        assert reg_gamma_upper(1.0, x) == pytest.approx(math.exp(-x), rel=1e-14, abs=1e-300)
    assert reg_gamma_upper(2.7, 0.0) == 1.0
    quad, _ = integrate.quad(lambda w: w * w * math.exp(-w), 2.5, np.inf, epsabs=1e-13)
    assert reg_gamma_upper(3.0, 2.5) == pytest.approx(quad / 2.0, abs=1e-10)
    assert reg_gamma_upper(3.0, 2.5) == pytest.approx(0.5438131158833296, abs=1e-14)


@pytest.mark.parametrize("s", [0.5, 1.0, 3.0, 15.0, 150.0, 3000.0])
def test_reg_gamma_matches_scipy(s):
    x = np.concatenate([np.linspace(0, 3 * s + 30, 200), [1e-8, s, s + 1]])
    np.testing.assert_allclose(reg_gamma_upper(s, x), special.gammaincc(s, x), rtol=1e-11, atol=1e-14)
    np.testing.assert_allclose(reg_gamma_lower(s, x), special.gammainc(s, x), rtol=1e-11, atol=1e-14)


@settings(max_examples=300, deadline=None)
@given(st.floats(min_value=1e-3, max_value=1e4), st.floats(min_value=0.0, max_value=1e5))
def test_reg_gamma_complements_exactly(s, x):
    assert reg_gamma_upper(s, x) + reg_gamma_lower(s, x) == 1.0 or abs(
        reg_gamma_upper(s, x) + reg_gamma_lower(s, x) - 1.0) <= 1e-15


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=0.05, max_value=500.0))
def test_reg_gamma_upper_monotone(s):
    x = np.linspace(0.0, 4 * s + 20, 301)
    q = reg_gamma_upper(s, x)
    assert np.all(np.diff(q) <= 0)
    assert q[0] == 1.0


@pytest.mark.parametrize("s,x", [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.1)])
def test_reg_gamma_domain(s, x):
    with pytest.raises(DomainError):
        reg_gamma_upper(s, x)
    with pytest.raises(DomainError):
        reg_gamma_lower(s, x)


# -- chi-square ----------------------------------------------------------------

def test_chisq_closed_forms():
    x = np.linspace(0, 30, 61)
    np.testing.assert_allclose(chisq_cdf(2, x), 1 - np.exp(-x / 2), atol=1e-15)
    assert chisq_cdf(1, 0.0) == 0.0
    for z in (0.5, 1.0, 2.0):
        phi = 0.5 * math.erfc(-z / math.sqrt(2))
        assert chisq_cdf(1, z * z) == pytest.approx(2 * phi - 1, abs=1e-14)


@pytest.mark.parametrize("df", [1, 2, 3, 4, 7, 30])
def test_chisq_matches_scipy(df):
    x = np.linspace(0, 5 * df + 40, 300)
    np.testing.assert_allclose(chisq_cdf(df, x), stats.chi2.cdf(x, df), atol=1e-14)
    np.testing.assert_allclose(chisq_sf(df, x), stats.chi2.sf(x, df), rtol=1e-11, atol=1e-300)
    pdf = [chisq_pdf(df, v) for v in x[1:]]
    np.testing.assert_allclose(pdf, stats.chi2.pdf(x[1:], df), rtol=1e-11, atol=1e-300)
    p = np.array([1e-9, 0.01, 0.1, 0.5, 0.9, 0.99, 0.999999])
    np.testing.assert_allclose([chisq_quantile(df, v) for v in p], stats.chi2.ppf(p, df), rtol=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=1, max_value=50), st.lists(st.floats(min_value=0, max_value=400), min_size=2,
                                                         max_size=50))
def test_chisq_cdf_nondecreasing(df, xs):
    xs = np.sort(xs)
    assert np.all(np.diff(chisq_cdf(df, xs)) >= 0)


@pytest.mark.parametrize("df,x", [(0, 1.0), (1.5, 1.0), (1, -1.0)])
def test_chisq_domain(df, x):
    with pytest.raises(DomainError):
        chisq_cdf(df, x)


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=1, max_value=20), st.floats(min_value=1e-6, max_value=1 - 1e-6))
def test_chisq_quantile_round_trip(df, p):
    assert chisq_cdf(df, chisq_quantile(df, p)) == pytest.approx(p, abs=1e-12)


# -- standard normal ----------------------------------------------------------

def test_std_normal_quantile_examples():
    assert std_normal_quantile(0.5) == 0.0
    assert std_normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    for u in (0.01, 0.2, 0.37):
        assert std_normal_quantile(u) + std_normal_quantile(1 - u) == pytest.approx(0.0, abs=1e-12)


def test_std_normal_quantile_against_erf_bisection():
    cdf = lambda z: 0.5 * math.erfc(-z / math.sqrt(2))
    for u in (1e-10, 1e-4, 0.025, 0.3, 0.8, 0.999):
        lo, hi = -40.0, 40.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if cdf(mid) < u else (lo, mid)
        assert std_normal_quantile(u) == pytest.approx(0.5 * (lo + hi), abs=1e-10)


def test_std_normal_cdf_pdf_match_scipy():
    z = np.linspace(-38, 9, 500)
    np.testing.assert_allclose(std_normal_cdf(z), stats.norm.cdf(z), rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(std_normal_pdf(z), stats.norm.pdf(z), rtol=1e-13, atol=1e-300)


def test_std_normal_quantile_round_trip_grid():
    u = np.linspace(0.001, 0.999, 5000)
    assert np.max(np.abs(stats.norm.cdf(std_normal_quantile(u)) - u)) < 1e-8
    np.testing.assert_allclose(std_normal_quantile(u), stats.norm.ppf(u), atol=1e-12)


@pytest.mark.parametrize("u", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_std_normal_quantile_domain(u):
    with pytest.raises(DomainError):
        std_normal_quantile(u)


@settings(max_examples=300, deadline=None)
@given(st.floats(min_value=1e-15, max_value=0.5))
def test_std_normal_quantile_antisymmetric(u):
    u = 1.0 - (1.0 - u)  # so that 1 - u is exact
    assert std_normal_quantile(u) == pytest.approx(-std_normal_quantile(1 - u), abs=1e-12)
