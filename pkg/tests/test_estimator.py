import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dncim import DivideAndConquerIM
from dncim.contours import ContourKind
from dncim.exceptions import ConfigError
from dncim.inference import Box, Decision
from dncim.summaries import BlockSummary, combine


@pytest.fixture(scope="module")
def y_exp():
    return np.random.default_rng(1).exponential(2.0, size=30)


def test_get_set_params_and_clone():
    im = DivideAndConquerIM("gaussian", model_options={"tau2": 2.0}, n_blocks=4, M=100, random_state=3)
    p = im.get_params()
    assert p["family"] == "gaussian" and p["n_blocks"] == 4 and p["M"] == 100
    im.set_params(kind="large_n")
    assert clone(im).get_params()["kind"] == "large_n"


def test_not_fitted():
    im = DivideAndConquerIM()
    with pytest.raises(NotFittedError):
        im.confidence_region(0.1)
    with pytest.raises(NotFittedError):
        im.possibility(0.5)


def test_fit_exponential(y_exp):
    im = DivideAndConquerIM("exponential", block_sizes=(5, 10, 15), M=500, random_state=0).fit(y_exp)
    assert im.n_blocks_ == 3 and im.kind_ == ContourKind.VALID_ANCHORED
    assert im.possibility(im.theta_check_[0]) == 1.0
    r = im.confidence_region(0.1)
    (lo, hi), = r.intervals[0]
    assert lo < im.theta_check_[0] < hi
    assert im.test([im.theta_check_[0]], 0.5).decision == Decision.RETAIN
    assert im.test(Box([hi * 3], [hi * 4]), 0.1).decision == Decision.REJECT
    # column input gives the same fit; refits are deterministic
    im2 = DivideAndConquerIM("exponential", block_sizes=(5, 10, 15), M=500, random_state=0).fit(y_exp[:, None])
    np.testing.assert_array_equal(im2.contour().values, im.contour().values)


def test_contour_is_cached(y_exp):
    im = DivideAndConquerIM("exponential", M=200, random_state=1).fit(y_exp)
    assert im.contour() is im.contour()


@pytest.mark.parametrize("kind", ["large_n", "valid_importance", "exponential_closed_form"])
def test_other_kinds(y_exp, kind):
    im = DivideAndConquerIM("exponential", kind=kind, M=500, random_state=2).fit(y_exp)
    assert 0.9 < float(im.contour().values.max()) <= 1.0
    assert not im.confidence_region(0.2).is_empty


def test_marginal_gandk():
    y = np.random.default_rng(3).normal(size=200) * 0.8 + 3  # g-and-k with g=k=0 is Gaussian
    im = DivideAndConquerIM("gandk", n_blocks=2, M=20, random_state=0).fit(y)
    assert im.theta_check_.shape == (4,)
    c = im.contour("sigma")
    assert c.coordinate == 1 and c.evaluate(im.theta_check_[1]) == 1.0
    assert im.marginal_possibility(1, im.theta_check_[1]) == 1.0
    with pytest.raises(ConfigError):
        im.contour("nope")
    with pytest.raises(ConfigError):
        im.contour(7)


def test_fit_summaries():
    blocks = [BlockSummary(10, [0.1], [[10.0]]), BlockSummary(20, [0.2], [[20.0]])]
    im = DivideAndConquerIM("gaussian", model_options={"tau2": 1.0}, kind="large_n").fit_summaries(blocks)
    assert im.theta_check_[0] == pytest.approx(0.5 / 3)
    im2 = DivideAndConquerIM("gaussian", kind="large_n").fit_summaries(combine(blocks))
    assert im2.theta_check_[0] == im.theta_check_[0]
    with pytest.raises(ConfigError):
        DivideAndConquerIM("gandk").fit_summaries(blocks)


@pytest.mark.parametrize("params", [{"kind": "nope"}, {"kind": "profile_marginal"}, {"M": 0},
                                    {"family": "cauchy"}])
def test_bad_params(params, y_exp):
    with pytest.raises(ConfigError):
        DivideAndConquerIM(**params).fit(y_exp)


def test_rejects_multicolumn_and_nan():
    with pytest.raises(ConfigError):
        DivideAndConquerIM().fit(np.ones((5, 2)))
    with pytest.raises(ValueError):
        DivideAndConquerIM().fit(np.array([1.0, np.nan, 2.0]))
