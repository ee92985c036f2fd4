import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from dncim.exceptions import DomainError, NotPositiveDefinite, SingularInformation
from dncim.models import Exponential, GandK, GaussianKnownVar
from dncim.summaries import (
    AggregatedSummary,
    BlockSummary,
    combine,
    combine_arrays,
    gauss_relative_likelihood,
    partition,
    profile_gauss_relative_likelihood,
    summarize_block,
    summarize_blocks,
)


def random_spd(rng, p):
    A = rng.normal(size=(p, p))
    return A @ A.T + p * np.eye(p)


def random_blocks(rng, B, p):
    return [BlockSummary(int(rng.integers(1, 50)), rng.normal(size=p), random_spd(rng, p)) for _ in range(B)]


# -- partition ----------------------------------------------------------------

def test_partition_sizes():
    rng = np.random.default_rng(0)
    assert [b.size for b in partition(np.arange(20.0), 4, rng)] == [5, 5, 5, 5]
    assert sorted(b.size for b in partition(np.arange(365.0), 4, rng)) == [91, 91, 91, 92]
    (one,) = partition(np.arange(7.0), 1, rng)
    assert sorted(one) == list(range(7))
    with pytest.raises(DomainError):
        partition(np.arange(3.0), 4, rng)
    with pytest.raises(DomainError):
        partition(np.arange(6.0), 2, rng, sizes=[2, 3])


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 200), st.integers(1, 20), st.integers(0, 2 ** 32 - 1))
def test_partition_is_a_permutation(n, B, seed):
    if B > n:
        return
    y = np.arange(n, dtype=float)
    blocks = partition(y, B, np.random.default_rng(seed))
    sizes = [b.size for b in blocks]
    assert len(blocks) == B and max(sizes) - min(sizes) <= 1
    np.testing.assert_array_equal(np.sort(np.concatenate(blocks)), y)


# -- summaries ----------------------------------------------------------------

def test_summarize_block_closed_forms():
    s = summarize_block(Exponential(), np.array([1.0, 2.0, 3.0]))
    assert (s.n_b, s.theta_hat[0], s.info[0, 0]) == (3, pytest.approx(0.5), pytest.approx(12.0))
    s = summarize_block(GaussianKnownVar(4.0), np.array([1.0, 1.1, 1.2, 1.3, 1.4]))
    assert s.n_b == 5 and s.theta_hat[0] == pytest.approx(1.2) and s.info[0, 0] == pytest.approx(1.25)


def test_summarize_block_gandk_against_grid_search():
    m = GandK()
    y = m.sample([3.0, 1.0, 2.0, 0.5], 50, np.random.default_rng(1))
    s = summarize_block(m, y)
    # coarse-to-fine coordinate grid search started away from the reported MLE
    th = s.theta_hat + np.array([0.05, -0.05, 0.1, -0.05])
    width = np.array([0.2, 0.2, 0.4, 0.2])
    for _ in range(60):
        for j in range(4):
            cand = th[j] + np.linspace(-width[j], width[j], 21)
            vals = []
            for v in cand:
                t = th.copy()
                t[j] = v
                vals.append(m.log_likelihood(t, y) if m.in_bounds(t) and _mono(t) else -np.inf)
            th[j] = cand[int(np.argmax(vals))]
        width *= 0.85
    assert m.log_likelihood(s.theta_hat, y) >= m.log_likelihood(th, y) - 1e-7
    np.testing.assert_allclose(s.theta_hat, th, atol=1e-3)


def _mono(t):
    from dncim.models import check_gk_monotone
    return check_gk_monotone(t)


def test_block_summary_validation():
    with pytest.raises(NotPositiveDefinite):
        BlockSummary(3, [0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(NotPositiveDefinite):
        BlockSummary(3, [0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(DomainError):
        BlockSummary(0, [0.0], [[1.0]])
    with pytest.raises(DomainError):
        BlockSummary(2, [0.0, 1.0], [[1.0]])
    s = BlockSummary(2, [0.5], [[8.0]])
    back = BlockSummary.from_dict(s.to_dict())
    assert back.n_b == 2 and np.array_equal(back.info, s.info) and np.array_equal(back.theta_hat, s.theta_hat)


def test_summarize_blocks_in_parallel_matches_serial():
    m = Exponential()
    blocks = partition(m.sample([0.5], 40, np.random.default_rng(1)), 4, np.random.default_rng(2))
    a = summarize_blocks(m, blocks, workers=1)
    b = summarize_blocks(m, blocks, workers=2)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.theta_hat, y.theta_hat)


# -- combination ----------------------------------------------------------------

def test_combine_examples():
    J = np.array([[2.0, 0.3], [0.3, 1.0]])
    hats = [np.array([1.0, 2.0]), np.array([3.0, -1.0]), np.array([0.5, 0.5])]
    agg = combine([BlockSummary(5, h, J) for h in hats])
    np.testing.assert_allclose(agg.theta_check, np.mean(hats, axis=0), atol=1e-14)
    np.testing.assert_allclose(agg.total_info, 3 * J)
    one = combine([BlockSummary(5, hats[0], J)])
    np.testing.assert_array_equal(one.theta_check, hats[0])
    # Exponential, n_b = 5b: scalar hand computation
    ns, th = np.array([5, 10, 15]), np.array([0.4, 0.55, 0.61])
    agg = combine([BlockSummary(n, [t], [[n / t ** 2]]) for n, t in zip(ns, th)])
    expect = np.sum(ns / th) / np.sum(ns / th ** 2)
    assert agg.theta_check[0] == pytest.approx(expect, rel=1e-14)
    assert agg.total_info[0, 0] == pytest.approx(np.sum(ns / th ** 2), rel=1e-14)


def test_combine_rejects():
    with pytest.raises(DomainError):
        combine([])
    with pytest.raises(DomainError):
        combine([BlockSummary(1, [0.0], [[1.0]]), BlockSummary(1, [0.0, 0.0], np.eye(2))])
    with pytest.raises(SingularInformation):
        combine([BlockSummary(1, [0.0, 0.0], np.diag([1e3, 5e-10]))])


def test_combine_gaussian_reproduces_full_mean():
    m = GaussianKnownVar(2.5)
    y = m.sample([1.0], 97, np.random.default_rng(4))
    blocks = partition(y, 5, np.random.default_rng(5))
    agg = combine([summarize_block(m, b) for b in blocks])
    assert agg.theta_check[0] == pytest.approx(y.mean(), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_combine_block_order_invariant(B, p, seed):
    blocks = random_blocks(np.random.default_rng(seed), B, p)
    ref = combine(blocks)
    for perm in list(permutations(range(B)))[:6]:
        other = combine([blocks[i] for i in perm])
        np.testing.assert_array_equal(other.theta_check, ref.theta_check)
        np.testing.assert_array_equal(other.total_info, ref.total_info)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
def test_combine_solves_normal_equations(B, p, seed):
    blocks = random_blocks(np.random.default_rng(seed), B, p)
    agg = combine(blocks)
    rhs = sum(b.info @ b.theta_hat for b in blocks)
    np.testing.assert_allclose(agg.total_info @ agg.theta_check, rhs, rtol=1e-10, atol=1e-10)


def test_combine_arrays_batched_matches_loop():
    rng = np.random.default_rng(8)
    hats = rng.normal(size=(7, 3, 2))
    infos = np.array([[random_spd(rng, 2) for _ in range(3)] for _ in range(7)])
    th, tot = combine_arrays(hats, infos)
    for m in range(7):
        agg = combine([BlockSummary(1, hats[m, b], infos[m, b]) for b in range(3)])
        np.testing.assert_allclose(th[m], agg.theta_check, rtol=1e-12)


def test_aggregate_round_trip():
    agg = combine(random_blocks(np.random.default_rng(3), 3, 2))
    back = AggregatedSummary.from_dict(agg.to_dict())
    np.testing.assert_array_equal(back.theta_check, agg.theta_check)
    assert back.sizes == agg.sizes


# -- working likelihoods ----------------------------------------------------------

def test_gauss_relative_likelihood_examples():
    agg = combine([BlockSummary(1, [1.0], [[4.0]])])
    assert gauss_relative_likelihood(agg, 1.0) == 1.0
    assert gauss_relative_likelihood(agg, 0.0) == pytest.approx(math.exp(-2.0))
    agg2 = combine([BlockSummary(1, [0.0, 0.0], 2 * np.eye(2))])
    assert gauss_relative_likelihood(agg2, [1.0, math.sqrt(2.0)]) == pytest.approx(math.exp(-3.0))
    with pytest.raises(DomainError):
        gauss_relative_likelihood(agg2, [1.0, 2.0, 3.0])


def test_gauss_relative_likelihood_maximized_at_center():
    rng = np.random.default_rng(1)
    agg = combine(random_blocks(rng, 3, 3))
    pts = agg.theta_check + rng.normal(scale=0.5, size=(1000, 3))
    assert np.all(gauss_relative_likelihood(agg, pts) < 1.0)


def test_profile_examples():
    agg1 = combine([BlockSummary(1, [1.0], [[3.0]])])
    assert profile_gauss_relative_likelihood(agg1, 0, 0.3) == gauss_relative_likelihood(agg1, 0.3)
    J = np.diag([1.0, 2.0, 5.0])
    agg = combine([BlockSummary(1, [0.2, -0.1, 0.4], J)])
    assert profile_gauss_relative_likelihood(agg, 1, -0.1) == 1.0
    # grid-maximization oracle over the two nuisance coordinates
    g0 = np.linspace(-2, 2, 401)
    g2 = np.linspace(-1.6, 2.4, 401)
    A, C = np.meshgrid(g0, g2, indexing="ij")
    pts = np.stack([A, np.full_like(A, 0.7), C], axis=-1)
    assert gauss_relative_likelihood(agg, pts).max() == pytest.approx(
        profile_gauss_relative_likelihood(agg, 1, 0.7), rel=1e-12)
    with pytest.raises(DomainError):
        profile_gauss_relative_likelihood(agg, 3, 0.0)


@settings(max_examples=100, deadline=None)
@given(hnp.arrays(float, 3, elements=st.floats(0.1, 10)), hnp.arrays(float, 3, elements=st.floats(-3, 3)),
       st.integers(0, 2))
def test_profile_dominates_joint_for_diagonal_information(diag, theta, q):
    agg = combine([BlockSummary(1, [0.0, 0.5, -0.5], np.diag(diag))])
    assert profile_gauss_relative_likelihood(agg, q, theta[q]) >= gauss_relative_likelihood(agg, theta) * (1 - 1e-12)


def test_profile_diagonal_convention_with_correlation():
    # with correlated information the diagonal entry exceeds the Schur complement,
    # so the literal diagonal convention sits below the exact profile
    J = np.array([[2.0, 1.5], [1.5, 2.0]])
    agg = combine([BlockSummary(1, [0.0, 0.0], J)])
    schur = J[0, 0] - J[0, 1] ** 2 / J[1, 1]
    exact = math.exp(-0.5 * schur)
    assert profile_gauss_relative_likelihood(agg, 0, 1.0) == pytest.approx(math.exp(-1.0))
    assert profile_gauss_relative_likelihood(agg, 0, 1.0) < exact
