"""scikit-learn style wrapper around the divide-and-conquer pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .contours import (
    DEFAULT_M,
    ContourKind,
    build_exp_closed_form_contour,
    build_large_n_contour,
    draw_reference,
    profile_contour_anchored,
    valid_contour_anchored,
    valid_contour_importance,
)
from .exceptions import ConfigError
from .inference import ConfidenceRegion, HypothesisTestResult, level_set, test_hypothesis
from .models import make_model
from .rng import Purpose, substream
from .summaries import AggregatedSummary, BlockSummary, combine, partition, summarize_blocks

_KINDS = {ContourKind.LARGE_N, ContourKind.VALID_ANCHORED, ContourKind.VALID_IMPORTANCE,
          ContourKind.EXPONENTIAL_CLOSED_FORM}


class DivideAndConquerIM(BaseEstimator):
    """Possibility contours from block summaries of a dataset.

    Parameters
    ----------
    family : str
        Model family (``"gaussian"``, ``"exponential"``, ``"gandk"``, ``"stable"``).
    model_options : dict, optional
        Keyword arguments for the model constructor.
    n_blocks : int
        Number of blocks when ``block_sizes`` is not given.
    block_sizes : sequence of int, optional
        Explicit block sizes; must sum to the number of observations.
    kind : str
        Joint contour kind: ``"valid_anchored"``, ``"large_n"``,
        ``"valid_importance"`` or ``"exponential_closed_form"``.
    M : int
        Monte Carlo size of the reference sample.
    random_state : int or None
        Seed for the partition and the reference draws.
    workers : int
        Processes used to summarize blocks.

    Examples
    --------
    >>> import numpy as np
    >>> y = np.random.default_rng(1).exponential(2.0, size=30)
    >>> im = DivideAndConquerIM("exponential", block_sizes=(5, 10, 15), random_state=0).fit(y)
    >>> region = im.confidence_region(0.1)
    """

    def __init__(self, family="exponential", model_options=None, n_blocks=3, block_sizes=None,
                 kind="valid_anchored", M=DEFAULT_M, random_state=None, workers=1):
        self.family = family
        self.model_options = model_options
        self.n_blocks = n_blocks
        self.block_sizes = block_sizes
        self.kind = kind
        self.M = M
        self.random_state = random_state
        self.workers = workers

    # -- fitting ----------------------------------------------------------------
    def _setup(self):
        try:
            kind = ContourKind(self.kind)
        except ValueError:
            raise ConfigError(f"unknown contour kind {self.kind!r}") from None
        if kind not in _KINDS:
            raise ConfigError(f"{kind.value!r} is not a joint contour kind for this estimator")
        if int(self.M) < 1:
            raise ConfigError("M must be positive")
        self.model_ = make_model(self.family, **(self.model_options or {}))
        self.kind_ = kind
        self._seed = 0 if self.random_state is None else int(self.random_state)

    def fit(self, X, y=None):
        """Partition the observations in ``X``, summarize each block and combine."""
        self._setup()
        data = check_array(X, ensure_2d=False, dtype=np.float64)
        if data.ndim == 2:
            if data.shape[1] != 1:
                raise ConfigError("X must be one-dimensional or a single column")
            data = data[:, 0]
        sizes = self.block_sizes
        B = len(sizes) if sizes is not None else int(self.n_blocks)
        blocks = partition(data, B, substream(self._seed, 0, Purpose.PARTITION), sizes=sizes)
        summaries = summarize_blocks(self.model_, blocks, workers=self.workers)
        return self._finish(combine(summaries))

    def fit_summaries(self, summaries):
        """Fit from precomputed :class:`BlockSummary` objects or an :class:`AggregatedSummary`."""
        self._setup()
        agg = summaries if isinstance(summaries, AggregatedSummary) else combine(list(summaries))
        if any(not isinstance(b, BlockSummary) for b in agg.blocks):
            raise ConfigError("summaries must be BlockSummary instances")
        if agg.dim != self.model_.dim:
            raise ConfigError(f"summaries have dimension {agg.dim}, model expects {self.model_.dim}")
        return self._finish(agg)

    def _finish(self, agg):
        self.summary_ = agg
        self.theta_check_ = agg.theta_check
        self.total_info_ = agg.total_info
        self.n_blocks_ = agg.B
        self._reference = None
        self._contours = {}
        return self

    def _reference_sample(self):
        if self._reference is None:
            self._reference = draw_reference(self.model_, self.summary_.sizes, self.theta_check_, int(self.M),
                                             substream(self._seed, 0, Purpose.REFERENCE))
        return self._reference

    # -- contours -----------------------------------------------------------------
    def contour(self, coordinate=None, grid=None):
        """Joint contour, or the marginal contour of ``coordinate`` (name or zero-based index)."""
        check_is_fitted(self, "summary_")
        q = self._coordinate_index(coordinate)
        key = (q, None if grid is None else np.asarray(grid).tobytes())
        if key in self._contours:
            return self._contours[key]
        agg, model = self.summary_, self.model_
        if q is not None:
            if self.kind_ == ContourKind.LARGE_N:
                c = build_large_n_contour(agg, grid=grid, coordinate=q, model=model)
            else:
                c = profile_contour_anchored(model, agg, q, grid_q=grid, reference=self._reference_sample(),
                                             seed=self._seed)
        elif self.kind_ == ContourKind.LARGE_N:
            c = build_large_n_contour(agg, grid=grid, model=model)
        elif self.kind_ == ContourKind.VALID_ANCHORED:
            c = valid_contour_anchored(model, agg, grid=grid, reference=self._reference_sample(), seed=self._seed)
        elif self.kind_ == ContourKind.VALID_IMPORTANCE:
            c = valid_contour_importance(model, agg, grid=grid, M=int(self.M),
                                         rng=substream(self._seed, 0, Purpose.IMPORTANCE))
        else:
            c = build_exp_closed_form_contour(agg, grid=grid, model=model)
        self._contours[key] = c
        return c

    def _coordinate_index(self, coordinate):
        if coordinate is None:
            return None
        names = self.model_.param_names
        if isinstance(coordinate, str):
            if coordinate not in names:
                raise ConfigError(f"unknown coordinate {coordinate!r}; choose from {names}")
            return names.index(coordinate)
        q = int(coordinate)
        if not 0 <= q < len(names):
            raise ConfigError(f"coordinate index {q} out of range")
        return q

    def possibility(self, theta):
        """Joint contour value(s) at ``theta``."""
        return self.contour().evaluate(theta)

    def marginal_possibility(self, coordinate, theta_q):
        """Marginal contour value(s) for one coordinate."""
        return self.contour(coordinate).evaluate(theta_q)

    def confidence_region(self, alpha, coordinate=None) -> ConfidenceRegion:
        """``{theta : pi(theta) > alpha}`` for the joint or a marginal contour."""
        return level_set(self.contour(coordinate), alpha)

    def test(self, hypothesis, alpha, coordinate=None) -> HypothesisTestResult:
        """Possibilistic test of ``H0: theta in hypothesis`` at level ``alpha``."""
        return test_hypothesis(self.contour(coordinate), hypothesis, alpha)
