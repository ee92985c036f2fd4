"""Valid divide-and-conquer possibilistic inference from block summaries."""

from .contours import Contour, ContourKind
from .estimator import DivideAndConquerIM
from .exceptions import (
    ConfigError, DomainError, EmptyHypothesis, NonMonotoneQuantile, NotPositiveDefinite, OptimFailure,
    QuadratureFailure, SimulationBudgetExceeded, SingularInformation, UnsupportedModel,
)
from .inference import Box, ConfidenceRegion, Decision, HypothesisTestResult, level_set, test_hypothesis
from .models import AlphaStable, Exponential, GandK, GaussianKnownVar, make_model
from .summaries import AggregatedSummary, BlockSummary, combine, partition, summarize_block

__version__ = "0.1.0"

__all__ = [
    "AggregatedSummary", "AlphaStable", "BlockSummary", "Box", "ConfidenceRegion", "Contour", "ContourKind",
    "Decision", "DivideAndConquerIM", "Exponential", "GandK", "GaussianKnownVar", "HypothesisTestResult",
    "combine", "level_set", "make_model", "partition", "summarize_block", "test_hypothesis",
]
