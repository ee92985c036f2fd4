"""Posited statistical models."""

from ..exceptions import ConfigError, DomainError
from .base import Model, fd_gradient, fd_hessian
from .closed_form import Exponential, GaussianKnownVar
from .gandk import GandK, check_gk_monotone, gk_cdf, gk_quantile
from .stable import AlphaStable, chambers_sample, stable_pdf

FAMILIES = {
    "gaussian": GaussianKnownVar,
    "exponential": Exponential,
    "gandk": GandK,
    "stable": AlphaStable,
}


def make_model(family: str, **options) -> Model:
    """Build a model from its family name and options (``tau2``, ``c``, ``alpha``)."""
    try:
        cls = FAMILIES[family.lower()]
    except KeyError:
        raise ConfigError(f"unknown model family {family!r}; choose from {sorted(FAMILIES)}") from None
    try:
        return cls(**options)
    except (TypeError, DomainError) as exc:
        raise ConfigError(f"bad options for {family!r}: {exc}") from None


def model_from_spec(spec: dict) -> Model:
    spec = dict(spec)
    return make_model(spec.pop("family"), **spec)


__all__ = [
    "Model", "GaussianKnownVar", "Exponential", "GandK", "AlphaStable",
    "make_model", "model_from_spec", "gk_quantile", "gk_cdf", "check_gk_monotone",
    "chambers_sample", "stable_pdf", "fd_hessian", "fd_gradient", "FAMILIES",
]
