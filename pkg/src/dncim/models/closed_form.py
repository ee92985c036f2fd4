"""Gaussian (known variance) and Exponential families.

Both have closed-form MLEs and information, and their block summaries
have known sampling laws, which gives exact batch simulation and the
summary densities needed by importance-weighted contours.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from ..exceptions import DomainError, NotPositiveDefinite
from .base import Model, as_data

_LOG_2PI = math.log(2.0 * math.pi)


class GaussianKnownVar(Model):
    """N(theta, tau2) with tau2 known."""

    name = "gaussian"
    param_names = ("mu",)
    bounds = ((-math.inf, math.inf, False, False),)
    has_summary_density = True

    def __init__(self, tau2: float = 1.0):
        if not tau2 > 0:
            raise DomainError(f"tau2 must be positive, got {tau2!r}")
        self.tau2 = float(tau2)

    def spec(self):
        return {"family": self.name, "tau2": self.tau2}

    def sample(self, theta, n, rng):
        (mu,) = self.check_theta(theta)
        return mu + math.sqrt(self.tau2) * rng.standard_normal(int(n))

    def log_likelihood(self, theta, data):
        (mu,) = self.check_theta(theta)
        y = as_data(data)
        return float(-0.5 * y.size * (_LOG_2PI + math.log(self.tau2))
                     - np.sum((y - mu) ** 2) / (2.0 * self.tau2))

    def initial_guess(self, data):
        return np.array([float(np.mean(data))])

    def mle(self, data, init=None):
        return np.array([float(np.mean(as_data(data)))])

    def observed_information(self, theta_hat, data):
        self.check_theta(theta_hat)
        return np.array([[as_data(data).size / self.tau2]])

    def sample_summaries_batch(self, theta, sizes, M, rng):
        # block means are N(theta, tau2 / n_b) independently
        (mu,) = self.check_theta(theta)
        sizes = np.asarray(sizes, dtype=float)
        hats = mu + np.sqrt(self.tau2 / sizes) * rng.standard_normal((M, sizes.size))
        infos = np.broadcast_to((sizes / self.tau2)[None, :, None, None], (M, sizes.size, 1, 1))
        return hats[..., None], infos.copy()

    def summary_log_density(self, theta, theta_hats, sizes):
        (mu,) = self.check_theta(theta)
        hats = np.asarray(theta_hats, dtype=float)[..., 0]
        var = self.tau2 / np.asarray(sizes, dtype=float)
        return np.sum(-0.5 * (_LOG_2PI + np.log(var)) - 0.5 * (hats - mu) ** 2 / var, axis=-1)

    def full_data_relative_loglik(self, theta, data):
        (mu,) = self.check_theta(theta)
        y = as_data(data)
        return float(-0.5 * y.size * (y.mean() - mu) ** 2 / self.tau2)


class Exponential(Model):
    """Exponential with rate theta."""

    name = "exponential"
    param_names = ("rate",)
    bounds = ((0.0, math.inf, False, False),)
    has_summary_density = True

    def sample(self, theta, n, rng):
        (rate,) = self.check_theta(theta)
        return rng.exponential(1.0 / rate, int(n))

    def log_likelihood(self, theta, data):
        (rate,) = self.check_theta(theta)
        y = as_data(data)
        if np.any(y < 0):
            raise DomainError("exponential data must be non-negative")
        return float(y.size * math.log(rate) - rate * y.sum())

    def initial_guess(self, data):
        return np.array([1.0 / float(np.mean(data))])

    def mle(self, data, init=None):
        y = as_data(data)
        if np.any(y < 0):
            raise DomainError("exponential data must be non-negative")
        total = float(y.sum())
        if total <= 0:
            raise NotPositiveDefinite("exponential block with zero sum has no finite MLE")
        return np.array([y.size / total])

    def observed_information(self, theta_hat, data):
        (rate,) = self.check_theta(theta_hat)
        return np.array([[as_data(data).size / rate ** 2]])

    def sample_summaries_batch(self, theta, sizes, M, rng):
        # the block sum is Gamma(n_b, 1/theta), so theta_hat_b = n_b / sum
        (rate,) = self.check_theta(theta)
        sizes = np.asarray(sizes, dtype=float)
        sums = rng.gamma(np.broadcast_to(sizes, (M, sizes.size)), 1.0 / rate)
        hats = sizes / sums
        infos = sizes / hats ** 2
        return hats[..., None], infos[..., None, None]

    def summary_log_density(self, theta, theta_hats, sizes):
        # density of the block sums; the Jacobian to theta_hat cancels in ratios
        (rate,) = self.check_theta(theta)
        nb = np.asarray(sizes, dtype=float)
        sums = nb / np.asarray(theta_hats, dtype=float)[..., 0]
        return np.sum(nb * math.log(rate) + (nb - 1.0) * np.log(sums) - rate * sums - gammaln(nb), axis=-1)

    def full_data_relative_loglik(self, theta, data):
        (rate,) = self.check_theta(theta)
        y = as_data(data)
        n, s = y.size, float(y.sum())
        hat = n / s
        return float(n * math.log(rate / hat) - (rate - hat) * s)
