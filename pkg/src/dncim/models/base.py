"""Shared model machinery: parameter boxes, generic MLE and finite-difference information."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from ..exceptions import (
    DncImError,
    DomainError,
    NotPositiveDefinite,
    OptimFailure,
    UnsupportedModel,
)

PD_EIG_TOL = 1e-10
N_RESTARTS = 3


def as_data(data) -> np.ndarray:
    y = np.asarray(data, dtype=float).ravel()
    if y.size == 0:
        raise DomainError("dataset is empty")
    if not np.all(np.isfinite(y)):
        raise DomainError("dataset contains non-finite observations")
    return y


def fd_steps(theta: np.ndarray) -> np.ndarray:
    return 1e-4 * (1.0 + np.abs(theta))


def fd_hessian(f, x: np.ndarray, steps: np.ndarray | None = None) -> np.ndarray:
    """Central-difference Hessian of a scalar function, symmetrized."""
    x = np.asarray(x, dtype=float)
    p = x.size
    h = fd_steps(x) if steps is None else np.asarray(steps, dtype=float)
    f0 = f(x)
    H = np.empty((p, p))
    E = np.diag(h)
    for i in range(p):
        H[i, i] = (f(x + E[i]) - 2.0 * f0 + f(x - E[i])) / (h[i] * h[i])
        for j in range(i):
            fpp = f(x + E[i] + E[j])
            fpm = f(x + E[i] - E[j])
            fmp = f(x - E[i] + E[j])
            fmm = f(x - E[i] - E[j])
            H[i, j] = H[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j])
    return 0.5 * (H + H.T)


def fd_gradient(f, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = 1e-6 * (1.0 + np.abs(x))
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h[i]
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h[i])
    return g


def check_pd(info: np.ndarray) -> np.ndarray:
    info = np.atleast_2d(np.asarray(info, dtype=float))
    if not np.all(np.isfinite(info)):
        raise NotPositiveDefinite("observed information has non-finite entries")
    eig = np.linalg.eigvalsh(info)
    if eig[0] <= PD_EIG_TOL:
        raise NotPositiveDefinite(f"observed information smallest eigenvalue {eig[0]:.3e}")
    return info


class Model:
    """A parametric family with box-bounded parameters.

    Subclasses provide ``sample`` and ``log_likelihood``; closed-form
    families override ``mle`` and ``observed_information``.
    """

    name: str = "model"
    param_names: tuple[str, ...] = ()
    # (lower, upper, lower_closed, upper_closed)
    bounds: tuple[tuple[float, float, bool, bool], ...] = ()
    has_summary_density = False

    @property
    def dim(self) -> int:
        return len(self.param_names)

    def spec(self) -> dict:
        return {"family": self.name}

    def __repr__(self):
        extra = ", ".join(f"{k}={v!r}" for k, v in self.spec().items() if k != "family")
        return f"{type(self).__name__}({extra})"

    def __eq__(self, other):
        return type(self) is type(other) and self.spec() == other.spec()

    def __hash__(self):
        return hash(tuple(sorted(self.spec().items())))

    # -- parameter handling -------------------------------------------------
    def in_bounds(self, theta) -> bool:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != (self.dim,) or not np.all(np.isfinite(theta)):
            return False
        for t, (lo, hi, lo_c, hi_c) in zip(theta, self.bounds):
            if t < lo or t > hi or (t == lo and not lo_c) or (t == hi and not hi_c):
                return False
        return True

    def check_theta(self, theta) -> np.ndarray:
        arr = np.atleast_1d(np.asarray(theta, dtype=float))
        if arr.shape != (self.dim,):
            raise DomainError(f"{self.name}: expected {self.dim} parameters, got shape {arr.shape}")
        if not self.in_bounds(arr):
            raise DomainError(f"{self.name}: parameter {arr.tolist()} outside bounds")
        return arr

    def params_to_dict(self, theta) -> dict:
        return {k: float(v) for k, v in zip(self.param_names, np.atleast_1d(theta))}

    def params_from_dict(self, d: dict) -> np.ndarray:
        try:
            return self.check_theta([d[k] for k in self.param_names])
        except KeyError as exc:
            raise DomainError(f"{self.name}: missing parameter {exc.args[0]!r}") from None

    def _interior_box(self):
        lo = np.array([b[0] for b in self.bounds], dtype=float)
        hi = np.array([b[1] for b in self.bounds], dtype=float)
        pad = 1e-8 * (1.0 + np.abs(np.where(np.isfinite(lo), lo, 0.0)))
        lo = np.where([not b[2] for b in self.bounds], lo + pad, lo)
        return list(zip(np.where(np.isfinite(lo), lo, None), np.where(np.isfinite(hi), hi, None)))

    # -- statistical interface ------------------------------------------------
    def sample(self, theta, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def log_likelihood(self, theta, data) -> float:
        raise NotImplementedError

    def initial_guess(self, data: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _safe_nll(self, data):
        def nll(t):
            if not self.in_bounds(t):
                return 1e300
            try:
                v = -self.log_likelihood(t, data)
            except DncImError:
                return 1e300
            return v if math.isfinite(v) else 1e300
        return nll

    def mle(self, data, init=None) -> np.ndarray:
        """Local maximizer by box-constrained L-BFGS-B with jittered restarts."""
        y = as_data(data)
        start = self.initial_guess(y) if init is None else self.check_theta(init)
        nll = self._safe_nll(y)
        box = self._interior_box()
        jitter_rng = np.random.default_rng(12345)
        for attempt in range(N_RESTARTS + 1):
            x0 = start.copy()
            if attempt:
                x0 = x0 + 0.1 * attempt * (1.0 + np.abs(x0)) * jitter_rng.standard_normal(self.dim)
                x0 = np.clip(x0, [b[0] if b[0] is not None else -np.inf for b in box],
                             [b[1] if b[1] is not None else np.inf for b in box])
            res = minimize(nll, x0, method="L-BFGS-B", bounds=box,
                           options={"maxiter": 500, "ftol": 1e-13, "gtol": 1e-9})
            if res.fun >= 1e299 or not self.in_bounds(res.x):
                continue
            grad = fd_gradient(lambda t: -nll(t), res.x)
            if np.max(np.abs(grad)) < 1e-5 * (1.0 + abs(res.fun)):
                return res.x
        raise OptimFailure(f"{self.name}: no stationary point after {N_RESTARTS} restarts")

    def observed_information(self, theta_hat, data) -> np.ndarray:
        """Negative central-difference Hessian of the log-likelihood."""
        y = as_data(data)
        theta_hat = self.check_theta(theta_hat)
        steps = fd_steps(theta_hat)
        if not (self.in_bounds(theta_hat - steps) and self.in_bounds(theta_hat + steps)):
            raise NotPositiveDefinite(f"{self.name}: estimate too close to the boundary")
        H = fd_hessian(lambda t: self.log_likelihood(t, y), theta_hat, steps)
        return check_pd(-H)

    def summarize(self, data) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(theta_hat, info)`` for one block."""
        y = as_data(data)
        theta_hat = self.mle(y)
        return theta_hat, self.observed_information(theta_hat, y)

    def sample_summaries(self, theta, sizes: Sequence[int], rng: np.random.Generator):
        """Draw one set of block summaries under ``theta``.

        Returns arrays of shape ``(B, p)`` and ``(B, p, p)``.  Failures
        propagate to the caller.
        """
        theta = self.check_theta(theta)
        hats, infos = [], []
        for nb in sizes:
            th, J = self.summarize(self.sample(theta, int(nb), rng))
            hats.append(th)
            infos.append(J)
        return np.array(hats), np.array(infos)

    # exact-in-law batch simulation, available for closed-form families
    def sample_summaries_batch(self, theta, sizes, M: int, rng):
        raise UnsupportedModel(f"{self.name}: no batch summary sampler")

    def summary_log_density(self, theta, theta_hats, sizes) -> np.ndarray:
        raise UnsupportedModel(f"{self.name}: block summaries have no tractable density")

    def full_data_relative_loglik(self, theta, data) -> float:
        raise UnsupportedModel(f"{self.name}: full-data relative likelihood not available")
