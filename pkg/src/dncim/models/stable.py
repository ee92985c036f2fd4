"""Alpha-stable family with fixed stability index.

Characteristic function ``exp[i t mu - |c t|^alpha (1 - i beta sgn(t) Phi)]``
with ``Phi = tan(pi alpha / 2)`` (``alpha != 1``) or ``-(2/pi) log|t|``.
Sampling uses the Chambers-Mallows-Stuck construction; the density is an
inverse Fourier integral evaluated with oscillatory quadrature, which is
slow and meant for single-dataset use.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import integrate

from ..exceptions import DomainError, QuadratureFailure
from .base import Model, as_data


def chambers_sample(alpha, beta, c, mu, n, rng):
    """Draw ``n`` alpha-stable variates by the Chambers-Mallows-Stuck method."""
    if not 0 < alpha <= 2 or not -1 <= beta <= 1 or not c > 0:
        raise DomainError("stable parameters out of range")
    U = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, int(n))
    W = rng.exponential(1.0, int(n))
    if alpha != 1:
        zeta = -beta * math.tan(0.5 * math.pi * alpha)
        xi = math.atan(-zeta) / alpha
        X = ((1.0 + zeta * zeta) ** (0.5 / alpha)
             * np.sin(alpha * (U + xi)) / np.cos(U) ** (1.0 / alpha)
             * (np.cos(U - alpha * (U + xi)) / W) ** ((1.0 - alpha) / alpha))
        return c * X + mu
    xi = 0.5 * math.pi
    b = xi + beta * U
    X = (b * np.tan(U) - beta * np.log(xi * W * np.cos(U) / b)) / xi
    return c * X + (2.0 / math.pi) * beta * c * math.log(c) + mu


def stable_pdf(x, alpha, beta, c, mu, epsabs=1e-12, epsrel=1e-10):
    """Density by quadrature of ``(1/pi) int_0^T exp(-(ct)^alpha) cos(t w + psi(t)) dt``.

    ``w = mu - x`` and ``psi(t) = beta Phi(t) (ct)^alpha``.  The range is
    truncated where the envelope drops below ``exp(-40)``; the ``cos(t w)``
    factor is handled by QAWO-type weighted quadrature.
    """
    if alpha != 1:
        phi_const = math.tan(0.5 * math.pi * alpha)
        psi = lambda t: beta * phi_const * (c * t) ** alpha  # noqa: E731
    else:
        psi = lambda t: -beta * (2.0 / math.pi) * math.log(t) * (c * t) if t > 0 else 0.0  # noqa: E731
    T = 40.0 ** (1.0 / alpha) / c
    env = lambda t: math.exp(-((c * t) ** alpha))  # noqa: E731
    f_cos = lambda t: env(t) * math.cos(psi(t))  # noqa: E731
    f_sin = lambda t: env(t) * math.sin(psi(t))  # noqa: E731

    def one(xv):
        w = mu - xv
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                if w == 0.0:
                    val = integrate.quad(f_cos, 0.0, T, epsabs=epsabs, epsrel=epsrel, limit=500)[0]
                else:
                    aw = abs(w)
                    a = integrate.quad(f_cos, 0.0, T, weight="cos", wvar=aw,
                                       epsabs=epsabs, epsrel=epsrel, limit=500)[0]
                    b = integrate.quad(f_sin, 0.0, T, weight="sin", wvar=aw,
                                       epsabs=epsabs, epsrel=epsrel, limit=500)[0]
                    val = a - math.copysign(1.0, w) * b
            except integrate.IntegrationWarning as exc:
                raise QuadratureFailure(f"stable density at x={xv}: {exc}") from None
        return max(val / math.pi, 0.0)

    xa = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.array([one(float(v)) for v in xa])
    return float(out[0]) if np.ndim(x) == 0 else out


class AlphaStable(Model):
    """Alpha-stable with parameters (mu, c, beta) and fixed ``alpha``."""

    name = "stable"
    param_names = ("mu", "c", "beta")
    bounds = (
        (-20.0, 20.0, True, True),
        (0.0, 10.0, False, True),
        (-1.0, 1.0, True, True),
    )

    def __init__(self, alpha: float = 1.5):
        if not 0 < alpha <= 2:
            raise DomainError(f"stability index must lie in (0, 2], got {alpha!r}")
        self.alpha = float(alpha)

    def spec(self):
        return {"family": self.name, "alpha": self.alpha}

    def sample(self, theta, n, rng):
        mu, c, beta = self.check_theta(theta)
        return chambers_sample(self.alpha, beta, c, mu, n, rng)

    def log_likelihood(self, theta, data):
        mu, c, beta = self.check_theta(theta)
        dens = stable_pdf(as_data(data), self.alpha, beta, c, mu)
        if np.any(dens <= 0):
            return -math.inf
        return float(np.sum(np.log(dens)))

    def initial_guess(self, data):
        q1, med, q3 = np.quantile(data, [0.25, 0.5, 0.75])
        scale = max((q3 - q1) / 2.0, 1e-3)
        return np.array([med, min(scale, 10.0), 0.0])
