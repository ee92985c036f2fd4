"""g-and-k quantile family.

The likelihood needs the inverse problem ``Q(u) = y`` solved per
observation.  It is solved in ``z = Phi^{-1}(u)`` coordinates, where
``Q = mu + sigma * h(z)`` and ``h`` has a closed-form derivative, so the
log density is ``log phi(z) - log sigma - log h'(z)``.

Fitting runs a compiled BFGS in the unconstrained coordinates
``(mu, log sigma, g, log(k + 1/2))``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from ..exceptions import DomainError, NonMonotoneQuantile, NotPositiveDefinite, OptimFailure
from ..specfun import std_normal_quantile
from .base import N_RESTARTS, Model, as_data, check_pd, fd_steps

DEFAULT_C = 0.8
PENALTY = 1e12
_HALF_LOG_2PI = 0.9189385332046727

# lower/upper box for (mu, sigma, g, k); sigma > 0 and k > -1/2 are open
LOWER = np.array([-20.0, 0.0, -5.0, -0.5])
UPPER = np.array([20.0, 20.0, 5.0, 5.0])


@njit(cache=True)
def _h(z, g, k, c):
    return z * (1.0 + c * math.tanh(0.5 * g * z)) * (1.0 + z * z) ** k


@njit(cache=True)
def _hprime(z, g, k, c):
    T = math.tanh(0.5 * g * z)
    A = 1.0 + c * T
    Ap = c * 0.5 * g * (1.0 - T * T)
    s = 1.0 + z * z
    return s ** k * (A + z * Ap + 2.0 * k * A * z * z / s)


@njit(cache=True)
def _solve_z_bracketed(w, g, k, c):
    lo = -1.0
    while _h(lo, g, k, c) > w:
        lo *= 2.0
        if lo < -1e12:
            return -np.inf
    hi = 1.0
    while _h(hi, g, k, c) < w:
        hi *= 2.0
        if hi > 1e12:
            return np.inf
    z = 0.5 * (lo + hi)
    for _ in range(200):
        f = _h(z, g, k, c) - w
        if f == 0.0:
            return z
        if f > 0.0:
            hi = z
        else:
            lo = z
        d = _hprime(z, g, k, c)
        zn = z - f / d if d > 0.0 else 0.5 * (lo + hi)
        if not (lo < zn < hi):
            zn = 0.5 * (lo + hi)
        if abs(zn - z) <= 1e-15 * (1.0 + abs(z)):
            return zn
        z = zn
    return z


@njit(cache=True)
def _solve_z(w, g, k, c, z0):
    # Newton from a warm start; the bracketed solver is the safety net
    z = z0
    for _ in range(12):
        f = _h(z, g, k, c) - w
        d = _hprime(z, g, k, c)
        if not (d > 0.0) or not math.isfinite(f):
            break
        step = f / d
        z -= step
        if abs(step) <= 1e-14 * (1.0 + abs(z)):
            return z
    return _solve_z_bracketed(w, g, k, c)


@njit(cache=True)
def _solve_z_all(y, mu, sig, g, k, c):
    out = np.empty(y.size)
    for i in range(y.size):
        out[i] = _solve_z_bracketed((y[i] - mu) / sig, g, k, c)
    return out


@njit(cache=True)
def _monotone_on(zgrid, mu, sig, g, k, c):
    prev = -np.inf
    for i in range(zgrid.size):
        q = mu + sig * _h(zgrid[i], g, k, c)
        if not q > prev:
            return False
        prev = q
    return True


def _monotone_grid() -> np.ndarray:
    u = np.concatenate(([1e-6], np.arange(1, 4097) / 4097.0, [1.0 - 1e-6]))
    return std_normal_quantile(np.sort(u))


_ZGRID = _monotone_grid()


@njit(cache=True)
def _in_box(theta):
    return (LOWER[0] <= theta[0] <= UPPER[0] and 0.0 < theta[1] <= UPPER[1]
            and LOWER[2] <= theta[2] <= UPPER[2] and -0.5 < theta[3] <= UPPER[3])


@njit(cache=True)
def _nll_grad(theta, y, c, zc):
    """Negative log-likelihood and its gradient; ``zc`` holds warm starts."""
    mu, sig, g, k = theta[0], theta[1], theta[2], theta[3]
    grad = np.zeros(4)
    if not _in_box(theta):
        return PENALTY, grad
    if k < 0.0 and not _monotone_on(_ZGRID, 0.0, 1.0, g, k, c):
        # outside the family: h' vanishes somewhere and the density spikes there
        return PENALTY, grad
    tot = 0.0
    for i in range(y.size):
        w = (y[i] - mu) / sig
        z = _solve_z(w, g, k, c, zc[i])
        if not math.isfinite(z):
            return PENALTY, np.zeros(4)
        zc[i] = z
        T = math.tanh(0.5 * g * z)
        A = 1.0 + c * T
        Tp = 0.5 * g * (1.0 - T * T)
        Ap = c * Tp
        App = -c * g * T * Tp
        s = 1.0 + z * z
        L = math.log(s)
        P = s ** k
        D = A + z * Ap + 2.0 * k * A * z * z / s
        if not (D > 0.0):
            return PENALTY, np.zeros(4)
        hp = P * D
        tot += -0.5 * z * z - _HALF_LOG_2PI - math.log(sig) - k * L - math.log(D)
        Dp = 2.0 * Ap + z * App + 2.0 * k * (2.0 * z * A / (s * s) + z * z * Ap / s)
        dlhp_dz = 2.0 * k * z / s + Dp / D
        Tg = 0.5 * z * (1.0 - T * T)
        Ag = c * Tg
        Apg = c * (0.5 * (1.0 - T * T) - g * T * Tg)
        Dg = Ag + z * Apg + 2.0 * k * z * z * Ag / s
        dlhp_dg = Dg / D
        dlhp_dk = L + 2.0 * z * z * A / s / D
        z_mu = (-1.0 / sig) / hp
        z_sig = (-w / sig) / hp
        z_g = (-z * P * Ag) / hp
        z_k = (-z * A * P * L) / hp
        fac = -z - dlhp_dz
        grad[0] += fac * z_mu
        grad[1] += fac * z_sig - 1.0 / sig
        grad[2] += fac * z_g - dlhp_dg
        grad[3] += fac * z_k - dlhp_dk
    if not math.isfinite(tot):
        return PENALTY, np.zeros(4)
    return -tot, -grad


@njit(cache=True)
def _to_theta(phi):
    return np.array([phi[0], math.exp(phi[1]), phi[2], math.exp(phi[3]) - 0.5])


@njit(cache=True)
def _objective(phi, y, c, zc):
    if abs(phi[1]) > 700.0 or abs(phi[3]) > 700.0:
        return PENALTY, np.zeros(4)
    th = _to_theta(phi)
    f, gt = _nll_grad(th, y, c, zc)
    gp = gt.copy()
    gp[1] *= th[1]
    gp[3] *= th[3] + 0.5
    return f, gp


@njit(cache=True)
def _bfgs(phi0, y, c, maxiter, gtol, accept_tol):
    """Minimize the negative log-likelihood; returns (phi, f, converged).

    Iterates until the gradient is below ``gtol`` (relative) and reports
    convergence against the looser ``accept_tol``.
    """
    zc = np.zeros(y.size)
    x = phi0.copy()
    f, g = _objective(x, y, c, zc)
    if f >= PENALTY:
        return x, f, False
    Hinv = np.eye(4)
    for it in range(maxiter):
        th = _to_theta(x)
        jac = np.array([1.0, th[1], 1.0, th[3] + 0.5])
        if np.max(np.abs(g / jac)) < gtol * (1.0 + abs(f)):
            return x, f, True
        d = -Hinv @ g
        slope = g @ d
        if not slope < 0.0:
            Hinv = np.eye(4)
            d = -g
            slope = g @ d
        dn = math.sqrt(d @ d)
        if dn > 2.0:
            d *= 2.0 / dn
            slope *= 2.0 / dn
        t = 1.0
        ok = False
        for _ in range(50):
            xn = x + t * d
            fn, gn = _objective(xn, y, c, zc)
            if fn <= f + 1e-4 * t * slope:
                ok = True
                break
            t *= 0.5
        if not ok:
            break
        s = xn - x
        yv = gn - g
        sy = s @ yv
        if sy > 1e-12 * math.sqrt((s @ s) * (yv @ yv)):
            if it == 0:
                Hinv = np.eye(4) * (sy / (yv @ yv))
            rho = 1.0 / sy
            V = np.eye(4) - rho * np.outer(s, yv)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        fprev = f
        x, f, g = xn, fn, gn
        if abs(fprev - f) <= 1e-16 * (1.0 + abs(f)) and math.sqrt(s @ s) < 1e-14:
            break
    th = _to_theta(x)
    jac = np.array([1.0, th[1], 1.0, th[3] + 0.5])
    return x, f, np.max(np.abs(g / jac)) < accept_tol * (1.0 + abs(f))


@njit(cache=True)
def _nll(theta, y, c, zc):
    return _nll_grad(theta, y, c, zc)[0]


@njit(cache=True)
def _fd_gradient_ok(theta, y, c, f0):
    zc = np.zeros(y.size)
    for j in range(4):
        h = 1e-6 * (1.0 + abs(theta[j]))
        tp = theta.copy()
        tm = theta.copy()
        tp[j] += h
        tm[j] -= h
        fp = _nll(tp, y, c, zc)
        fm = _nll(tm, y, c, zc)
        if fp >= PENALTY or fm >= PENALTY:
            return False
        if abs(fp - fm) / (2.0 * h) >= 1e-5 * (1.0 + abs(f0)):
            return False
    return True


@njit(cache=True)
def _fd_hessian_nll(theta, y, c):
    zc = np.zeros(y.size)
    H = np.empty((4, 4))
    h = 1e-4 * (1.0 + np.abs(theta))
    f0 = _nll(theta, y, c, zc)
    bad = f0 >= PENALTY
    for i in range(4):
        ei = np.zeros(4)
        ei[i] = h[i]
        fp = _nll(theta + ei, y, c, zc)
        fm = _nll(theta - ei, y, c, zc)
        bad = bad or fp >= PENALTY or fm >= PENALTY
        H[i, i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i])
        for j in range(i):
            ej = np.zeros(4)
            ej[j] = h[j]
            fpp = _nll(theta + ei + ej, y, c, zc)
            fpm = _nll(theta + ei - ej, y, c, zc)
            fmp = _nll(theta - ei + ej, y, c, zc)
            fmm = _nll(theta - ei - ej, y, c, zc)
            bad = bad or max(fpp, fpm, fmp, fmm) >= PENALTY
            H[i, j] = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j])
            H[j, i] = H[i, j]
    return H, bad




def gk_quantile(u, theta, c: float = DEFAULT_C):
    """Quantile function ``mu + sigma z (1 + c tanh(g z / 2)) (1 + z^2)^k`` at ``z = Phi^{-1}(u)``.

    ``(1 - exp(-g z)) / (1 + exp(-g z))`` is written as ``tanh(g z / 2)``.
    """
    mu, sig, g, k = np.asarray(theta, dtype=float)
    z = np.asarray(std_normal_quantile(u), dtype=float)
    q = mu + sig * z * (1.0 + c * np.tanh(0.5 * g * z)) * (1.0 + z * z) ** k
    return float(q) if np.ndim(u) == 0 else q


def check_gk_monotone(theta, c: float = DEFAULT_C) -> bool:
    """True iff the quantile function increases strictly on a 4098-point u grid."""
    mu, sig, g, k = (float(v) for v in theta)
    if not sig > 0:
        return False
    return bool(_monotone_on(_ZGRID, mu, sig, g, k, float(c)))


def gk_cdf(y, theta, c: float = DEFAULT_C):
    """Distribution function by root-finding ``Q(u) = y``."""
    mu, sig, g, k = (float(v) for v in theta)
    ya = np.atleast_1d(np.asarray(y, dtype=float))
    z = _solve_z_all(ya, mu, sig, g, k, float(c))
    out = 0.5 * np.vectorize(math.erfc)(-z / math.sqrt(2.0))
    return float(out[0]) if np.ndim(y) == 0 else out


class GandK(Model):
    """g-and-k distribution with parameters (mu, sigma, g, k) and fixed ``c``."""

    name = "gandk"
    param_names = ("mu", "sigma", "g", "k")
    bounds = (
        (-20.0, 20.0, True, True),
        (0.0, 20.0, False, True),
        (-5.0, 5.0, True, True),
        (-0.5, 5.0, False, True),
    )

    def __init__(self, c: float = DEFAULT_C):
        self.c = float(c)

    def spec(self):
        return {"family": self.name, "c": self.c}

    def sample(self, theta, n, rng):
        theta = self.check_theta(theta)
        if not check_gk_monotone(theta, self.c):
            raise NonMonotoneQuantile(f"g-and-k quantile not increasing at {theta.tolist()}")
        u = rng.random(int(n))
        u[u == 0.0] = 2.0 ** -54
        return gk_quantile(u, theta, self.c)

    def log_likelihood(self, theta, data):
        theta = self.check_theta(theta)
        y = as_data(data)
        if not check_gk_monotone(theta, self.c):
            raise NonMonotoneQuantile(f"g-and-k quantile not increasing at {theta.tolist()}")
        mu, sig, g, k = theta
        z = _solve_z_all(y, mu, sig, g, k, self.c)
        f, _ = _nll_grad(theta, y, self.c, z)
        if f >= PENALTY:
            raise NonMonotoneQuantile("g-and-k density not positive at an observation")
        return -float(f)

    def log_likelihood_grad(self, theta, data) -> np.ndarray:
        theta = self.check_theta(theta)
        y = as_data(data)
        z = _solve_z_all(y, *theta, self.c)
        return -_nll_grad(theta, y, self.c, z)[1]

    def initial_guess(self, data):
        q1, med, q3 = np.quantile(data, [0.25, 0.5, 0.75])
        scale = (q3 - q1) / 1.349
        if not scale > 0:
            scale = float(np.std(data))
        return np.array([med, scale, 0.0, 0.1])

    def mle(self, data, init=None):
        """Local maximizer from a fixed heuristic start plus deterministic jittered restarts."""
        y = as_data(data)
        if np.ptp(y) == 0.0:
            raise OptimFailure("g-and-k: degenerate block, all observations equal")
        start = self.initial_guess(y) if init is None else self.check_theta(init)
        if not self.in_bounds(start):
            start = np.clip(start, LOWER + [0, 1e-6, 0, 1e-6], UPPER)
        phi0 = np.array([start[0], math.log(start[1]), start[2], math.log(start[3] + 0.5)])
        best = None
        for attempt in range(N_RESTARTS + 1):
            if attempt:
                jitter = np.random.default_rng(attempt).standard_normal(4)
                phi = phi0 + np.array([0.2 * start[1], 0.3, 0.5, 0.5]) * jitter
            else:
                phi = phi0
            x, f, conv = _bfgs(phi, y, self.c, 500, 1e-8, 1e-5)
            if not conv or f >= PENALTY:
                continue
            theta = _to_theta(x)
            if not self.in_bounds(theta) or not _fd_gradient_ok(theta, y, self.c, f):
                continue
            best = theta
            break
        if best is None:
            raise OptimFailure(f"g-and-k: no stationary point after {N_RESTARTS} restarts")
        if not check_gk_monotone(best, self.c):
            raise NonMonotoneQuantile(f"g-and-k estimate {best.tolist()} is not a valid quantile function")
        return best

    def observed_information(self, theta_hat, data):
        theta_hat = self.check_theta(theta_hat)
        y = as_data(data)
        steps = fd_steps(theta_hat)
        if not (self.in_bounds(theta_hat - steps) and self.in_bounds(theta_hat + steps)):
            raise NotPositiveDefinite("g-and-k: estimate too close to the boundary")
        H, bad = _fd_hessian_nll(theta_hat, y, self.c)
        if bad:
            raise NotPositiveDefinite("g-and-k: likelihood undefined on the difference stencil")
        return check_pd(0.5 * (H + H.T))

