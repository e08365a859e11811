"""Square-root (CIR) process analytics and exact samplers.

dx = kappa (theta - x) dt + sigma sqrt(x) dW. Moments of x_t and of the
integral of x over [0, t] are closed form; samplers draw x_t from its
noncentral chi-square law and the integral conditional on both endpoints
by the gamma expansion of Glasserman and Kim.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy.special import gammaln, ive

from .errors import ValidationError

log = logging.getLogger(__name__)

_B2_SERIES = (1 / 3, -1 / 3, 11 / 60, -13 / 180, 19 / 840, -1 / 168, 247 / 181440, -251 / 907200)
_C2_SERIES = (1 / 6, -2 / 15, 11 / 180, -13 / 630, 19 / 3360, -1 / 756, 247 / 907200,
              -251 / 4989600)


def _poly(coefs, x, start):
    return sum(cf * x ** (start + k) for k, cf in enumerate(coefs))


def mean(kappa, theta, x0, t):
    return theta + (x0 - theta) * np.exp(-kappa * t)


def variance(kappa, theta, sigma, x0, t):
    if kappa == 0:
        return sigma ** 2 * x0 * t
    e = np.exp(-kappa * t)
    one_minus = -np.expm1(-kappa * t)
    return sigma ** 2 * (x0 * e * one_minus / kappa + theta * one_minus ** 2 / (2 * kappa))


def integrated_mean(kappa, theta, x0, t):
    """E[int_0^t x_s ds]."""
    if kappa == 0:
        return x0 * t
    return theta * t + (x0 - theta) * (-np.expm1(-kappa * t)) / kappa


def integrated_variance(kappa, theta, sigma, x0, t):
    """Var[int_0^t x_s ds], from the second-order expansion of the Riccati solution."""
    x = kappa * t
    if abs(x) < 0.2:
        slope = sigma ** 2 * t ** 3 * _poly(_B2_SERIES, x, 0)
        level = theta * sigma ** 2 * kappa * t ** 4 / 2 * _poly(_C2_SERIES, x, 0)
    else:
        e = math.exp(-x)
        slope = sigma ** 2 * (1 - 2 * x * e - e * e) / kappa ** 3
        level = theta * sigma ** 2 / (2 * kappa ** 3) * (2 * x - 5 + 4 * e + 4 * x * e + e * e)
    return x0 * slope + level


def support_bound(kappa, theta, sigma, x0, t, width: float = 12.0) -> float:
    """Truncation point E + width * sd for the integral of x over [0, t]."""
    m = integrated_mean(kappa, theta, x0, t)
    sd = math.sqrt(max(integrated_variance(kappa, theta, sigma, x0, t), 0.0))
    return float(m + width * sd)


# ---------------------------------------------------------------------------
# exact samplers


def _check(kappa, theta, sigma):
    if kappa * theta < 0 or sigma < 0 or theta < 0:
        raise ValidationError("CIR sampler needs kappa*theta >= 0, theta >= 0 and sigma >= 0")


def sample_terminal(kappa, theta, sigma, x0, t, rng: np.random.Generator, size=None):
    """Exact draw of x_t given x_0 = x0 (noncentral chi-square, Poisson mixture form).

    ``x0`` and ``t`` may be arrays; the output broadcasts over them and ``size``.
    """
    _check(kappa, theta, sigma)
    x0 = np.asarray(x0, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(x0.shape, t.shape, () if size is None else
                                (size,) if np.isscalar(size) else tuple(size))
    if sigma == 0:
        return np.broadcast_to(mean(kappa, theta, x0, t), shape).astype(float)
    if kappa == 0:
        scale = sigma ** 2 * t / 4
        nonc = 4 * x0 / (sigma ** 2 * t)
    else:
        one_minus = -np.expm1(-kappa * t)
        scale = sigma ** 2 * one_minus / (4 * kappa)
        nonc = x0 * np.exp(-kappa * t) / scale
    dof = 4 * kappa * theta / sigma ** 2
    poisson = rng.poisson(np.broadcast_to(nonc / 2, shape))
    # chi-square with dof + 2N degrees of freedom = 2 * Gamma((dof + 2N) / 2)
    return 2 * np.broadcast_to(scale, shape) * rng.standard_gamma(dof / 2 + poisson)


def _gamma_expansion_terms(kappa, sigma, T, n_terms):
    n = np.arange(1, n_terms + 1)
    kt2 = (kappa * T) ** 2
    npi2 = 4 * np.pi ** 2 * n ** 2
    gamma_n = (kt2 + npi2) / (2 * sigma ** 2 * T ** 2)
    lambda_n = 4 * npi2 / (sigma ** 2 * T * (kt2 + npi2))
    return gamma_n, lambda_n


def _x1_moments(kappa, sigma, T):
    """Mean and variance of X1 per unit of (x0 + xT)."""
    h = kappa * T / 2
    if h < 0.05:
        # series of the coth/csch expressions; the closed forms cancel badly here
        h2 = h * h
        return (T * (1 / 3 - 2 * h2 / 45 + 2 * h2 * h2 / 315),
                sigma ** 2 * T ** 3 * (1 / 45 - 2 * h2 / 315 + 2 * h2 * h2 / 1575))
    coth = 1 / math.tanh(h)
    csch2 = 1 / math.sinh(h) ** 2
    m = T * (coth / h - csch2) / 2
    v = sigma ** 2 * T ** 3 * (coth / h ** 3 + csch2 / h ** 2 - 2 * coth * csch2 / h) / 8
    return m, v


def _gamma_sum_moments(kappa, sigma, T):
    """Mean and variance of sum_n Gamma_n(1, 1)/gamma_n (per unit shape)."""
    h = kappa * T / 2
    if h < 0.05:
        h2 = h * h
        return (sigma ** 2 * T ** 2 * (1 / 12 - h2 / 180 + h2 * h2 / 1890),
                sigma ** 4 * T ** 4 * (1 / 360 - h2 / 1890 + h2 * h2 / 12600))
    coth = 1 / math.tanh(h)
    csch2 = 1 / math.sinh(h) ** 2
    m = sigma ** 2 * T ** 2 * (h * coth - 1) / (4 * h * h)
    v = sigma ** 4 * T ** 4 * (h * coth + h * h * csch2 - 2) / (16 * h ** 4)
    return m, v


def _remainder(mean_total, var_total, mean_head, var_head):
    """Gamma (shape, scale) matching the tail beyond the truncated series."""
    m = max(mean_total - mean_head, 1e-300)
    v = max(var_total - var_head, 1e-300)
    scale = v / m
    return m / scale, scale


def sample_bessel(nu, z, rng: np.random.Generator):
    """Draw from the Bessel(nu, z) law P(n) = (z/2)^(2n+nu) / (I_nu(z) n! Gamma(n+nu+1)).

    Inverse transform on a log-space pmf table per draw; works for large z
    because I_nu is evaluated in exponentially scaled form.
    """
    z = np.asarray(z, dtype=float)
    out = np.zeros(z.shape, dtype=np.int64)
    live = z > 0
    if not np.any(live):
        return out
    zl = z[live]
    log_p0 = nu * np.log(zl / 2) - gammaln(nu + 1) - zl - np.log(ive(nu, zl))
    if not np.all(np.isfinite(log_p0)):
        raise OverflowError("Bessel normalisation overflowed")
    top = int(np.ceil(np.max(zl) / 2 + 12 * np.sqrt(np.max(zl) + 1) + 30))
    k = np.arange(1, top + 1)
    steps = 2 * np.log(zl[:, None] / 2) - np.log(k) - np.log(k + nu)
    log_p = np.concatenate([log_p0[:, None], log_p0[:, None] + np.cumsum(steps, axis=1)], axis=1)
    cdf = np.cumsum(np.exp(log_p), axis=1)
    u = rng.random(len(zl)) * cdf[:, -1]
    out[live] = np.sum(cdf < u[:, None], axis=1)
    return out


def sample_integrated_conditional(kappa, theta, sigma, x0, xT, T, rng: np.random.Generator,
                                  n_terms: int = 10, block: int = 2048):
    """Draw int_0^T x ds given x_0 = x0 and x_T = xT by gamma expansion.

    The integral splits into X1 + X2 + sum_{j<=eta} Z_j: X1 is a
    Poisson-weighted gamma series driven by x0 + xT, X2 a gamma series with
    shape delta/2, and the Z_j gamma series with shape 2, with eta a Bessel
    draw. Each series keeps ``n_terms`` terms and a moment-matched gamma for
    the tail. ``xT`` is an array of endpoints (one per path); ``x0`` may be a
    scalar or an array of the same length.
    """
    _check(kappa, theta, sigma)
    xT = np.atleast_1d(np.asarray(xT, dtype=float))
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), xT.shape)
    if sigma == 0:
        det = integrated_mean(kappa, theta, x0, T)
        return np.asarray(det, dtype=float)
    if theta <= 0:
        raise ValidationError("gamma expansion needs theta > 0 (delta > 0)")
    delta = 4 * kappa * theta / sigma ** 2
    nu = delta / 2 - 1
    gamma_n, lambda_n = _gamma_expansion_terms(kappa, sigma, T, n_terms)
    m1, v1 = _x1_moments(kappa, sigma, T)
    x1_shape, x1_scale = _remainder(m1, v1, np.sum(lambda_n / gamma_n), np.sum(2 * lambda_n / gamma_n ** 2))
    mg, vg = _gamma_sum_moments(kappa, sigma, T)
    g_shape, g_scale = _remainder(mg, vg, np.sum(1 / gamma_n), np.sum(1 / gamma_n ** 2))
    if kappa * T < 1e-8:
        zfac = 4 / (sigma ** 2 * T)
    else:
        zfac = 2 * kappa / (sigma ** 2 * math.sinh(kappa * T / 2))

    out = np.empty(xT.shape)
    for start in range(0, len(xT), block):
        sl = slice(start, start + block)
        a, b = x0[sl], xT[sl]
        n = len(a)
        ends = a + b
        # X1: sum over terms of Gamma(N_n)/gamma_n, N_n ~ Poisson(ends * lambda_n)
        counts = rng.poisson(ends[:, None] * lambda_n[None, :])
        x1 = np.sum(rng.standard_gamma(counts) / gamma_n, axis=1)
        x1 += rng.standard_gamma(np.maximum(ends * x1_shape, 1e-300)) * x1_scale
        try:
            eta = sample_bessel(nu, zfac * np.sqrt(a * b), rng)
        except (OverflowError, FloatingPointError):
            log.warning("Bessel parameters overflowed; falling back to Euler bridge sampling")
            out[sl] = euler_bridge_integral(kappa, theta, sigma, a, b, T, rng)
            continue
        shape = delta / 2 + 2 * eta
        x2z = np.sum(rng.standard_gamma(shape[:, None] * np.ones(n_terms)) / gamma_n, axis=1)
        x2z += rng.standard_gamma(shape * g_shape) * g_scale
        out[sl] = x1 + x2z
    return out


def euler_bridge_integral(kappa, theta, sigma, x0, xT, T, rng: np.random.Generator,
                          step: float = 1e-5):
    """Approximate conditional integral from a guided Euler bridge.

    Fallback only: the drift is pulled towards xT linearly in remaining time,
    which is not the exact bridge law.
    """
    x0 = np.atleast_1d(np.asarray(x0, float))
    xT = np.broadcast_to(np.asarray(xT, float), x0.shape)
    n = max(int(math.ceil(T / step)), 1)
    dt = T / n
    x = x0.copy()
    acc = np.zeros_like(x)
    for i in range(n):
        remaining = T - i * dt
        drift = kappa * (theta - x) + (xT - x) / remaining
        x_new = x + drift * dt + sigma * np.sqrt(np.maximum(x, 0) * dt) * rng.standard_normal(x.shape)
        x_new = np.maximum(x_new, 0)
        acc += 0.5 * (x + x_new) * dt
        x = x_new
    return acc


def euler_paths_integral(kappa, theta, sigma, x0, T, n_paths, rng: np.random.Generator,
                         step: float = 1e-5, chunk: int = 256):
    """Full-truncation Euler: returns (x_T, int_0^T x ds) for independent paths."""
    n = max(int(math.ceil(T / step)), 1)
    dt = T / n
    sq = math.sqrt(dt)
    x = np.full(n_paths, float(x0))
    acc = np.zeros(n_paths)
    done = 0
    while done < n:
        k = min(chunk, n - done)
        z = rng.standard_normal((k, n_paths))
        for row in z:
            xp = np.maximum(x, 0.0)
            acc += xp * dt
            x = x + kappa * (theta - xp) * dt + sigma * np.sqrt(xp) * sq * row
        done += k
    return np.maximum(x, 0.0), acc
