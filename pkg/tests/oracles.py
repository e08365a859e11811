"""Closed-form reference routes, written independently of the package's Riccati solver."""

import numpy as np
from scipy import integrate, stats


def cir_riccati(a, kappa, sigma2, kappa_theta, t, b0=0.0):
    """Closed form (B, C) of E[exp(a * int x + b0 * x_t)] = exp(B x_0 + C) for a CIR rate.

    Solves B' = a - kappa B + sigma2/2 B^2, C' = kappa_theta B, B(0) = b0.
    """
    a = np.asarray(a, dtype=complex)
    d = np.sqrt(kappa * kappa - 2 * sigma2 * a + 0j)
    rp, rm = (kappa + d) / sigma2, (kappa - d) / sigma2
    g = (rm - b0) / (rp - b0)
    e = np.exp(-d * t)
    B = (rm - rp * g * e) / (1 - g * e)
    C = kappa_theta * (rm * t - 2 / sigma2 * np.log((1 - g * e) / (1 - g)))
    return B, C


def heston_chf(m, t, kappa, theta, sigma, rho, u0):
    """E[exp(i m X_t)] for the Heston log return X with E[exp(X_t)] = 1."""
    m = np.asarray(m, dtype=complex)
    psi = -0.5 * (m * m + 1j * m)
    k = kappa - 1j * rho * sigma * m
    B, C = cir_riccati(psi, k, sigma * sigma, kappa * theta, t)
    return np.exp(B * u0 + C)


def integrated_cir_chf(w, t, kappa, theta, sigma, v0):
    """E[exp(i w int_0^t v)] for a CIR rate v."""
    B, C = cir_riccati(1j * np.asarray(w, dtype=complex), kappa, sigma * sigma, kappa * theta, t)
    return np.exp(B * v0 + C)


def composite_heston_chf(m, t, p, nodes=400, terms=512, width=12.0):
    """E[exp(i m X_t)] for Composite Heston: Heston chf in the V clock averaged over V_t.

    V_t density by cosine series of its closed-form transform on [0, c],
    integrated with Gauss-Legendre nodes.
    """
    kv, tv, sv, v0 = p["kappa_v"], p["theta_v"], p["sigma_v"], p["v0"]
    e = np.exp(-kv * t)
    mean = tv * t + (v0 - tv) * (1 - e) / kv
    h = 1e-4
    lp = lambda w: np.log(integrated_cir_chf(w, t, kv, tv, sv, v0))
    var = -((lp(h) - 2 * lp(0.0) + lp(-h)) / h ** 2).real
    c = mean + width * np.sqrt(var)
    x, w = np.polynomial.legendre.leggauss(nodes)
    v, wt = (x + 1) * c / 2, w * c / 2
    l = np.arange(terms)
    coef = integrated_cir_chf(l * np.pi / c, t, kv, tv, sv, v0).real * 2 / c
    coef[0] *= 0.5
    dens = np.maximum(np.cos(np.outer(v, l * np.pi / c)) @ coef, 0.0)
    q = dens * wt
    q /= q.sum()
    m = np.atleast_1d(np.asarray(m, dtype=complex))
    phi = heston_chf(m[:, None], v[None, :], p["kappa_u"], p["theta_u"], p["sigma_u"], p["rho_u"], p["u0"])
    return phi @ q


def call_by_fourier(chf, forward, strike, u_max=200.0, n=40_001):
    """Call on forward * exp(X) by the Gil-Pelaez formulas; ``chf`` is vectorised."""
    k = np.log(strike / forward)
    u = np.linspace(1e-8, u_max, n)
    p1 = 0.5 + integrate.simpson((np.exp(-1j * u * k) * chf(u - 1j) / (1j * u)).real, x=u) / np.pi
    p2 = 0.5 + integrate.simpson((np.exp(-1j * u * k) * chf(u) / (1j * u)).real, x=u) / np.pi
    return forward * p1 - strike * p2


def ncx2_cir(kappa, theta, sigma, x0, t):
    """Frozen scipy law of x_t for a CIR process, scaled noncentral chi-square."""
    scale = sigma * sigma * (1 - np.exp(-kappa * t)) / (4 * kappa)
    dof = 4 * kappa * theta / (sigma * sigma)
    nonc = x0 * np.exp(-kappa * t) / scale
    return stats.ncx2(dof, nonc, scale=scale)
