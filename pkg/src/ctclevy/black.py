"""Black-Scholes and Black-76 prices and implied volatility inversion."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

from .errors import NoSolutionError, ValidationError

SIGMA_LOW, SIGMA_HIGH = 1e-4, 5.0


def black_forward(forward, strike, tau, sigma, call: bool = True):
    """Undiscounted Black-76 price E[(F_T - K)^+] (or put) with lognormal F."""
    forward = np.asarray(forward, float)
    strike = np.asarray(strike, float)
    sd = np.asarray(sigma, float) * np.sqrt(tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.log(forward / strike) / sd + 0.5 * sd
    d2 = d1 - sd
    if call:
        return forward * ndtr(d1) - strike * ndtr(d2)
    return strike * ndtr(-d2) - forward * ndtr(-d1)


def bs_price(spot, strike, tau, rate, sigma, call: bool = True):
    disc = np.exp(-rate * tau)
    return disc * black_forward(spot / disc, strike, tau, sigma, call)


def _vega_forward(forward, strike, tau, sigma):
    sd = sigma * math.sqrt(tau)
    d1 = math.log(forward / strike) / sd + 0.5 * sd
    return forward * math.sqrt(tau) * math.exp(-0.5 * d1 * d1) / math.sqrt(2 * math.pi)


def implied_vol_forward(price, forward, strike, tau, call: bool = True, tol: float = 1e-10,
                        max_iter: int = 200) -> float:
    """Invert the undiscounted Black-76 price; Newton steps safeguarded by bisection.

    ``tol`` is an absolute price tolerance in units of the forward.
    """
    if not (forward > 0 and strike > 0 and tau > 0):
        raise ValidationError("forward, strike and tau must be positive")
    intrinsic = max(forward - strike, 0.0) if call else max(strike - forward, 0.0)
    upper = forward if call else strike
    if not (intrinsic < price < upper):
        raise NoSolutionError(
            f"price {price:.6g} outside the no-arbitrage interval ({intrinsic:.6g}, {upper:.6g})")
    lo, hi = SIGMA_LOW, SIGMA_HIGH
    f_lo = float(black_forward(forward, strike, tau, lo, call)) - price
    f_hi = float(black_forward(forward, strike, tau, hi, call)) - price
    if f_lo > 0 or f_hi < 0:
        raise NoSolutionError(f"implied volatility outside [{lo}, {hi}]")
    abs_tol = tol * forward
    sigma = 0.2 if lo < 0.2 < hi else 0.5 * (lo + hi)
    for _ in range(max_iter):
        diff = float(black_forward(forward, strike, tau, sigma, call)) - price
        if abs(diff) < abs_tol:
            return sigma
        if diff > 0:
            hi = sigma
        else:
            lo = sigma
        vega = _vega_forward(forward, strike, tau, sigma)
        step = sigma - diff / vega if vega > 0 else None
        sigma = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
        if hi - lo < 1e-15:
            return sigma
    raise NoSolutionError("implied volatility iteration did not converge")


def implied_vol_bs(price, spot, strike, tau, rate, call: bool = True, tol: float = 1e-10) -> float:
    """Black-Scholes implied volatility with |BS(sigma) - price| < tol * spot."""
    disc = math.exp(-rate * tau)
    forward = spot / disc
    # tolerance on the undiscounted price scaled so that the discounted error is tol * spot
    return implied_vol_forward(price / disc, forward, strike, tau, call, tol=tol * disc)
