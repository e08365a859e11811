"""COS pricing of European options, including the composite time-change model.

The log price y = ln S_T is expanded in cosines on [a, b]. Prices reuse the
characteristic function of X across all strikes of a maturity: per strike the
work is a single dot product with the payoff coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .black import implied_vol_bs
from .chf import ChfRequest, chf_X
from .errors import TruncationError, ValidationError
from . import cir
from .levy import ModelSpec, psi_base
from .riccati import SolverConfig


@dataclass(frozen=True)
class CosConfig:
    N: int = 256
    M_terms: int = 256
    D: int = 200
    L: float = 10.0
    a: float | None = None        # bounds for the centred log return X_T, optional
    b: float | None = None
    c_v: float | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    cumulant_step_factor: int = 4     # coarser Riccati step for the cumulant probe
    residual_tol: float = 1e-7
    call_via_parity: bool = True      # calls from put coefficients plus the exact forward

    def __post_init__(self):
        for name in ("N", "M_terms"):
            n = getattr(self, name)
            if n < 2 or n & (n - 1):
                raise ValidationError(f"{name} must be a power of two, got {n}")
        if self.D < 64:
            raise ValidationError("D must be at least 64")
        if (self.a is None) != (self.b is None):
            raise ValidationError("give both truncation bounds or neither")
        if self.a is not None and not self.a < 0 < self.b:
            raise ValidationError("truncation bounds need a < 0 < b")


@dataclass(frozen=True)
class EuropeanOption:
    strike: float
    maturity: float
    side: str = "call"

    def __post_init__(self):
        if not (self.strike > 0 and self.maturity > 0):
            raise ValidationError("strike and maturity must be positive")
        if self.side not in ("call", "put"):
            raise ValidationError(f"side must be 'call' or 'put', got {self.side!r}")


@dataclass(frozen=True)
class MarketFrame:
    spot: float
    rate: float = 0.0

    def __post_init__(self):
        if not self.spot > 0:
            raise ValidationError("spot must be positive")

    def forward(self, tau: float) -> float:
        return self.spot * math.exp(self.rate * tau)


def chi_psi(k, c, d, a, b):
    """Cosine integrals of e^y and 1 over [c, d] on the expansion interval [a, b]."""
    k = np.asarray(k, dtype=float)
    w = k * np.pi / (b - a)
    ed, ec = math.exp(d), math.exp(c)
    cd, cc = np.cos(w * (d - a)), np.cos(w * (c - a))
    sd, sc = np.sin(w * (d - a)), np.sin(w * (c - a))
    chi = (cd * ed - cc * ec + w * (sd * ed - sc * ec)) / (1 + w * w)
    psi = np.empty_like(w)
    zero = k == 0
    psi[zero] = d - c
    nz = ~zero
    psi[nz] = (sd[nz] - sc[nz]) / w[nz]
    return chi, psi


def fk_coeffs(option: EuropeanOption, a: float, b: float, N: int) -> np.ndarray:
    """Payoff coefficients F_k on [a, b] in y = ln S_T."""
    logk = math.log(option.strike)
    k = np.arange(N)
    if option.side == "call":
        if logk >= b:
            raise TruncationError(f"call strike {option.strike:g} above e^b = {math.exp(b):g}")
        chi, psi = chi_psi(k, max(logk, a), b, a, b)
        return 2.0 / (b - a) * (chi - option.strike * psi)
    if logk <= a:
        raise TruncationError(f"put strike {option.strike:g} below e^a = {math.exp(a):g}")
    chi, psi = chi_psi(k, a, min(logk, b), a, b)
    return 2.0 / (b - a) * (option.strike * psi - chi)


def _cumulant_probe(spec: ModelSpec, maturities, cfg: CosConfig):
    """c1, c2, c4 of X_t from finite differences of log chf at 0.

    The probe frequency is scaled to a rough standard deviation so the
    difference quotients are well conditioned.
    """
    probe_cfg = SolverConfig(cfg.solver.step * cfg.cumulant_step_factor)
    rough = [abs(psi_base(spec, 1.0).real) * 2 * _rough_clock(spec, t) for t in maturities]
    hs = np.array([0.25 / math.sqrt(max(r, 1e-12)) for r in rough])
    req = ChfRequest(spec, list(maturities), np.stack([hs, 2 * hs], axis=1),
                     nodes=max(cfg.D // 2, 64), M_terms=cfg.M_terms, solver=probe_cfg, c_v=cfg.c_v,
                     residual_tol=1e-5)
    out = []
    for h, rough_var, (g1, g2) in zip(hs, rough, np.log(chf_X(req))):
        c1 = (8 * g1.imag - g2.imag) / (6 * h)
        c2 = -(32 * g1.real - 2 * g2.real) / (12 * h * h)
        c4 = (2 * g2.real - 8 * g1.real) / h ** 4
        if not c2 > 0:
            c2 = rough_var
        out.append((c1, c2, max(c4, 0.0)))
    return out


def _rough_clock(spec: ModelSpec, t: float) -> float:
    ul = spec.u_layer
    u_level = max(spec.u0, ul.theta)
    if spec.v_layer is None:
        return u_level * t
    vl = spec.v_layer
    return u_level * cir.integrated_mean(vl.kappa, vl.theta, spec.v0, t)


def truncation_range(spec: ModelSpec, maturities, cfg: CosConfig):
    """Interval [a, b] for X_t per maturity."""
    if cfg.a is not None:
        return [(cfg.a, cfg.b)] * len(maturities)
    ranges = []
    for c1, c2, c4 in _cumulant_probe(spec, maturities, cfg):
        half = cfg.L * math.sqrt(c2 + math.sqrt(c4))
        ranges.append((c1 - half, c1 + half))
    return ranges


def price_surface(spec: ModelSpec, frame: MarketFrame, options: Sequence[EuropeanOption],
                  cfg: CosConfig = CosConfig()) -> np.ndarray:
    """Prices aligned with ``options``; one chf evaluation per distinct maturity."""
    if spec.rho_v != 0:
        raise ValidationError("COS pricing requires rho_v = 0")
    options = list(options)
    if not options:
        return np.empty(0)
    mats = sorted({o.maturity for o in options})
    cfg.solver.check_maturities(mats)
    ranges = truncation_range(spec, mats, cfg)
    k = np.arange(cfg.N)
    freqs = np.array([k * np.pi / (hi - lo) for lo, hi in ranges])
    req = ChfRequest(spec, mats, freqs, c_v=cfg.c_v, nodes=cfg.D, M_terms=cfg.M_terms,
                     solver=cfg.solver, residual_tol=cfg.residual_tol)
    phi = chf_X(req)
    prices = np.empty(len(options))
    for i, t in enumerate(mats):
        lo, hi = ranges[i]
        centre = math.log(frame.spot) + frame.rate * t
        a, b = centre + lo, centre + hi
        # A_k = exp(i w_k (ln S0 + r t - a)) with the centring folded in
        weighted = np.real(phi[i] * np.exp(-1j * freqs[i] * lo))
        weighted[0] *= 0.5
        disc = math.exp(-frame.rate * t)
        for j, opt in enumerate(options):
            if opt.maturity != t:
                continue
            if opt.side == "call" and cfg.call_via_parity:
                # the e^y call payoff amplifies the right-tail truncation error; the put does not
                parity = frame.spot - opt.strike * disc
                if math.log(opt.strike) <= a:
                    prices[j] = parity
                    continue
                put = EuropeanOption(opt.strike, t, "put")
                prices[j] = disc * weighted @ fk_coeffs(put, a, b, cfg.N) + parity
            else:
                prices[j] = disc * weighted @ fk_coeffs(opt, a, b, cfg.N)
    return prices


def price_european(spec: ModelSpec, frame: MarketFrame, option: EuropeanOption,
                   cfg: CosConfig = CosConfig()) -> float:
    return float(price_surface(spec, frame, [option], cfg)[0])


def implied_vol(price: float, frame: MarketFrame, option: EuropeanOption) -> float:
    return implied_vol_bs(price, frame.spot, option.strike, option.maturity, frame.rate,
                          option.side == "call")
