"""Characteristic function of the log return X_t = L(U(V_t)).

Under the leverage-neutral measure the transform of X is the expectation of
the U-layer transform evaluated at the random clock V_t. The expectation is
taken against a cosine-series density of V_t on [0, c_v] with Gauss-Legendre
quadrature; an ordinary (degenerate V) model bypasses it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from . import cir
from .errors import IntegrationError, TruncationError, ValidationError
from .levy import ModelSpec, psi_base
from .riccati import RiccatiSolution, SolverConfig, solve_U, solve_V

log = logging.getLogger(__name__)

MASS_TOLERANCE = 1e-3
RESIDUAL_TOLERANCE = 1e-7


@lru_cache(maxsize=32)
def gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gl_nodes(upper: float, n: int):
    x, w = gauss_legendre(n)
    return 0.5 * upper * (x + 1), 0.5 * upper * w


@dataclass(frozen=True)
class CosineDensity:
    """Cosine-series density on [0, upper], negative ripple clipped to zero."""

    upper: float
    coef: np.ndarray           # A_l with the half weight already applied to l = 0
    tail_mass: float           # model probability beyond ``upper`` (gamma approximation)

    def raw(self, v):
        v = np.asarray(v, dtype=float)
        l = np.arange(len(self.coef))
        return np.cos(np.multiply.outer(v, l) * (np.pi / self.upper)) @ self.coef

    def __call__(self, v):
        return np.maximum(self.raw(v), 0.0)

    def clipped_mass(self, n: int = 400) -> float:
        x, w = gl_nodes(self.upper, n)
        return float(-np.sum(w * np.minimum(self.raw(x), 0.0)))

    def mass(self, n: int = 400) -> float:
        x, w = gl_nodes(self.upper, n)
        return float(np.sum(w * self(x)))

    def mean(self, n: int = 400) -> float:
        x, w = gl_nodes(self.upper, n)
        f = self(x)
        return float(np.sum(w * f * x) / np.sum(w * f))


def _v_moments(spec: ModelSpec, t: float, v_init: float):
    vl = spec.v_layer
    m = cir.integrated_mean(vl.kappa, vl.theta, v_init, t)
    var = max(cir.integrated_variance(vl.kappa, vl.theta, vl.sigma, v_init, t), 0.0)
    return float(m), float(var)


def default_c_v(spec: ModelSpec, t: float, v_init: float | None = None, width: float = 12.0) -> float:
    v_init = spec.v0 if v_init is None else v_init
    m, var = _v_moments(spec, t, v_init)
    return m + width * np.sqrt(var)


def _tail_mass(mean: float, var: float, upper: float) -> float:
    if var <= 0:
        return 0.0 if upper > mean else 1.0
    shape = mean * mean / var
    return float(stats.gamma.sf(upper, shape, scale=var / mean))


def density_coefficients(phi_values: np.ndarray, upper: float) -> np.ndarray:
    coef = 2.0 / upper * np.real(phi_values)
    coef[..., 0] *= 0.5
    return coef


def density_V(spec: ModelSpec, t: float, c_v: float | None = None, M_terms: int = 256,
              cfg: SolverConfig = SolverConfig(), v_init: float | None = None) -> CosineDensity:
    """Cosine-series density of V_t on [0, c_v] from the Riccati transform of V."""
    return density_V_many(spec, [t], None if c_v is None else [c_v], M_terms, cfg, v_init)[0]


def density_V_many(spec: ModelSpec, times, c_vs=None, M_terms: int = 256,
                   cfg: SolverConfig = SolverConfig(), v_init: float | None = None) -> list[CosineDensity]:
    """Densities of V_t for several t from one Riccati sweep."""
    if spec.v_layer is None:
        raise ValidationError("density_V needs a non-degenerate v-layer")
    v_init = spec.v0 if v_init is None else v_init
    times = [float(t) for t in times]
    if c_vs is None:
        c_vs = [default_c_v(spec, t, v_init) for t in times]
    tails = []
    for t, c_v in zip(times, c_vs):
        mean, var = _v_moments(spec, t, v_init)
        tail = _tail_mass(mean, var, c_v)
        if tail > MASS_TOLERANCE:
            raise TruncationError(
                f"c_v = {c_v:g} leaves probability {tail:.2e} of V_{t:g} outside [0, c_v]; increase c_v")
        tails.append(tail)
    l = np.arange(M_terms)
    omega = np.array([l * np.pi / c for c in c_vs])
    sol = solve_V(spec, omega, cfg, horizon=max(times), v_init=v_init, keep_times=times)
    out = []
    for i, (t, c_v) in enumerate(zip(times, c_vs)):
        phi = sol.chf(t)[i]
        out.append(CosineDensity(c_v, density_coefficients(phi, c_v), tails[i]))
    return out


def _quadrature_weights(dens: CosineDensity, nodes: int):
    x, w = gl_nodes(dens.upper, nodes)
    raw = dens.raw(x)
    low = raw.min()
    if low * dens.upper < -1e-6:
        log.warning("V density ripple clipped (min %.3g on [0, %.3g])", low, dens.upper)
    q = w * np.maximum(raw, 0.0)
    total = q.sum()
    if not total > 0:
        raise IntegrationError("V density vanished on the quadrature nodes")
    return x, q / total


def expect_over_V(spec: ModelSpec, u_part: Callable[[float, np.ndarray], RiccatiSolution],
                  u_state: float, t: float, v_state: float, nodes: int, M_terms: int,
                  tol: float = RESIDUAL_TOLERANCE, cfg: SolverConfig = SolverConfig(),
                  c_v: float | None = None, dens: CosineDensity | None = None):
    """E[exp(b(V_t) u_state + c(V_t))] for the U-layer solution produced by ``u_part``.

    ``u_part(horizon, keep_times)`` returns the Riccati solution. For a
    degenerate v-layer V_t = t. The quadrature is repeated with twice the
    nodes to estimate its residual; a residual above ``tol`` raises.
    """
    if spec.v_layer is None:
        sol = u_part(t, np.array([t]))
        return sol.chf(t, u_state)
    m, var = _v_moments(spec, t, v_state)
    if var <= (1e-9 * m) ** 2:
        sol = u_part(m, np.array([m]))
        return sol.chf(m, u_state)
    if dens is None:
        dens = density_V(spec, t, c_v, M_terms, cfg, v_init=v_state)
    x1, q1 = _quadrature_weights(dens, nodes)
    x2, q2 = _quadrature_weights(dens, 2 * nodes)
    sol = u_part(dens.upper, np.concatenate([x1, x2]))
    phi1 = np.tensordot(q1, sol.chf(x1, u_state), axes=1)
    phi2 = np.tensordot(q2, sol.chf(x2, u_state), axes=1)
    residual = float(np.max(np.abs(phi1 - phi2))) if np.size(phi1) else 0.0
    if residual > tol:
        raise IntegrationError(
            f"V-quadrature residual {residual:.2e} exceeds {tol:g}; increase nodes", residual)
    return phi1


@dataclass(frozen=True)
class ChfRequest:
    spec: ModelSpec
    maturities: Sequence[float]
    frequencies: np.ndarray                  # 1-D shared, or 2-D with one row per maturity
    contour_shift: float = 0.0
    c_v: float | None = None                 # default: E[V_t] + 12 sd per maturity
    nodes: int = 200
    M_terms: int = 256
    solver: SolverConfig = field(default_factory=SolverConfig)
    residual_tol: float = RESIDUAL_TOLERANCE

    def __post_init__(self):
        if self.spec.rho_v != 0:
            raise ValidationError("characteristic function requires rho_v = 0")
        if self.contour_shift > 0:
            raise ValidationError("contour shift z_R must be <= 0")
        if self.c_v is not None and not self.c_v > 0:
            raise ValidationError("c_v must be > 0")
        if self.nodes < 64:
            raise ValidationError("need at least 64 quadrature nodes")
        if np.any(np.asarray(self.maturities) <= 0):
            raise ValidationError("maturities must be > 0")


def _v_plan(spec: ModelSpec, t: float, v_state: float, nodes: int, dens: CosineDensity | None):
    """Quadrature over V_t: (x, q) at D nodes and at 2D nodes (None when V_t is deterministic)."""
    if spec.v_layer is None:
        return (np.array([t]), np.ones(1)), None
    m, var = _v_moments(spec, t, v_state)
    if var <= (1e-9 * m) ** 2:
        return (np.array([m]), np.ones(1)), None
    return _quadrature_weights(dens, nodes), _quadrature_weights(dens, 2 * nodes)


def chf_X(req: ChfRequest) -> np.ndarray:
    """Matrix [maturity, frequency] of E[exp(i m X_t)].

    V densities for all maturities come from one sweep; the U layer is swept
    per maturity up to that maturity's V support.
    """
    spec = req.spec
    mats = np.asarray(req.maturities, dtype=float)
    freqs = np.asarray(req.frequencies, dtype=complex)
    rows = freqs if freqs.ndim == 2 else np.broadcast_to(freqs, (len(mats),) + freqs.shape)
    if rows.shape[0] != len(mats):
        raise ValidationError("one frequency row per maturity expected")
    dens: list[CosineDensity | None] = [None] * len(mats)
    if spec.v_layer is not None:
        live = [i for i, t in enumerate(mats)
                if _v_moments(spec, t, spec.v0)[1] > (1e-9 * _v_moments(spec, t, spec.v0)[0]) ** 2]
        if live:
            c_vs = None if req.c_v is None else [req.c_v] * len(live)
            for i, d in zip(live, density_V_many(spec, mats[live], c_vs, req.M_terms, req.solver)):
                dens[i] = d
    out = np.empty(rows.shape, dtype=complex)
    for i, (t, d) in enumerate(zip(mats, dens)):
        coarse, fine = _v_plan(spec, t, spec.v0, req.nodes, d)
        x1, q1 = coarse
        points = x1 if fine is None else np.concatenate([x1, fine[0]])
        sol = solve_U(spec, psi_base(spec, rows[i]), rows[i], req.solver, float(points.max()),
                      keep_times=points)
        out[i] = q1 @ sol.chf(x1)
        if fine is not None:
            x2, q2 = fine
            phi2 = q2 @ sol.chf(x2)
            residual = float(np.max(np.abs(out[i] - phi2)))
            if residual > req.residual_tol:
                raise IntegrationError(
                    f"V-quadrature residual {residual:.2e} exceeds {req.residual_tol:g} at "
                    f"t = {mats[i]:g}; increase nodes", residual)
        out[i, rows[i] == 0] = 1.0   # weights sum to one only up to rounding
    return out


def density_V_bromwich(spec: ModelSpec, t: float, s, contour_shift: float = 0.0,
                       cfg: SolverConfig = SolverConfig(), z_max: float | None = None,
                       n_nodes: int = 4000):
    """Density of V_t from the inverse Laplace transform along Re z = contour_shift.

    f(s) = (1/pi) int_0^inf Re[exp(-z s) E exp(z V_t)] dz_I, z = z_R + i z_I,
    z_R <= 0. Used as an independent route to :func:`density_V`.
    """
    if contour_shift > 0:
        raise ValidationError("contour shift must be <= 0")
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if z_max is None:
        _, var = _v_moments(spec, t, spec.v0)
        z_max = 40.0 / np.sqrt(var)
    x, w = gl_nodes(z_max, n_nodes)
    z = contour_shift + 1j * x
    sol = solve_V(spec, -1j * z, cfg, horizon=t, keep_times=[t])
    phi = sol.chf(t)
    vals = np.real(np.exp(-np.multiply.outer(s, z)) * phi) @ w
    return vals / np.pi


__all__ = ["ChfRequest", "CosineDensity", "chf_X", "density_V", "density_V_many", "density_V_bromwich",
           "default_c_v", "expect_over_V", "gl_nodes"]
