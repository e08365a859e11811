"""VIX in the composite time-change model: spot formulas, option pricers, diagnostics.

VIX^2 is kept in internal units (no 100^2 factor). For an ordinary model it
is affine in u; for a composite model it is A(v) u + B v + C(v), with the
v-dependence entering through the V-layer transform at exp(m_u V).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import erfc

from . import cir
from .black import implied_vol_forward
from .chf import gl_nodes
from .errors import (GridExtensionError, IntegrationError, StateRegionError, ValidationError)
from .levy import ModelSpec, composite_rate_u, levy_drift_scale, mean_ju, var_ju
from .montecarlo import SimPlan, euler_clock_paths, summarize
from .riccati import SolverConfig, solve_V, solve_V_joint, solve_u_transform

log = logging.getLogger(__name__)

TAU_BAR = 30.0 / 365.0


def mean_factor(x, t):
    """M(x, t) = (e^{xt} - 1)/(xt), equal to 1 at x = 0."""
    xt = np.asarray(x * t, dtype=float)
    out = np.ones_like(xt)
    nz = xt != 0
    out[nz] = np.expm1(xt[nz]) / xt[nz]
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# ordinary models


@dataclass(frozen=True)
class VixLinear:
    a_coef: float
    b_coef: float
    m_u: float

    def squared(self, u):
        return self.a_coef * np.asarray(u, dtype=float) + self.b_coef


def vix_linear(spec: ModelSpec, tau_bar: float = TAU_BAR) -> VixLinear:
    if spec.v_layer is not None:
        raise ValidationError("VIX is affine in u only for a degenerate v-layer")
    ul = spec.u_layer
    scale = levy_drift_scale(spec)
    m_u = composite_rate_u(spec)
    mf = mean_factor(m_u, tau_bar)
    a = scale * mf
    if m_u == 0:
        b = scale * ul.kappa * ul.theta * tau_bar / 2
    else:
        b = scale * ul.kappa * ul.theta / m_u * (mf - 1)
    return VixLinear(float(a), float(b), float(m_u))


def vix_spot_ordinary(spec: ModelSpec, u, tau_bar: float = TAU_BAR):
    sq = vix_linear(spec, tau_bar).squared(u)
    if np.any(sq < 0):
        raise ValidationError("negative VIX^2: parameters produce an invalid VIX")
    out = np.sqrt(sq)
    return out if out.ndim else float(out)


def _cir_mgf(spec: ModelSpec, z, t, u0=None):
    """E[exp(z u_t)] for a square-root rate u without jumps (noncentral chi-square)."""
    ul = spec.u_layer
    u0 = spec.u0 if u0 is None else u0
    if ul.sigma == 0:
        return np.exp(z * cir.mean(ul.kappa, ul.theta, u0, t))
    one_minus = -math.expm1(-ul.kappa * t) if ul.kappa else ul.kappa * t
    scale = ul.sigma ** 2 * one_minus / (4 * ul.kappa) if ul.kappa else ul.sigma ** 2 * t / 4
    dof = 4 * ul.kappa * ul.theta / ul.sigma ** 2
    nonc = u0 * math.exp(-ul.kappa * t) / scale
    w = 1 - 2 * scale * z
    return np.exp(nonc * scale * z / w) * w ** (-dof / 2)


def vix_call_fourier_ordinary(spec: ModelSpec, strike, maturity: float, rate: float = 0.0,
                              contour_shift: float | None = None, tol: float = 1e-6,
                              tau_bar: float = TAU_BAR):
    """e^{-rT} E[(VIX_T - K)^+] by inverting the Laplace transform of (sqrt(y) - K)^+.

    Integrates Re[e^{zb/a} E[e^{z u_T}] erfc(K sqrt(z/a)) / (z/a)^{3/2}] over
    z = z_R + i z_I, z_I > 0. The Bromwich line must pass to the right of
    the branch point at 0, so z_R > 0 is required, and z_R must stay below
    the exponential-moment bound of u_T.
    """
    if spec.v_layer is not None or spec.u_layer.eta != 0:
        raise ValidationError("Fourier VIX pricing needs an ordinary model with a square-root u")
    ul = spec.u_layer
    lin = vix_linear(spec, tau_bar)
    a, b = lin.a_coef, lin.b_coef
    scale = (ul.sigma ** 2 * -math.expm1(-ul.kappa * maturity) / (4 * ul.kappa)
             if ul.kappa else ul.sigma ** 2 * maturity / 4)
    z_bound = 1 / (2 * scale) if scale > 0 else np.inf
    if contour_shift is None:
        contour_shift = min(0.25 * z_bound, 1.0 / max(a * 0.1, 1e-12))
    if not 0 < contour_shift < z_bound:
        raise ValidationError(
            f"contour shift must lie in (0, {z_bound:.4g}) for this model and maturity")
    strikes = np.atleast_1d(np.asarray(strike, dtype=float))
    prices = np.empty(len(strikes))
    for i, K in enumerate(strikes):
        val, resid = _vix_fourier_integral(spec, a, b, K, maturity, contour_shift)
        if resid > tol:
            raise IntegrationError(f"VIX Fourier integral residual {resid:.2e} exceeds {tol:g}", resid)
        prices[i] = math.exp(-rate * maturity) * val
    return prices if np.ndim(strike) else float(prices[0])


def _vix_fourier_integral(spec, a, b, K, T, z_r, per_panel=16):
    def integrand(zi):
        z = z_r + 1j * zi
        p = z / a
        return np.real(np.exp(z * b / a) * _cir_mgf(spec, z, T) * erfc(K * np.sqrt(p)) / p ** 1.5)

    # oscillation rate of the tail: phase of exp(z (b - K^2)/a)
    omega = abs(b - K * K) / a + 1e-12
    ul = spec.u_layer
    mean_u = cir.mean(ul.kappa, ul.theta, spec.u0, T)
    omega = max(omega, mean_u)
    width_cap = math.pi / omega
    edges = [0.0]
    w = min(1e-3 / max(mean_u, 1e-12), width_cap)
    z_end = 0.0
    dof = 4 * ul.kappa * ul.theta / ul.sigma ** 2
    decay = 2 + dof / 2
    total_1 = total_2 = 0.0
    coarse_nodes, coarse_w = np.polynomial.legendre.leggauss(per_panel)
    fine_nodes, fine_w = np.polynomial.legendre.leggauss(2 * per_panel)
    while True:
        batch = []
        for _ in range(2000):
            batch.append((z_end, z_end + w))
            z_end += w
            w = min(w * 1.25, width_cap)
        lo = np.array([e[0] for e in batch])
        hi = np.array([e[1] for e in batch])
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        x1 = (mid[:, None] + half[:, None] * coarse_nodes).ravel()
        x2 = (mid[:, None] + half[:, None] * fine_nodes).ravel()
        total_1 += np.sum(integrand(x1) * (half[:, None] * coarse_w).ravel())
        total_2 += np.sum(integrand(x2) * (half[:, None] * fine_w).ravel())
        # tail estimate from the envelope at the end point, assuming power decay
        z = z_r + 1j * z_end
        env = abs(np.exp(z * b / a) * _cir_mgf(spec, z, T) * erfc(K * np.sqrt(z / a))
                  / (z / a) ** 1.5)
        tail = env * z_end / (decay - 1)
        if tail / (2 * a * math.sqrt(math.pi)) < 1e-9 or z_end > 1e9:
            break
    norm = 1 / (2 * a * math.sqrt(math.pi))
    return norm * total_2, norm * (abs(total_1 - total_2) + tail)


# ---------------------------------------------------------------------------
# composite models


@dataclass
class VixAffine:
    """Evaluator of (A(v), B, C(v)) with VIX^2 = A(v) u + B v + C(v)."""

    spec: ModelSpec
    tau_bar: float = TAU_BAR
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        spec = self.spec
        if spec.v_layer is None:
            raise ValidationError("VixAffine needs a composite model; use vix_linear")
        if spec.rho_v != 0:
            raise ValidationError("VIX formula requires rho_v = 0")
        self.scale = levy_drift_scale(spec)
        self.m_u = composite_rate_u(spec)
        vl = spec.v_layer
        self.m_v = -vl.kappa
        # E[exp(m_u dV) | v] = exp(b v + c); real because omega = -i m_u
        sol = solve_V(spec, np.array(-1j * self.m_u), self.solver, horizon=self.tau_bar,
                      keep_times=[self.tau_bar])
        b, c = sol.at(self.tau_bar)
        self._b, self._c = float(np.real(b)), float(np.real(c))

    def transform(self, v):
        return np.exp(self._b * np.asarray(v, dtype=float) + self._c)

    def _small_rate(self) -> bool:
        return abs(self.m_u * self.tau_bar) < 1e-6

    def coefficients(self, v):
        """(A(v), B, C(v)); undefined (inf) individually when m_u vanishes."""
        s, m_u, m_v, tb = self.scale, self.m_u, self.m_v, self.tau_bar
        ul, vl = self.spec.u_layer, self.spec.v_layer
        phi = self.transform(v)
        if self._small_rate():
            A = s * cir.integrated_mean(vl.kappa, vl.theta, np.asarray(v, float), tb) / tb
            return A, np.inf, np.full(np.shape(A), -np.inf)
        mv = mean_factor(m_v, tb)
        A = s * (phi - 1) / (m_u * tb)
        B = -s * ul.kappa * ul.theta * mv / m_u
        if m_v == 0:
            lvl = vl.kappa * vl.theta * tb / 2
        else:
            lvl = vl.kappa * vl.theta * (mv - 1) / m_v
        C = s * (-ul.kappa * ul.theta * lvl / m_u + ul.kappa * ul.theta / (m_u ** 2 * tb) * (phi - 1))
        return A, B, C

    def squared(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if not self._small_rate():
            A, B, C = self.coefficients(v)
            return A * u + B * v + C
        # removable singularity: combine B v + C(v) and expand in m_u
        vl = self.spec.v_layer
        ul = self.spec.u_layer
        mean = cir.integrated_mean(vl.kappa, vl.theta, v, self.tau_bar)
        second = cir.integrated_variance(vl.kappa, vl.theta, vl.sigma, v, self.tau_bar) + mean ** 2
        A = self.scale * mean / self.tau_bar
        return A * u + self.scale * ul.kappa * ul.theta * second / (2 * self.tau_bar)


def vix_spot_ctc(spec: ModelSpec, u_state, v_state, tau_bar: float = TAU_BAR,
                 solver: SolverConfig = SolverConfig(), evaluator: VixAffine | None = None):
    """VIX level at state (u on the V clock, v); ordinary models ignore ``v_state``."""
    if spec.v_layer is None:
        return vix_spot_ordinary(spec, u_state, tau_bar)
    ev = evaluator or VixAffine(spec, tau_bar, solver)
    sq = ev.squared(u_state, v_state)
    if np.any(sq < 0):
        raise StateRegionError(f"negative VIX^2 (min {np.min(sq):.3g}) at the given states")
    out = np.sqrt(sq)
    return out if np.ndim(out) else float(out)


def vix_squared_laplace(spec: ModelSpec, u_state: float, v_state: float, tau_bar: float = TAU_BAR,
                        solver: SolverConfig = SolverConfig(), h: float = 1e-5) -> float:
    """VIX^2 from the Laplace transform of the clock increment (central difference at l = 0)."""
    from .chf import expect_over_V
    from .riccati import solve_U

    def laplace(l):
        def u_part(horizon, times):
            return solve_U(spec, psiL=-l, m=0.0, cfg=solver, horizon=horizon, keep_times=times)
        return float(np.real(expect_over_V(spec, u_part, u_state, tau_bar, v_state, 200, 256,
                                           1e-9, solver)))

    mean_increment = -(laplace(h) - laplace(-h)) / (2 * h)
    return levy_drift_scale(spec) * mean_increment / tau_bar


# ---------------------------------------------------------------------------
# deterministic quadrature pricer (square-root u)


@dataclass(frozen=True)
class VixQuadrature:
    """Settings of the quadrature VIX pricer.

    The joint density of (V_T, v_T) is a two-dimensional cosine series from
    the affine transform of (V, v); u_{V_T} given V_T is a scaled noncentral
    chi-square. Unlike the exact simulation this pricer is smooth in the
    parameters, which calibration needs.
    """

    terms: int = 64
    nodes: int = 48
    u_nodes: int = 400
    width: float = 12.0
    solver: SolverConfig = field(default_factory=SolverConfig)


def _u_law_nodes(spec: ModelSpec, V: np.ndarray, n: int, width: float):
    """Nodes (len(V), n) and probability weights of u after internal time V."""
    ul = spec.u_layer
    if ul.sigma == 0:
        return cir.mean(ul.kappa, ul.theta, spec.u0, V)[:, None], np.ones((len(V), 1))
    dof = 4 * ul.kappa * ul.theta / ul.sigma ** 2
    one_minus = -np.expm1(-ul.kappa * V) if ul.kappa else ul.kappa * V
    scale = ul.sigma ** 2 * one_minus / (4 * ul.kappa) if ul.kappa else ul.sigma ** 2 * V / 4
    nonc = spec.u0 * np.exp(-ul.kappa * V) / scale
    mean = cir.mean(ul.kappa, ul.theta, spec.u0, V)
    sd = np.sqrt(cir.variance(ul.kappa, ul.theta, ul.sigma, spec.u0, V))
    upper = mean + width * sd
    # u = upper * t^p removes the u^(dof/2 - 1) singularity at the origin
    power = max(1.0, 2.0 / dof)
    t, w = gl_nodes(1.0, n)
    u = upper[:, None] * t[None, :] ** power
    jac = upper[:, None] * power * t[None, :] ** (power - 1)
    dens = stats.ncx2.pdf(u / scale[:, None], dof, nonc[:, None]) / scale[:, None]
    q = dens * jac * w[None, :]
    return u, q / q.sum(axis=1, keepdims=True)


def _clock_state_nodes(spec: ModelSpec, T: float, cfg: VixQuadrature):
    """Quadrature nodes and weights for (V_T, v_T) from the 2-D cosine density."""
    vl = spec.v_layer
    mV = cir.integrated_mean(vl.kappa, vl.theta, spec.v0, T)
    sV = math.sqrt(max(cir.integrated_variance(vl.kappa, vl.theta, vl.sigma, spec.v0, T), 0.0))
    mv = cir.mean(vl.kappa, vl.theta, spec.v0, T)
    sv = math.sqrt(max(cir.variance(vl.kappa, vl.theta, vl.sigma, spec.v0, T), 0.0))
    if sV <= 1e-12 * mV or sv <= 1e-12 * max(mv, 1.0):
        return np.array([mV]), np.array([mv]), np.ones((1, 1))
    a1, b1 = max(mV - cfg.width * sV, 0.0), mV + cfg.width * sV
    a2, b2 = max(mv - cfg.width * sv, 0.0), mv + cfg.width * sv
    k = np.arange(cfg.terms)
    om = k * np.pi / (b1 - a1)
    xi = k * np.pi / (b2 - a2)
    O, X = np.meshgrid(om, xi, indexing="ij")
    sol = solve_V_joint(spec, np.stack([O, O]), np.stack([X, -X]), cfg.solver, horizon=T,
                        keep_times=[T])
    phi_p, phi_m = sol.chf(T)
    coef = 2 / ((b1 - a1) * (b2 - a2)) * np.real(
        phi_p * np.exp(-1j * (O * a1 + X * a2)) + phi_m * np.exp(-1j * (O * a1 - X * a2)))
    coef[0, :] *= 0.5
    coef[:, 0] *= 0.5
    x1, w1 = gl_nodes(b1 - a1, cfg.nodes)
    x2, w2 = gl_nodes(b2 - a2, cfg.nodes)
    dens = np.cos(np.outer(x1, om)) @ coef @ np.cos(np.outer(xi, x2))
    q = np.maximum(dens, 0.0) * np.outer(w1, w2)
    total = q.sum()
    if not total > 0:
        raise IntegrationError("joint density of (V_T, v_T) vanished on the quadrature grid")
    return a1 + x1, a2 + x2, q / total


def vix_call_quadrature(spec: ModelSpec, strike, maturity: float, rate: float = 0.0,
                        cfg: VixQuadrature = VixQuadrature(), tau_bar: float = TAU_BAR):
    """e^{-rT} E[(VIX_T - K)^+] by deterministic quadrature; square-root u only.

    States where the VIX^2 map turns negative carry negligible probability and
    are floored at zero.
    """
    if spec.u_layer.eta != 0:
        raise ValidationError("quadrature VIX pricing needs a square-root u without co-jumps")
    strikes = np.atleast_1d(np.asarray(strike, dtype=float))
    if spec.v_layer is None:
        V, v, q = np.array([maturity]), np.array([1.0]), np.ones((1, 1))
        lin = vix_linear(spec, tau_bar)
        alpha, beta = np.array([lin.a_coef]), np.array([lin.b_coef])
    else:
        if spec.rho_v != 0:
            raise ValidationError("VIX formula requires rho_v = 0")
        V, v, q = _clock_state_nodes(spec, maturity, cfg)
        ev = VixAffine(spec, tau_bar, cfg.solver)
        A, B, C = ev.coefficients(v)
        alpha, beta = np.broadcast_to(A, v.shape), B * v + C
    u, qu = _u_law_nodes(spec, V, cfg.u_nodes, cfg.width)
    # vix[i, j, n]: VIX at V node i, v node j, u node n
    vix = np.sqrt(np.maximum(alpha[None, :, None] * u[:, None, :] + beta[None, :, None], 0.0))
    prices = np.empty(len(strikes))
    for s_idx, K in enumerate(strikes):
        pay = np.einsum("ijn,in->ij", np.maximum(vix - K, 0.0), qu)
        prices[s_idx] = np.sum(q * pay)
    prices *= math.exp(-rate * maturity)
    return prices if np.ndim(strike) else float(prices[0])


def vix_futures_quadrature(spec: ModelSpec, maturity: float, cfg: VixQuadrature = VixQuadrature(),
                           tau_bar: float = TAU_BAR) -> float:
    """E[VIX_T]: the undiscounted zero-strike call."""
    return float(vix_call_quadrature(spec, 0.0, maturity, 0.0, cfg, tau_bar))


# ---------------------------------------------------------------------------
# exact simulation


def u_moments(spec: ModelSpec, t, u0=None):
    """Mean and variance of u_t (own clock), including co-jumps."""
    ul = spec.u_layer
    u0 = spec.u0 if u0 is None else u0
    t = np.asarray(t, dtype=float)
    m = composite_rate_u(spec)
    s2 = ul.sigma ** 2 + ul.eta ** 2 * var_ju(spec)
    if m == 0:
        mean = u0 + ul.kappa * ul.theta * t
        var = s2 * (u0 * t + ul.kappa * ul.theta * t * t / 2)
        return mean, var
    level = -ul.kappa * ul.theta / m
    e1 = np.exp(m * t)
    mean = level + (u0 - level) * e1
    var = s2 * (level * np.expm1(2 * m * t) / (2 * m) + (u0 - level) * (e1 * e1 - e1) / m)
    return mean, np.maximum(var, 0.0)


class JumpRateSampler:
    """Inverse-transform sampler of u at a random internal time (co-jump u).

    The transform of u is integrated once on the Riccati grid up to
    ``horizon``; CDFs are rebuilt by cosine inversion at the grid nodes that
    bracket the requested times, rearranged to be monotone, and quantiles are
    interpolated linearly in time between the two bracketing nodes. Co-jumps
    give u a long right tail, hence the wide default range in standard deviations.
    """

    def __init__(self, spec: ModelSpec, horizon: float, solver: SolverConfig = SolverConfig(),
                 n_terms: int = 512, n_points: int = 2048, width: float = 40.0):
        self.spec = spec
        self.horizon = horizon
        self.solver = solver
        self.n_terms = n_terms
        self.n_points = n_points
        ts = np.linspace(0, horizon, 64)
        mean, var = u_moments(spec, ts)
        sd = np.sqrt(var)
        self.lower = max(0.0, float(np.min(mean - width * sd)))
        self.upper = float(np.max(mean + width * sd))
        self.degenerate = self.upper - self.lower < 1e-12 * max(1.0, self.upper)

    def sample(self, t, rng: np.random.Generator):
        t = np.asarray(t, dtype=float)
        if np.any(t > self.horizon + 1e-12) or np.any(t < 0):
            raise GridExtensionError(
                f"internal time {t.max():.4g} beyond the precomputed grid [0, {self.horizon:.4g}]")
        if self.degenerate:
            return u_moments(self.spec, t)[0]
        h = self.solver.step
        n_steps = max(int(math.ceil(self.horizon / h - 1e-9)), 3)
        j = np.minimum(np.floor(t / h).astype(int), n_steps - 1)
        nodes = np.unique(np.concatenate([j, j + 1]))
        a, b = self.lower, self.upper
        k = np.arange(self.n_terms)
        w = k * np.pi / (b - a)
        sol = solve_u_transform(self.spec, 1j * w, self.solver, self.horizon, keep_times=nodes * h)
        phi = sol.chf(nodes * h)                                  # (nodes, terms)
        coef = 2 / (b - a) * np.real(phi * np.exp(-1j * w * a))
        x = np.linspace(a, b, self.n_points)
        basis = np.empty((self.n_points, self.n_terms))
        basis[:, 0] = 0.5 * (x - a)
        basis[:, 1:] = np.sin(np.outer(x - a, w[1:])) / w[1:]
        cdf = np.sort(basis @ coef.T, axis=0)                     # monotone rearrangement
        cdf = np.clip(cdf / cdf[-1], 0.0, 1.0)
        uni = rng.random(t.shape)
        pos = {node: i for i, node in enumerate(nodes)}
        out = np.empty(t.shape)
        frac = t / h - j
        for node in np.unique(j):
            sel = j == node
            q0 = np.interp(uni[sel], cdf[:, pos[node]], x)
            q1 = np.interp(uni[sel], cdf[:, pos[node + 1]], x)
            out[sel] = (1 - frac[sel]) * q0 + frac[sel] * q1
        return out


def sample_u_at_VT(spec: ModelSpec, V_T_draw, rng: np.random.Generator,
                   sampler: JumpRateSampler | None = None, horizon: float | None = None):
    """u after an internal time V_T: exact for square-root u, cosine inversion with co-jumps."""
    V = np.asarray(V_T_draw, dtype=float)
    if np.any(V <= 0):
        raise ValidationError("internal times must be positive")
    ul = spec.u_layer
    if ul.eta == 0:
        return cir.sample_terminal(ul.kappa, ul.theta, ul.sigma, spec.u0, V, rng)
    if sampler is None:
        sampler = JumpRateSampler(spec, float(np.max(V)) if horizon is None else horizon)
    return sampler.sample(V, rng)


def internal_horizon(spec: ModelSpec, T: float, width: float = 12.0) -> float:
    if spec.v_layer is None:
        return T
    vl = spec.v_layer
    return cir.support_bound(vl.kappa, vl.theta, vl.sigma, spec.v0, T, width)


def simulate_vix_exact(spec: ModelSpec, maturity: float, plan: SimPlan,
                       solver: SolverConfig = SolverConfig(), tau_bar: float = TAU_BAR):
    """Exact draws of VIX_T and the terminal states; returns (vix, u, v, V) arrays."""
    if spec.rho_v != 0:
        raise ValidationError("exact VIX simulation requires rho_v = 0")
    ev = VixAffine(spec, tau_bar, solver) if spec.v_layer is not None else None
    sampler = None
    if spec.u_layer.eta != 0:
        sampler = JumpRateSampler(spec, internal_horizon(spec, maturity), solver)
    chunks = []
    for _, n, rng in plan.blocks():
        if spec.v_layer is None:
            v_T = np.ones(n)
            V_T = np.full(n, maturity)
        else:
            vl = spec.v_layer
            v_T = cir.sample_terminal(vl.kappa, vl.theta, vl.sigma, spec.v0, maturity, rng, size=n)
            V_T = cir.sample_integrated_conditional(vl.kappa, vl.theta, vl.sigma, spec.v0, v_T,
                                                    maturity, rng, n_terms=plan.gamma_terms)
        u = sample_u_at_VT(spec, V_T, rng, sampler)
        vix = vix_spot_ctc(spec, u, v_T, tau_bar, solver, ev)
        chunks.append((vix, u, v_T, V_T))
    return tuple(np.concatenate([c[i] for c in chunks]) for i in range(4))


def _price_from_samples(vix, strikes, maturity, rate, plan: SimPlan):
    strikes = np.atleast_1d(np.asarray(strikes, dtype=float))
    disc = math.exp(-rate * maturity)
    sums, sqs = [], []
    for start in range(0, len(vix), plan.block):
        pay = disc * np.maximum(vix[start:start + plan.block, None] - strikes[None, :], 0.0)
        sums.append(pay.sum(axis=0))
        sqs.append((pay * pay).sum(axis=0))
    return summarize(sums, sqs, len(vix))


def price_vix_option_exact(spec: ModelSpec, strike, maturity: float, plan: SimPlan,
                           rate: float = 0.0, solver: SolverConfig = SolverConfig()):
    """(price, std_error) of VIX calls by exact simulation of (v_T, V_T, u_{V_T})."""
    vix = simulate_vix_exact(spec, maturity, plan, solver)[0]
    price, se = _price_from_samples(vix, strike, maturity, rate, plan)
    if np.ndim(strike) == 0:
        return float(price[0]), float(se[0])
    return price, se


def simulate_vix_euler(spec: ModelSpec, maturity: float, plan: SimPlan,
                       solver: SolverConfig = SolverConfig(), tau_bar: float = TAU_BAR):
    """VIX_T from full Euler paths of (v, u on the V clock); independent of the exact samplers."""
    ev = VixAffine(spec, tau_bar, solver)
    chunks = []
    for _, n, rng in plan.blocks():
        u, v, _ = euler_clock_paths(spec, maturity, n, plan.euler_step, rng)
        chunks.append(np.sqrt(np.maximum(ev.squared(u, v), 0.0)))
    return np.concatenate(chunks)


def price_vix_option_euler(spec: ModelSpec, strike, maturity: float, plan: SimPlan,
                           rate: float = 0.0, solver: SolverConfig = SolverConfig()):
    vix = simulate_vix_euler(spec, maturity, plan, solver)
    price, se = _price_from_samples(vix, strike, maturity, rate, plan)
    if np.ndim(strike) == 0:
        return float(price[0]), float(se[0])
    return price, se


def vix_implied_vol(price: float, futures: float, strike: float, maturity: float,
                    rate: float = 0.0) -> float:
    """Black-76 implied volatility of a VIX call against the VIX futures price."""
    return implied_vol_forward(price * math.exp(rate * maturity), futures, strike, maturity, True)


# ---------------------------------------------------------------------------
# small-horizon diagnostics


@dataclass(frozen=True)
class SmallTauReport:
    tau: np.ndarray
    vix2: np.ndarray
    leading: float
    ratio: np.ndarray               # (vix2 - leading) / tau
    slope: float
    intercept: float
    r_squared: float
    predicted_slope: float
    vvix2_terms: dict


def smalltau_diagnostics(spec: ModelSpec, u_state: float, v_state: float, tau_grid,
                         rate: float = 0.0, solver: SolverConfig = SolverConfig()) -> SmallTauReport:
    if spec.kind not in ("CompositeHeston", "Heston"):
        raise ValidationError("small-horizon diagnostics are implemented for Heston-type models")
    tau = np.asarray(tau_grid, dtype=float)
    scale = levy_drift_scale(spec)
    ul = spec.u_layer
    vl = spec.v_layer
    v = v_state if vl is not None else 1.0
    leading = scale * u_state * v
    if vl is None:
        vix2 = np.array([vix_linear(spec, t).squared(u_state) for t in tau])
    else:
        vix2 = np.array([float(VixAffine(spec, t, solver).squared(u_state, v_state)) for t in tau])
    ratio = (vix2 - leading) / tau
    design = np.vstack([tau, np.ones_like(tau)]).T
    coef, *_ = np.linalg.lstsq(design, vix2 - leading, rcond=None)
    fitted = design @ coef
    resid = vix2 - leading - fitted
    centred = vix2 - leading - np.mean(vix2 - leading)
    r2 = 1 - np.sum(resid ** 2) / np.sum(centred ** 2)
    drift_v = vl.kappa * (vl.theta - v) if vl is not None else 0.0
    predicted = scale / 2 * (u_state * drift_v + v * v * ul.kappa * (ul.theta - u_state))
    terms = {"2r": 2 * rate, "kappa_u*v": ul.kappa * v,
             "(sigma_u^2-2kappa_u*theta_u)v/(2u)": (ul.sigma ** 2 - 2 * ul.kappa * ul.theta) * v / (2 * u_state)}
    if vl is not None:
        terms["kappa_v"] = vl.kappa
        terms["(sigma_v^2-2kappa_v*theta_v)/(2v)"] = (vl.sigma ** 2 - 2 * vl.kappa * vl.theta) / (2 * v)
    terms["total"] = sum(terms.values())
    return SmallTauReport(tau, vix2, leading, ratio, float(coef[0]), float(coef[1]), float(r2),
                          float(predicted), terms)
