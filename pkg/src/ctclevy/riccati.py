"""Fixed-step RK4 integration of the affine Riccati systems of U and V.

Every solver returns a :class:`RiccatiSolution` holding ``b`` and ``c`` on a
uniform grid ``t_n = n * step``. Grids are nested across horizons, so a
solution computed to a long horizon agrees exactly with one computed to a
shorter horizon at common nodes. Values between nodes come from four-point
cubic (Lagrange) interpolation.

Solutions can be asked to retain only the nodes needed to interpolate at a
given set of query times; this keeps memory bounded when thousands of
frequencies are integrated over thousands of steps.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import MomentExplosionError, ValidationError
from .levy import ModelSpec, psi_base, psi_ju_Q

BLOWUP = 1e8


@dataclass(frozen=True)
class SolverConfig:
    step: float = 1.0 / 2000
    method: str = "rk4"

    def __post_init__(self):
        if not self.step > 0:
            raise ValidationError("solver step must be > 0")
        if self.method != "rk4":
            raise ValidationError(f"unsupported solver method {self.method!r}")

    def check_maturities(self, maturities) -> None:
        shortest = float(np.min(maturities))
        if self.step > shortest / 16 + 1e-15:
            raise ValidationError(
                f"solver step {self.step:g} exceeds shortest maturity / 16 = {shortest / 16:g}")


@dataclass(frozen=True)
class RiccatiSolution:
    step: float
    n_steps: int
    index: np.ndarray          # retained node indices, increasing
    b: np.ndarray              # shape (len(index), *argument.shape)
    c: np.ndarray
    argument: np.ndarray
    initial_state: float = 1.0

    @property
    def grid(self) -> np.ndarray:
        return self.index * self.step

    @property
    def horizon(self) -> float:
        return self.n_steps * self.step

    def at(self, t):
        """Cubic interpolation of (b, c); result shape ``t.shape + argument.shape``."""
        t = np.asarray(t, dtype=float)
        idx, weights = _stencil(t.ravel(), self.step, self.n_steps)
        pos = np.searchsorted(self.index, idx)
        pos = np.minimum(pos, len(self.index) - 1)
        if not np.array_equal(self.index[pos], idx):
            raise ValidationError("requested time needs Riccati nodes that were not retained")
        tail = (1,) * self.argument.ndim
        w = weights.reshape(weights.shape + tail)
        b = np.sum(self.b[pos] * w, axis=1)
        c = np.sum(self.c[pos] * w, axis=1)
        shape = t.shape + self.argument.shape
        return b.reshape(shape), c.reshape(shape)

    def chf(self, t, state=None):
        b, c = self.at(t)
        x = self.initial_state if state is None else state
        return np.exp(b * x + c)

    def to_csv(self, path, column: int = 0) -> None:
        """Debug dump of (t, Re b, Im b, Re c, Im c) for one argument."""
        b = self.b.reshape(len(self.index), -1)[:, column]
        c = self.c.reshape(len(self.index), -1)[:, column]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "re_b", "im_b", "re_c", "im_c"])
            for t, bb, cc in zip(self.grid, b, c):
                w.writerow([repr(float(t)), repr(bb.real), repr(bb.imag), repr(cc.real), repr(cc.imag)])


def _stencil(t, step, n_steps):
    """Node indices (len(t), 4) and Lagrange weights for cubic interpolation."""
    x = t / step
    j = np.floor(x).astype(int)
    first = np.clip(j - 1, 0, n_steps - 3)
    idx = first[:, None] + np.arange(4)
    s = x - first                               # position relative to first node
    nodes = np.arange(4.0)
    weights = np.ones((len(t), 4))
    for k in range(4):
        for q in range(4):
            if q != k:
                weights[:, k] *= (s - nodes[q]) / (nodes[k] - nodes[q])
    return idx, weights


def integrate(rhs: Callable[[np.ndarray], np.ndarray], b0, drift_level: float, step: float,
              horizon: float, keep_times=None, initial_state: float = 1.0,
              argument=None) -> RiccatiSolution:
    """RK4 for the autonomous system b' = rhs(b), c' = drift_level * b.

    ``drift_level`` is kappa*theta of the CIR layer. ``keep_times`` restricts
    storage to the nodes required to interpolate at those times.
    """
    if not horizon > 0:
        raise ValidationError("horizon must be > 0")
    b = np.array(b0, dtype=complex)
    c = np.zeros_like(b)
    n_steps = max(int(math.ceil(horizon / step - 1e-9)), 3)
    if keep_times is None:
        keep = np.arange(n_steps + 1)
    else:
        kt = np.asarray(keep_times, dtype=float).ravel()
        if np.any(kt < 0) or np.any(kt > n_steps * step + 1e-12):
            raise ValidationError("keep_times must lie inside [0, horizon]")
        keep = np.unique(_stencil(kt, step, n_steps)[0])
    out_b = np.empty((len(keep),) + b.shape, dtype=complex)
    out_c = np.empty_like(out_b)
    slot = 0
    if keep[0] == 0:
        out_b[0], out_c[0] = b, c
        slot = 1
    h, h2, h6 = step, 0.5 * step, step / 6.0
    # blow-up is reported below; overflow between checks is expected on the way
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(1, keep[-1] + 1):
            k1 = rhs(b)
            b2 = b + h2 * k1
            k2 = rhs(b2)
            b3 = b + h2 * k2
            k3 = rhs(b3)
            b4 = b + h * k3
            k4 = rhs(b4)
            c = c + (drift_level * h6) * (b + 2.0 * (b2 + b3) + b4)
            b = b + h6 * (k1 + 2.0 * (k2 + k3) + k4)
            if (n & 7 == 0 or n == keep[-1]) and not np.all(np.abs(b) <= BLOWUP):
                raise MomentExplosionError(
                    f"Riccati solution exceeded {BLOWUP:g} (or became non-finite) at t = {n * h:.6g}",
                    time=n * h)
            if slot < len(keep) and keep[slot] == n:
                out_b[slot], out_c[slot] = b, c
                slot += 1
    arg = np.asarray(argument if argument is not None else b0)
    return RiccatiSolution(step, n_steps, keep, out_b, out_c, arg, initial_state)


def _u_rhs(spec: ModelSpec, forcing, m):
    """Right-hand side of the U-layer equation under the measure indexed by m."""
    ul = spec.u_layer
    forcing = np.asarray(forcing, dtype=complex)
    m = np.asarray(m, dtype=complex)
    drag = ul.kappa - 1j * spec.rho_u * ul.sigma * spec.sigma * m
    half_var = 0.5 * ul.sigma ** 2
    co = spec.base if spec.cgmy is not None and ul.eta > 0 else None
    eta = ul.eta

    if co is None:
        def rhs(b):
            return forcing + b * (half_var * b - drag)
    else:
        # E exp(eta*b*J^u_1) = exp(psi_ju(-i*eta*b))
        def rhs(b):
            return forcing - drag * b + half_var * b * b + psi_ju_Q(co, m, -1j * eta * b)
    return rhs


def solve_U(spec: ModelSpec, psiL=None, m=0.0, cfg: SolverConfig = SolverConfig(),
            horizon: float = 1.0, keep_times=None) -> RiccatiSolution:
    """Transform of U under the leverage-neutral measure indexed by ``m``.

    ``chf(t)`` of the result is E^Q[exp(psiL * U_t)] with U started from u0.
    """
    if spec.rho_v != 0:
        raise ValidationError("Fourier transforms require rho_v = 0")
    m = np.asarray(m, dtype=complex)
    if psiL is None:
        psiL = psi_base(spec, m)
    psiL = np.asarray(psiL, dtype=complex)
    shape = np.broadcast(psiL, m).shape
    ul = spec.u_layer
    rhs = _u_rhs(spec, np.broadcast_to(psiL, shape), np.broadcast_to(m, shape))
    return integrate(rhs, np.zeros(shape, complex), ul.kappa * ul.theta, cfg.step, horizon,
                     keep_times, spec.u0, argument=np.broadcast_to(m, shape))


def solve_u_transform(spec: ModelSpec, z, cfg: SolverConfig = SolverConfig(), horizon: float = 1.0,
                      keep_times=None, state=None) -> RiccatiSolution:
    """E[exp(z * u_t)] for the activity rate u in its own clock (physical measure)."""
    z = np.asarray(z, dtype=complex)
    ul = spec.u_layer
    rhs = _u_rhs(spec, np.zeros(z.shape, complex), np.zeros(z.shape))
    return integrate(rhs, z, ul.kappa * ul.theta, cfg.step, horizon, keep_times,
                     spec.u0 if state is None else state, argument=z)


def zero_jump_hook(b):
    return 0.0


def solve_V(spec: ModelSpec, omega, cfg: SolverConfig = SolverConfig(), horizon: float = 1.0,
            v_init=None, keep_times=None, jump_hook: Callable = zero_jump_hook) -> RiccatiSolution:
    """phi_V(omega; t) = E[exp(i omega V_t)] with V the integral of the CIR rate v.

    ``jump_hook(b)`` adds a jump exponent of v evaluated along b; the shipped
    catalog has no jumps in v, so the default contributes zero.
    """
    vl = spec.v_layer
    if vl is None:
        raise ValidationError("solve_V needs a non-degenerate v-layer")
    omega = np.asarray(omega, dtype=complex)
    forcing = 1j * omega
    half_var = 0.5 * vl.sigma ** 2
    kappa = vl.kappa

    def rhs(b):
        return forcing - kappa * b + half_var * b * b + jump_hook(b)

    return integrate(rhs, np.zeros(omega.shape, complex), vl.kappa * vl.theta, cfg.step, horizon,
                     keep_times, spec.v0 if v_init is None else v_init, argument=omega)


def solve_V_joint(spec: ModelSpec, omega, xi, cfg: SolverConfig = SolverConfig(),
                  horizon: float = 1.0, keep_times=None) -> RiccatiSolution:
    """E[exp(i omega V_t + i xi v_t)]: the V equation started from b(0) = i xi."""
    vl = spec.v_layer
    if vl is None:
        raise ValidationError("solve_V_joint needs a non-degenerate v-layer")
    omega, xi = np.broadcast_arrays(np.asarray(omega, dtype=complex), np.asarray(xi, dtype=complex))
    forcing = 1j * omega
    kappa, half_var = vl.kappa, 0.5 * vl.sigma ** 2

    def rhs(b):
        return forcing - kappa * b + half_var * b * b

    return integrate(rhs, 1j * xi, vl.kappa * vl.theta, cfg.step, horizon, keep_times, spec.v0,
                     argument=omega)


def laplace_UV_increment(spec: ModelSpec, l: float, u_state: float, v_state: float, tau: float,
                         cfg: SolverConfig = SolverConfig(), nodes: int = 200,
                         M_terms: int = 256, tol: float = 1e-7) -> float:
    """E[exp(-l (U_{V_{t+tau}} - U_{V_t})) | u_{V_t} = u_state, v_t = v_state]."""
    if l < 0 or u_state <= 0 or v_state <= 0 or tau <= 0:
        raise ValidationError("need l >= 0, positive states and tau > 0")
    if l == 0:
        return 1.0
    from .chf import expect_over_V  # local import: chf builds on this module

    def u_part(horizon, times):
        return solve_U(spec, psiL=-l, m=0.0, cfg=cfg, horizon=horizon, keep_times=times)

    value = expect_over_V(spec, u_part, u_state, tau, v_state, nodes, M_terms, tol, cfg)
    return float(np.real(value))
