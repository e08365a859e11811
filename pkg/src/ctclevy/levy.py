"""Characteristic exponents of the base Levy processes and the model catalog.

Two base processes are supported: a Brownian motion with volatility ``sigma``
and a CGMY pure-jump process whose negative jumps, mirrored, drive the
activity rate ``u`` (the co-jump construction). All exponents follow the
convention ``E[exp(i m L_t)] = exp(t * psi(m))`` and accept numpy arrays.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Union

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import DomainError, ValidationError

log = logging.getLogger(__name__)

KINDS = ("Heston", "CompositeHeston", "JH", "CompositeJH")
CONFIG_KEYS = (
    "kappa_u", "theta_u", "sigma_u", "eta_u", "kappa_v", "theta_v", "sigma_v",
    "rho_u", "rho_v", "u0", "v0", "sigma", "C", "G", "M", "Y", "kind",
)


@dataclass(frozen=True)
class BrownianExponent:
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValidationError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class CgmySpec:
    C: float
    G: float
    M: float
    Y: float

    def __post_init__(self):
        if not self.C > 0:
            raise ValidationError(f"CGMY C must be > 0, got {self.C}")
        if not (self.G >= 0 and self.M >= 0):
            raise ValidationError("CGMY G and M must be >= 0")
        if not 0 < self.Y < 2:
            raise ValidationError(f"CGMY Y must lie in (0, 2), got {self.Y}")
        if abs(self.Y - 1.0) < 1e-6:
            raise ValidationError("CGMY Y = 1 is excluded (pole of Gamma(-Y))")
        if not self.M > 1:
            raise ValidationError(f"CGMY M must exceed 1 so exp(J) is integrable, got {self.M}")

    @property
    def scale(self) -> float:
        return self.C * gamma_fn(-self.Y)


@dataclass(frozen=True)
class CoJumpSpec:
    """CGMY process J together with J^u, the mirror image of its negative jumps."""

    base: CgmySpec


@dataclass(frozen=True)
class ULayer:
    kappa: float
    theta: float
    sigma: float = 0.0
    eta: float = 0.0


@dataclass(frozen=True)
class VLayer:
    kappa: float
    theta: float
    sigma: float


Base = Union[BrownianExponent, CoJumpSpec]


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    base: Base
    u_layer: ULayer
    u0: float
    v_layer: VLayer | None = None
    v0: float = 1.0
    rho_u: float = 0.0
    rho_v: float = 0.0
    label: str = field(default="", compare=False)

    def __post_init__(self):
        validate(self)

    @property
    def composite(self) -> bool:
        return self.v_layer is not None

    @property
    def sigma(self) -> float:
        return self.base.sigma if isinstance(self.base, BrownianExponent) else 0.0

    @property
    def cgmy(self) -> CgmySpec | None:
        return self.base.base if isinstance(self.base, CoJumpSpec) else None


def validate(spec: ModelSpec) -> None:
    if spec.kind not in KINDS:
        raise ValidationError(f"unknown model kind {spec.kind!r}; expected one of {KINDS}")
    ul, vl = spec.u_layer, spec.v_layer
    heston = spec.kind in ("Heston", "CompositeHeston")
    if heston and not isinstance(spec.base, BrownianExponent):
        raise ValidationError(f"{spec.kind} requires a Brownian base")
    if not heston and not isinstance(spec.base, CoJumpSpec):
        raise ValidationError(f"{spec.kind} requires a CGMY co-jump base")
    if spec.kind.startswith("Composite") != (vl is not None):
        raise ValidationError(f"{spec.kind}: v-layer must be {'present' if vl is None else 'degenerate'}")
    if heston and ul.eta != 0:
        raise ValidationError("Heston kinds force eta_u = 0")
    if not heston and (ul.sigma != 0 or spec.rho_u != 0):
        raise ValidationError("JH kinds force sigma_u = 0 and rho_u = 0")
    if ul.kappa * ul.theta < 0 or ul.sigma < 0 or ul.eta < 0:
        raise ValidationError("u-layer needs kappa*theta >= 0, sigma_u >= 0, eta_u >= 0")
    if vl is not None and (vl.kappa * vl.theta < 0 or vl.sigma < 0):
        raise ValidationError("v-layer needs kappa*theta >= 0 and sigma_v >= 0")
    if not (spec.u0 > 0 and spec.v0 > 0):
        raise ValidationError("initial activity rates u0, v0 must be > 0")
    if spec.rho_u ** 2 + spec.rho_v ** 2 > 1 + 1e-12:
        raise ValidationError("rho_u^2 + rho_v^2 must not exceed 1")
    for name, value in vars(ul).items():
        if not math.isfinite(value):
            raise ValidationError(f"u-layer {name} is not finite")


def check_feller(spec: ModelSpec) -> dict[str, bool]:
    """Report whether 2*kappa*theta > sigma**2 holds for each CIR layer.

    The condition is stated in some sources with sigma instead of sigma**2;
    the squared form is the dimensionally consistent one and is what we test.
    A failing layer is only logged: exact samplers and Fourier pricers remain
    valid when the boundary is attainable.
    """
    out = {}
    layers = {"u": spec.u_layer}
    if spec.v_layer is not None:
        layers["v"] = spec.v_layer
    for name, layer in layers.items():
        if layer.sigma == 0:
            continue
        ok = 2 * layer.kappa * layer.theta > layer.sigma ** 2
        out[name] = ok
        if not ok:
            log.warning(
                "%s-layer violates 2*kappa*theta > sigma^2 (%.4g <= %.4g); the "
                "alternative reading 2*kappa*theta > sigma is %s",
                name, 2 * layer.kappa * layer.theta, layer.sigma ** 2,
                "satisfied" if 2 * layer.kappa * layer.theta > layer.sigma else "also violated",
            )
    return out


# ---------------------------------------------------------------------------
# exponents


def _power_branch(z, name):
    z = np.asarray(z, dtype=complex)
    if np.any(z.real < 0):
        raise DomainError(f"argument crosses the analyticity bound set by {name}")
    return z


def _negative_branch(cg: CgmySpec, z):
    """Exponent of the negative-jump half of J at frequency ``z``."""
    arg = _power_branch(cg.G + 1j * np.asarray(z, dtype=complex), "G (Im m < G)")
    return cg.scale * (arg ** cg.Y - cg.G ** cg.Y)


def _positive_branch(cg: CgmySpec, z):
    arg = _power_branch(cg.M - 1j * np.asarray(z, dtype=complex), "M (Im m > -M)")
    return cg.scale * (arg ** cg.Y - cg.M ** cg.Y)


def cgmy_exponent(cg: CgmySpec, m):
    return _positive_branch(cg, m) + _negative_branch(cg, m)


def psi_levy(spec: ModelSpec, m):
    """Exponent of sigma*W + J before the martingale drift correction."""
    m = np.asarray(m, dtype=complex)
    out = -0.5 * spec.sigma ** 2 * m * m
    if spec.cgmy is not None:
        out = out + cgmy_exponent(spec.cgmy, m)
    return out


def psi_base(spec: ModelSpec, m):
    """Exponent of the drift-corrected base process; exp(L_t) has unit mean."""
    m = np.asarray(m, dtype=complex)
    drift = psi_levy(spec, -1j)
    out = -1j * m * drift + psi_levy(spec, m)
    return out if out.ndim else complex(out)


def psi_joint(spec: CoJumpSpec, m, x):
    """Joint exponent of (J, J^u): E exp(i m J_1 + i x J^u_1).

    A negative jump y of J is a jump -y of J^u, so the negative branch is
    evaluated at m - x.
    """
    cg = spec.base
    m = np.asarray(m, dtype=complex)
    x = np.asarray(x, dtype=complex)
    out = _positive_branch(cg, m) + _negative_branch(cg, m - x)
    return out if out.ndim else complex(out)


def psi_ju_Q(spec: CoJumpSpec, m, x):
    """Exponent of J^u under the leverage-neutral measure indexed by m."""
    cg = spec.base
    m = np.asarray(m, dtype=complex)
    x = np.asarray(x, dtype=complex)
    out = _negative_branch(cg, m - x) - _negative_branch(cg, m)
    return out if out.ndim else complex(out)


# ---------------------------------------------------------------------------
# moments used by the VIX formulas


def mean_jump(spec: ModelSpec) -> float:
    """E[J_1] implied by the closed-form CGMY exponent."""
    cg = spec.cgmy
    if cg is None:
        return 0.0
    return cg.C * gamma_fn(1 - cg.Y) * (cg.M ** (cg.Y - 1) - cg.G ** (cg.Y - 1))


def mean_ju(spec: ModelSpec) -> float:
    """E[J^u_1]; negative for Y > 1 because the closed form carries compensation."""
    cg = spec.cgmy
    if cg is None:
        return 0.0
    return cg.C * gamma_fn(1 - cg.Y) * cg.G ** (cg.Y - 1)


def var_ju(spec: ModelSpec) -> float:
    cg = spec.cgmy
    if cg is None:
        return 0.0
    return cg.C * gamma_fn(2 - cg.Y) * cg.G ** (cg.Y - 2)


def levy_drift_scale(spec: ModelSpec) -> float:
    """-2 E[L_1] = 2 (Psi(-i) - E[J_1]); equals 1 for the unit Brownian base."""
    return 2.0 * (psi_levy(spec, -1j).real - mean_jump(spec))


def composite_rate_u(spec: ModelSpec) -> float:
    """m_u = eta_u E[J^u_1] - kappa_u, the mean-reversion rate of u with jumps."""
    return spec.u_layer.eta * mean_ju(spec) - spec.u_layer.kappa


# ---------------------------------------------------------------------------
# flat configuration


def to_config(spec: ModelSpec) -> dict[str, object]:
    ul = spec.u_layer
    cfg: dict[str, object] = {
        "kind": spec.kind,
        "kappa_u": ul.kappa, "theta_u": ul.theta, "sigma_u": ul.sigma, "eta_u": ul.eta,
        "rho_u": spec.rho_u, "rho_v": spec.rho_v, "u0": spec.u0, "v0": spec.v0,
        "sigma": spec.sigma,
    }
    if spec.v_layer is not None:
        cfg.update(kappa_v=spec.v_layer.kappa, theta_v=spec.v_layer.theta, sigma_v=spec.v_layer.sigma)
    if spec.cgmy is not None:
        cg = spec.cgmy
        cfg.update(C=cg.C, G=cg.G, M=cg.M, Y=cg.Y)
    return cfg


def from_config(cfg: Mapping[str, object]) -> ModelSpec:
    unknown = set(cfg) - set(CONFIG_KEYS)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    kind = str(cfg.get("kind", ""))
    if kind not in KINDS:
        raise ValidationError(f"config 'kind' must be one of {KINDS}, got {kind!r}")

    def num(key, default=None):
        if key not in cfg:
            if default is None:
                raise ValidationError(f"config key {key!r} is required for kind {kind}")
            return float(default)
        try:
            return float(cfg[key])
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"config key {key!r} is not numeric: {cfg[key]!r}") from exc

    if kind in ("Heston", "CompositeHeston"):
        base: Base = BrownianExponent(num("sigma", 1.0))
        ul = ULayer(num("kappa_u"), num("theta_u"), num("sigma_u"), num("eta_u", 0.0))
    else:
        base = CoJumpSpec(CgmySpec(num("C"), num("G"), num("M"), num("Y")))
        ul = ULayer(num("kappa_u"), num("theta_u"), num("sigma_u", 0.0), num("eta_u"))
    vl = None
    if kind.startswith("Composite"):
        vl = VLayer(num("kappa_v"), num("theta_v"), num("sigma_v"))
    return ModelSpec(
        kind=kind, base=base, u_layer=ul, u0=num("u0"), v_layer=vl,
        v0=num("v0", 1.0), rho_u=num("rho_u", 0.0), rho_v=num("rho_v", 0.0),
    )


def load_config(path: str | Path) -> ModelSpec:
    """Read a model from JSON or from ``key = value`` lines (``#`` comments)."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        raw = json.loads(text)
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            raw[key] = value
    spec = from_config(raw)
    check_feller(spec)
    return spec


def dump_config(spec: ModelSpec) -> str:
    return "".join(f"{k} = {v!r}\n" if isinstance(v, float) else f"{k} = {v}\n"
                   for k, v in to_config(spec).items())


# ---------------------------------------------------------------------------
# catalog


def heston(kappa_u, theta_u, sigma_u, rho_u, u0, sigma=1.0) -> ModelSpec:
    return ModelSpec("Heston", BrownianExponent(sigma), ULayer(kappa_u, theta_u, sigma_u), u0,
                     rho_u=rho_u)


def composite_heston(kappa_u, theta_u, sigma_u, kappa_v, theta_v, sigma_v, rho_u, u0, v0,
                     sigma=1.0) -> ModelSpec:
    return ModelSpec("CompositeHeston", BrownianExponent(sigma), ULayer(kappa_u, theta_u, sigma_u),
                     u0, VLayer(kappa_v, theta_v, sigma_v), v0, rho_u=rho_u)


def jh(kappa_u, theta_u, eta_u, C, G, M, Y, u0) -> ModelSpec:
    return ModelSpec("JH", CoJumpSpec(CgmySpec(C, G, M, Y)), ULayer(kappa_u, theta_u, 0.0, eta_u), u0)


def composite_jh(kappa_u, theta_u, eta_u, kappa_v, theta_v, sigma_v, C, G, M, Y, u0, v0) -> ModelSpec:
    return ModelSpec("CompositeJH", CoJumpSpec(CgmySpec(C, G, M, Y)),
                     ULayer(kappa_u, theta_u, 0.0, eta_u), u0, VLayer(kappa_v, theta_v, sigma_v), v0)


# Parameter sets used throughout the tests and examples.
REFERENCE_COMPOSITE_HESTON = dict(kappa_u=6.0, theta_u=0.08, sigma_u=1.5, kappa_v=3.0, theta_v=1.5,
                                  sigma_v=0.5, rho_u=-0.5, u0=0.02, v0=1.3)
CALIBRATED = {
    "Heston": dict(kappa_u=14.3761, theta_u=0.0750, sigma_u=1.9859, rho_u=-0.7126, u0=0.0384),
    "CompositeHeston": dict(kappa_u=10.1081, theta_u=0.1646, sigma_u=1.9973, kappa_v=2.7114,
                            theta_v=1.0908, sigma_v=0.4124, rho_u=-0.6891, u0=0.0484, v0=1.2070),
    "JH": dict(kappa_u=2.7048, theta_u=0.5105, eta_u=4.1362, C=0.2213, G=2.2288, M=22.4491,
               Y=1.6166, u0=0.1023),
    "CompositeJH": dict(kappa_u=3.9423, theta_u=0.4782, eta_u=7.2706, kappa_v=4.4931, theta_v=0.9224,
                        sigma_v=0.4194, C=0.1071, G=3.4883, M=24.8861, Y=1.6975, u0=0.0720,
                        v0=1.5115),
}


def catalog(kind: str) -> ModelSpec:
    """Model of the given kind with its published calibrated parameters."""
    return from_config({"kind": kind, **CALIBRATED[kind]})
