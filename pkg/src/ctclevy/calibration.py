"""Joint SPX/VIX calibration: quotes, parameter spaces, objective and optimizers.

The loss is the sum over markets of the mean squared relative implied
volatility error. Model IVs come from forward-normalised COS prices (SPX)
and from VIX call prices inverted with Black-76 against the model VIX
futures price.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import optimize, sparse

from .black import implied_vol_forward
from .cos import CosConfig, EuropeanOption, MarketFrame, price_surface
from .errors import CtcError, NoSolutionError, ValidationError
from .levy import KINDS, ModelSpec, from_config, to_config
from .montecarlo import SimPlan
from .riccati import SolverConfig
from .vix import (VixQuadrature, price_vix_option_exact, vix_call_fourier_ordinary,
                  vix_call_quadrature)

log = logging.getLogger(__name__)

NO_IV_PENALTY = 4.0          # squared relative error charged for a quote without model IV
FAILURE_RESIDUAL = 10.0      # relative error charged per quote when the pricer fails


# ---------------------------------------------------------------------------
# quotes


@dataclass(frozen=True)
class Quote:
    maturity: float
    moneyness: float          # K / F
    iv: float
    volume: float = 0.0


@dataclass(frozen=True)
class Frame:
    forward: float
    rate: float = 0.0


@dataclass
class QuoteSet:
    """Quotes of one date. Frames are keyed by maturity."""

    date: str
    spx: list[Quote] = field(default_factory=list)
    vix: list[Quote] = field(default_factory=list)
    spx_frames: dict[float, Frame] = field(default_factory=dict)
    vix_frames: dict[float, Frame] = field(default_factory=dict)

    def __post_init__(self):
        for market, quotes, frames in (("SPX", self.spx, self.spx_frames), ("VIX", self.vix, self.vix_frames)):
            for q in quotes:
                if not (q.iv > 0 and q.moneyness > 0 and q.maturity > 0):
                    raise ValidationError(f"{market} quote needs positive IV, moneyness and maturity: {q}")
                if market == "VIX" and q.maturity not in frames:
                    raise ValidationError(f"VIX quote at maturity {q.maturity} has no futures frame")

    @property
    def size(self) -> int:
        return len(self.spx) + len(self.vix)


# ---------------------------------------------------------------------------
# parameter spaces


@dataclass(frozen=True)
class ParamBound:
    name: str
    lower: float
    upper: float
    transform: str = "log"          # log | logit | identity

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper) and self.lower < self.upper):
            raise ValidationError(f"bounds of {self.name} must be finite with lower < upper")
        if self.transform not in ("log", "logit", "identity"):
            raise ValidationError(f"unknown transform {self.transform!r}")
        if self.transform == "log" and self.lower <= 0:
            raise ValidationError(f"log transform of {self.name} needs a positive lower bound")

    def forward(self, p: float) -> float:
        p = min(max(p, self.lower), self.upper)
        if self.transform == "log":
            return math.log(p)
        if self.transform == "logit":
            s = (p - self.lower) / (self.upper - self.lower)
            s = min(max(s, 1e-9), 1 - 1e-9)
            return math.log(s / (1 - s))
        return p

    def inverse(self, y: float) -> float:
        if self.transform == "log":
            return min(max(math.exp(y), self.lower), self.upper)
        if self.transform == "logit":
            return self.lower + (self.upper - self.lower) / (1 + math.exp(-y))
        return min(max(y, self.lower), self.upper)

    def box(self) -> tuple[float, float]:
        """Search box in transformed coordinates; it contains the image of every admissible value."""
        return self.forward(self.lower), self.forward(self.upper)


DEFAULT_BOUNDS = {
    "kappa_u": (1e-2, 60.0, "log"), "theta_u": (1e-4, 3.0, "log"), "sigma_u": (1e-3, 6.0, "log"),
    "eta_u": (1e-3, 50.0, "log"), "rho_u": (-1.0, 0.0, "logit"), "u0": (1e-4, 3.0, "log"),
    "kappa_v": (1e-2, 60.0, "log"), "theta_v": (1e-2, 10.0, "log"), "sigma_v": (1e-3, 6.0, "log"),
    "v0": (1e-3, 10.0, "log"), "C": (1e-4, 10.0, "log"), "G": (1e-2, 60.0, "log"),
    "M": (1.01, 100.0, "log"), "Y": (1.05, 1.95, "identity"),
}

FREE_PARAMS = {
    "Heston": ("kappa_u", "theta_u", "sigma_u", "rho_u", "u0"),
    "CompositeHeston": ("kappa_u", "theta_u", "sigma_u", "kappa_v", "sigma_v", "rho_u", "u0", "v0"),
    "JH": ("kappa_u", "theta_u", "eta_u", "C", "G", "M", "Y", "u0"),
    "CompositeJH": ("kappa_u", "theta_u", "eta_u", "kappa_v", "sigma_v", "C", "G", "M", "Y", "u0", "v0"),
}


@dataclass(frozen=True)
class ParamSpace:
    """Free parameters with bounds, fixed values and the structural/state split.

    ``fixed`` holds every model parameter that is not searched over; for
    composite kinds theta_v is fixed by default because rescaling the inner
    clock by a constant leaves the model law unchanged.
    """

    kind: str
    params: tuple[ParamBound, ...]
    fixed: Mapping[str, float]
    state: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown model kind {self.kind!r}")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValidationError("duplicate parameter names")
        if set(names) & set(self.fixed):
            raise ValidationError("a parameter cannot be both free and fixed")
        if not self.state <= set(names):
            raise ValidationError("state parameters must be free parameters")

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def structural(self) -> list[str]:
        return [n for n in self.names if n not in self.state]

    def encode(self, values: Mapping[str, float]) -> np.ndarray:
        return np.array([p.forward(float(values[p.name])) for p in self.params])

    def decode(self, y: Sequence[float]) -> dict[str, float]:
        return {p.name: p.inverse(float(v)) for p, v in zip(self.params, y)}

    def boxes(self) -> list[tuple[float, float]]:
        return [p.box() for p in self.params]

    def spec(self, values: Mapping[str, float]) -> ModelSpec:
        cfg = {"kind": self.kind, **self.fixed, **values}
        return from_config(cfg)

    def restrict(self, names: Sequence[str], values: Mapping[str, float]) -> "ParamSpace":
        """Space over ``names`` only; other free parameters fixed at ``values``."""
        keep = tuple(p for p in self.params if p.name in names)
        fixed = dict(self.fixed)
        fixed.update({p.name: float(values[p.name]) for p in self.params if p.name not in names})
        return ParamSpace(self.kind, keep, fixed, frozenset(self.state & set(names)))


def default_space(spec: ModelSpec, free: Sequence[str] | None = None) -> ParamSpace:
    """Default bounds around the parameters of ``spec``; its other values stay fixed."""
    cfg = to_config(spec)
    free = FREE_PARAMS[spec.kind] if free is None else tuple(free)
    params = tuple(ParamBound(n, *DEFAULT_BOUNDS[n]) for n in free)
    fixed = {k: float(v) for k, v in cfg.items() if k != "kind" and k not in free}
    if spec.kind in ("Heston", "JH"):
        fixed.pop("v0", None)
    state = frozenset(n for n in ("u0", "v0") if n in free)
    return ParamSpace(spec.kind, params, fixed, state)


def free_values(spec: ModelSpec, space: ParamSpace) -> dict[str, float]:
    cfg = to_config(spec)
    return {n: float(cfg[n]) for n in space.names}


# ---------------------------------------------------------------------------
# joint pricer


@dataclass(frozen=True)
class PricingConfig:
    cos: CosConfig = field(default_factory=lambda: CosConfig(
        N=128, M_terms=128, D=100, solver=SolverConfig(1 / 1000), residual_tol=1e-5))
    vix: VixQuadrature = field(default_factory=lambda: VixQuadrature(
        terms=48, nodes=32, u_nodes=200, solver=SolverConfig(1 / 1000)))
    vix_plan: SimPlan = field(default_factory=lambda: SimPlan(paths=20_000, seed=7))


@dataclass
class ModelIVs:
    spx: np.ndarray
    vix: np.ndarray
    vix_futures: dict[float, float]


class JointPricer:
    """Model implied volatilities for every quote of a QuoteSet."""

    def __init__(self, cfg: PricingConfig = PricingConfig()):
        self.cfg = cfg

    def spx_ivs(self, spec: ModelSpec, quotes: Sequence[Quote]) -> np.ndarray:
        if not quotes:
            return np.empty(0)
        # forward-normalised prices E[(S_T/F - k)^+] do not depend on rates
        opts = [EuropeanOption(q.moneyness, q.maturity, "call" if q.moneyness >= 1 else "put")
                for q in quotes]
        prices = price_surface(spec, MarketFrame(1.0, 0.0), opts, self.cfg.cos)
        out = np.full(len(quotes), np.nan)
        for i, (p, o) in enumerate(zip(prices, opts)):
            try:
                out[i] = implied_vol_forward(p, 1.0, o.strike, o.maturity, o.side == "call")
            except NoSolutionError:
                pass
        return out

    def vix_prices(self, spec: ModelSpec, strikes: np.ndarray, maturity: float) -> np.ndarray:
        """Undiscounted E[(VIX_T - K)^+]; entry 0 of ``strikes`` may be 0 for the futures."""
        if spec.u_layer.eta == 0:
            if spec.v_layer is None:
                return np.asarray(vix_call_fourier_ordinary(spec, strikes, maturity))
            return np.asarray(vix_call_quadrature(spec, strikes, maturity, 0.0, self.cfg.vix))
        return np.asarray(price_vix_option_exact(spec, strikes, maturity, self.cfg.vix_plan,
                                                 solver=self.cfg.vix.solver)[0])

    def vix_ivs(self, spec: ModelSpec, quotes: Sequence[Quote], frames: Mapping[float, Frame]):
        out = np.full(len(quotes), np.nan)
        futures = {}
        for T in sorted({q.maturity for q in quotes}):
            idx = [i for i, q in enumerate(quotes) if q.maturity == T]
            strikes = np.array([0.0] + [quotes[i].moneyness * frames[T].forward for i in idx])
            prices = self.vix_prices(spec, strikes, T)
            fut = float(prices[0])
            futures[T] = fut
            for i, p, K in zip(idx, prices[1:], strikes[1:]):
                try:
                    out[i] = implied_vol_forward(p, fut, K, T, True)
                except (NoSolutionError, ValidationError):
                    pass
        return out, futures

    def __call__(self, spec: ModelSpec, qs: QuoteSet) -> ModelIVs:
        spx = self.spx_ivs(spec, qs.spx)
        vix, fut = self.vix_ivs(spec, qs.vix, qs.vix_frames) if qs.vix else (np.empty(0), {})
        return ModelIVs(spx, vix, fut)


def relative_errors(model: np.ndarray, quotes: Sequence[Quote]) -> np.ndarray:
    market = np.array([q.iv for q in quotes])
    return (model - market) / market


def loss_terms(model: ModelIVs, qs: QuoteSet) -> tuple[float, float, int]:
    """Per-market mean squared relative errors and the number of no-IV quotes."""
    terms = []
    flagged = 0
    for iv, quotes in ((model.spx, qs.spx), (model.vix, qs.vix)):
        if not quotes:
            terms.append(0.0)
            continue
        rel = relative_errors(iv, quotes)
        bad = ~np.isfinite(rel)
        flagged += int(bad.sum())
        sq = np.where(bad, NO_IV_PENALTY, rel * rel)
        terms.append(float(np.mean(sq)))
    return terms[0], terms[1], flagged


def residual_vector(model: ModelIVs, qs: QuoteSet) -> np.ndarray:
    """Residuals whose squared norm is the loss."""
    parts = []
    for iv, quotes in ((model.spx, qs.spx), (model.vix, qs.vix)):
        if not quotes:
            continue
        rel = relative_errors(iv, quotes)
        rel = np.where(np.isfinite(rel), rel, math.sqrt(NO_IV_PENALTY))
        parts.append(rel / math.sqrt(len(quotes)))
    return np.concatenate(parts) if parts else np.empty(0)


def objective(values: Mapping[str, float], qs: QuoteSet, pricer: JointPricer,
              space: ParamSpace) -> float:
    """Loss at the free parameter ``values``; +inf if the pricer fails."""
    try:
        model = pricer(space.spec(values), qs)
    except CtcError as exc:
        log.debug("pricer failed at %s: %s", values, exc)
        return math.inf
    spx, vix, _ = loss_terms(model, qs)
    return spx + vix


# ---------------------------------------------------------------------------
# optimisation


class _BudgetExhausted(Exception):
    pass


class _Tracker:
    """Counts evaluations, records the best point and enforces the budget."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], budget: int):
        self.fn = fn
        self.budget = budget
        self.evals = 0
        self.best_loss = math.inf
        self.best_y: np.ndarray | None = None
        self.trace: list[float] = []

    def residuals(self, y) -> np.ndarray:
        if self.evals >= self.budget:
            raise _BudgetExhausted
        self.evals += 1
        r = self.fn(np.asarray(y, dtype=float))
        loss = float(r @ r) if np.all(np.isfinite(r)) else math.inf
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_y = np.array(y, dtype=float)
        self.trace.append(self.best_loss)
        return r

    def loss(self, y) -> float:
        r = self.residuals(y)
        return float(r @ r) if np.all(np.isfinite(r)) else 1e10


@dataclass
class FitResult:
    y: np.ndarray
    loss: float
    evaluations: int
    converged: bool
    trace: list[float]
    message: str
    correlated: list[tuple[int, int, float]]
    jacobian: np.ndarray | None = None


def correlated_pairs(jac: np.ndarray, threshold: float = 0.99):
    """Parameter pairs whose estimates are nearly collinear under the Gauss-Newton metric."""
    if jac is None or jac.size == 0:
        return []
    jtj = jac.T @ jac
    n = jtj.shape[0]
    scale = np.sqrt(np.maximum(np.diag(jtj), 1e-300))
    normed = jtj / np.outer(scale, scale)
    out = []
    eigval, eigvec = np.linalg.eigh(normed)
    if eigval[0] < 1e-10 * max(eigval[-1], 1e-300):
        # near-null direction: pair up the parameters that carry it
        v = eigvec[:, 0]
        idx = np.argsort(-np.abs(v))[:2]
        out.append((int(min(idx)), int(max(idx)), -1.0))
        return out
    cov = np.linalg.inv(normed)
    sd = np.sqrt(np.diag(cov))
    corr = cov / np.outer(sd, sd)
    for i in range(n):
        for j in range(i + 1, n):
            if abs(corr[i, j]) > threshold:
                out.append((i, j, float(corr[i, j])))
    return out


def minimize_residuals(fn: Callable[[np.ndarray], np.ndarray], y0: np.ndarray,
                       boxes: Sequence[tuple[float, float]], budget: int = 20_000,
                       mode: str = "local", seed: int = 0, jac_sparsity=None,
                       ftol: float = 1e-12, xtol: float = 1e-10) -> FitResult:
    """Minimise ||fn(y)||^2 over the box within ``budget`` evaluations of ``fn``.

    ``local`` runs a trust-region least-squares solve from ``y0``; ``global``
    runs seeded differential evolution (population 15 x dim) and polishes
    with Nelder-Mead. The best point seen is returned, so the loss never
    exceeds the loss at ``y0``.
    """
    if mode not in ("local", "global"):
        raise ValidationError("mode must be 'local' or 'global'")
    lo = np.array([b[0] for b in boxes])
    hi = np.array([b[1] for b in boxes])
    y0 = np.clip(np.asarray(y0, dtype=float), lo, hi)
    tr = _Tracker(fn, budget)
    converged = False
    message = ""
    jac = None
    try:
        tr.residuals(y0)
        if mode == "local":
            res = optimize.least_squares(tr.residuals, y0, bounds=(lo, hi), method="trf",
                                         x_scale="jac", ftol=ftol, xtol=xtol, gtol=1e-12,
                                         jac_sparsity=jac_sparsity, max_nfev=budget)
            converged = res.status > 0
            message = res.message
            jac = res.jac.toarray() if sparse.issparse(res.jac) else np.asarray(res.jac)
        else:
            remaining = budget - tr.evals
            dim = len(y0)
            gens = max(int(0.7 * remaining / (15 * dim)) - 1, 1)
            de = optimize.differential_evolution(tr.loss, list(zip(lo, hi)), popsize=15, seed=seed,
                                                 maxiter=gens, polish=False, tol=1e-10, init="latinhypercube",
                                                 x0=y0)
            start = tr.best_y if tr.best_y is not None else de.x
            nm = optimize.minimize(tr.loss, start, method="Nelder-Mead",
                                   options={"maxfev": max(budget - tr.evals, 1), "xatol": xtol,
                                            "fatol": ftol, "adaptive": True})
            converged = bool(nm.success)
            message = str(nm.message)
    except _BudgetExhausted:
        message = f"evaluation budget of {budget} exhausted"
        converged = False
    y = tr.best_y if tr.best_y is not None else y0
    return FitResult(y, tr.best_loss, tr.evals, converged, tr.trace, message,
                     correlated_pairs(jac) if jac is not None else [], jac)


# ---------------------------------------------------------------------------
# daily and two-step calibration


@dataclass
class CalibrationResult:
    params: dict[str, float]
    spec: ModelSpec
    loss: float
    evaluations: int
    converged: bool
    loss_trace: list[float]
    message: str
    correlated: list[tuple[str, str, float]]
    model_ivs: ModelIVs | None = None
    quotes: QuoteSet | None = None
    penalised: int = 0


def _failure_residuals(qs: QuoteSet) -> np.ndarray:
    return np.full(qs.size, FAILURE_RESIDUAL) / math.sqrt(max(qs.size, 1))


def _daily_residuals(space: ParamSpace, qs: QuoteSet, pricer: JointPricer):
    def fn(y):
        try:
            model = pricer(space.spec(space.decode(y)), qs)
        except CtcError as exc:
            log.debug("pricer failed: %s", exc)
            return _failure_residuals(qs)
        return residual_vector(model, qs)
    return fn


def _finish(space: ParamSpace, qs: QuoteSet, pricer: JointPricer, fit: FitResult) -> CalibrationResult:
    params = space.decode(fit.y)
    spec = space.spec(params)
    model = None
    flagged = 0
    try:
        model = pricer(spec, qs)
        flagged = loss_terms(model, qs)[2]
    except CtcError:
        pass
    names = space.names
    corr = [(names[i], names[j], c) for i, j, c in fit.correlated]
    return CalibrationResult(params, spec, fit.loss, fit.evaluations, fit.converged, fit.trace,
                             fit.message, corr, model, qs, flagged)


def calibrate_daily(quotes: QuoteSet, space: ParamSpace, init: Mapping[str, float], budget: int = 20_000,
                    mode: str = "local", seed: int = 0,
                    pricer: JointPricer | None = None) -> CalibrationResult:
    """Fit the free parameters of ``space`` to one day of quotes."""
    pricer = pricer or JointPricer()
    fn = _daily_residuals(space, quotes, pricer)
    fit = minimize_residuals(fn, space.encode(init), space.boxes(), budget, mode, seed)
    if not fit.converged:
        log.warning("calibration stopped without convergence: %s", fit.message)
    return _finish(space, quotes, pricer, fit)


@dataclass
class TwoStepResult:
    structural: dict[str, float]
    window_states: list[dict[str, float]]
    window_loss: float
    window: list[CalibrationResult]
    out_of_sample: list[CalibrationResult]
    evaluations: int
    converged: bool


def calibrate_two_step(window: Sequence[QuoteSet], oos: Sequence[QuoteSet], space: ParamSpace,
                       init: Mapping[str, float], budget: int = 20_000, mode: str = "local",
                       seed: int = 0, pricer: JointPricer | None = None,
                       state_init: Sequence[Mapping[str, float]] | None = None) -> TwoStepResult:
    """Shared structural parameters over ``window``, then per-date states out of sample.

    Step 1 minimises the sum of daily losses over the structural parameters
    and one state vector per window date. Step 2 fixes the structural fit
    and calibrates the states of each out-of-sample date.
    """
    if not window:
        raise ValidationError("the in-sample window needs at least one date")
    pricer = pricer or JointPricer()
    struct = space.structural
    states = [n for n in space.names if n in space.state]
    by_name = {p.name: p for p in space.params}
    n_s, n_v, n_d = len(struct), len(states), len(window)
    state_init = state_init or [init] * n_d

    def split(y):
        base = {n: by_name[n].inverse(v) for n, v in zip(struct, y[:n_s])}
        per = []
        for d in range(n_d):
            chunk = y[n_s + d * n_v: n_s + (d + 1) * n_v]
            per.append({n: by_name[n].inverse(v) for n, v in zip(states, chunk)})
        return base, per

    def fn(y):
        base, per = split(y)
        parts = []
        for qs, st in zip(window, per):
            try:
                model = pricer(space.spec({**base, **st}), qs)
                parts.append(residual_vector(model, qs))
            except CtcError as exc:
                log.debug("pricer failed: %s", exc)
                parts.append(_failure_residuals(qs))
        return np.concatenate(parts)

    y0 = np.concatenate([[by_name[n].forward(init[n]) for n in struct]]
                        + [[by_name[n].forward(si[n]) for n in states] for si in state_init])
    boxes = [by_name[n].box() for n in struct] + [by_name[n].box() for n in states] * n_d
    rows = [qs.size for qs in window]
    pattern = sparse.lil_matrix((sum(rows), len(y0)), dtype=int)
    start = 0
    for d, r in enumerate(rows):
        pattern[start:start + r, :n_s] = 1
        pattern[start:start + r, n_s + d * n_v: n_s + (d + 1) * n_v] = 1
        start += r
    fit = minimize_residuals(fn, y0, boxes, budget, mode, seed,
                             jac_sparsity=pattern if mode == "local" else None)
    base, per = split(fit.y)
    window_results = []
    for qs, st in zip(window, per):
        sub = space.restrict(states, {**base, **st})
        single = FitResult(sub.encode(st), math.nan, 0, fit.converged, [], fit.message, [])
        res = _finish(sub, qs, pricer, single)
        res.loss = sum(loss_terms(res.model_ivs, qs)[:2]) if res.model_ivs else math.inf
        window_results.append(res)
    oos_results = []
    evals = fit.evaluations
    for d, qs in enumerate(oos):
        sub = space.restrict(states, {**base, **per[-1]})
        res = calibrate_daily(qs, sub, per[-1], budget, mode, seed, pricer)
        evals += res.evaluations
        oos_results.append(res)
    return TwoStepResult(base, per, fit.loss, window_results, oos_results, evals, fit.converged)


# ---------------------------------------------------------------------------
# synthetic data


SPX_GRID = {0.02: [1.0], 0.05: [0.9, 1.0, 1.1], 0.1: [0.8, 0.9, 1.0, 1.1], 0.15: [0.8, 0.9, 1.0, 1.1],
            0.2: [0.7, 0.8, 0.9, 1.0, 1.1, 1.2], 0.3: [0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2],
            0.5: [0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2], 0.7: [0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2],
            0.9: [0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3]}
VIX_GRID = {0.1: [0.9, 1.0, 1.1, 1.25, 1.5], 0.2: [0.9, 1.0, 1.1, 1.25, 1.5]}


def synthetic_quotes(spec: ModelSpec, spx_grid: Mapping[float, Sequence[float]] = SPX_GRID,
                     vix_grid: Mapping[float, Sequence[float]] = VIX_GRID, date: str = "2000-01-03",
                     pricer: JointPricer | None = None, forward: float = 100.0) -> QuoteSet:
    """QuoteSet whose market IVs are the model IVs of ``spec``."""
    pricer = pricer or JointPricer()
    spx = [Quote(T, k, 1.0) for T, ks in spx_grid.items() for k in ks]
    vix = [Quote(T, m, 1.0) for T, ms in vix_grid.items() for m in ms]
    spx_frames = {T: Frame(forward) for T in spx_grid}
    fut = {T: float(pricer.vix_prices(spec, np.array([0.0]), T)[0]) for T in vix_grid}
    vix_frames = {T: Frame(f) for T, f in fut.items()}
    shell = QuoteSet(date, spx, vix, spx_frames, vix_frames)
    model = pricer(spec, shell)
    if np.any(~np.isfinite(model.spx)) or np.any(~np.isfinite(model.vix)):
        raise ValidationError("synthetic grid contains quotes without a model implied volatility")
    shell.spx = [replace(q, iv=float(v)) for q, v in zip(spx, model.spx)]
    shell.vix = [replace(q, iv=float(v)) for q, v in zip(vix, model.vix)]
    return shell


def perturb(values: Mapping[str, float], rel: float, rng: np.random.Generator,
            space: ParamSpace | None = None) -> dict[str, float]:
    """Multiply each value by 1 +/- rel (random sign), clipped to the bounds of ``space``."""
    out = {}
    for k, v in values.items():
        new = v * (1 + rel * rng.choice([-1.0, 1.0]))
        if space is not None:
            b = {p.name: p for p in space.params}[k]
            new = min(max(new, b.lower), b.upper)
        out[k] = new
    return out
