"""Euler Monte Carlo for the composite time-change model.

Paths are simulated in the layered order v -> u on the V clock -> L on the
U clock. Random numbers come from counter-based Philox streams keyed by
(seed, block index): the draws of path i depend only on the seed and the
block containing i, never on how blocks are scheduled.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .cos import EuropeanOption, MarketFrame
from .errors import ValidationError
from .levy import ModelSpec, psi_levy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimPlan:
    paths: int = 100_000
    seed: int = 20240601
    euler_step: float = 1e-4
    gamma_terms: int = 10
    block: int = 8192

    def __post_init__(self):
        if self.paths < 2 or self.block < 1:
            raise ValidationError("need at least two paths and a positive block size")
        if not self.euler_step > 0:
            raise ValidationError("euler_step must be > 0")
        if self.euler_step > 1e-3:
            log.warning("Euler step %.3g exceeds 1e-3; discretisation bias may dominate",
                        self.euler_step)

    def blocks(self) -> Iterator[tuple[int, int, np.random.Generator]]:
        """Yield (first path, block size, generator) for each block of paths."""
        for index, start in enumerate(range(0, self.paths, self.block)):
            seq = np.random.SeedSequence(self.seed, spawn_key=(index,))
            yield start, min(self.block, self.paths - start), np.random.Generator(np.random.Philox(seq))


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based generator for a labelled sub-task."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def summarize(blocks_sum: Sequence[np.ndarray], blocks_sq: Sequence[np.ndarray], n: int):
    """Mean and standard error from per-block sums (deterministic reduction order)."""
    s = np.sum(np.array(blocks_sum), axis=0)
    q = np.sum(np.array(blocks_sq), axis=0)
    mean = s / n
    var = np.maximum(q / n - mean * mean, 0.0) * n / (n - 1)
    return mean, np.sqrt(var / n)


def _check_spec(spec: ModelSpec):
    if spec.rho_v != 0:
        raise ValidationError("Euler simulation requires rho_v = 0")
    if spec.cgmy is not None or spec.u_layer.eta != 0:
        raise ValidationError("Euler simulation supports Brownian bases without co-jumps only")
    if not -1 <= spec.rho_u <= 0:
        raise ValidationError("Euler simulation expects rho_u in [-1, 0]")


def simulate_log_returns(spec: ModelSpec, maturities: Sequence[float], n: int, step: float,
                         rng: np.random.Generator, chunk: int = 64):
    """Euler paths of X at the given maturities; returns array (len(maturities), n).

    Also returns the activity states (u on the V clock, v) at the last maturity.
    """
    _check_spec(spec)
    mats = np.asarray(maturities, dtype=float)
    marks = np.rint(mats / step).astype(int)
    if np.any(np.abs(marks * step - mats) > 1e-9 * np.maximum(mats, 1)):
        raise ValidationError("maturities must be multiples of the Euler step")
    ul, vl = spec.u_layer, spec.v_layer
    sigma = spec.sigma
    drift = -float(np.real(psi_levy(spec, -1j)))        # -Psi(-i); -sigma^2/2 here
    rho = spec.rho_u
    rho_c = math.sqrt(1 - rho * rho)
    v = np.full(n, spec.v0)
    u = np.full(n, spec.u0)
    x = np.zeros(n)
    out = np.empty((len(mats), n))
    total = int(marks.max())
    done = 0
    sq = math.sqrt(step)
    while done < total:
        k = min(chunk, total - done)
        draws = rng.standard_normal((k, 3, n))
        for z in draws:
            if vl is None:
                dV = step
                sdV = sq
            else:
                vp = np.maximum(v, 0.0)
                dV = vp * step
                sdV = np.sqrt(vp) * sq
                v = v + vl.kappa * (vl.theta - vp) * step + vl.sigma * sdV * z[0]
            up = np.maximum(u, 0.0)
            dU = up * dV
            sdU = np.sqrt(up) * sdV
            u = u + ul.kappa * (ul.theta - up) * dV + ul.sigma * sdU * z[1]
            x = x + drift * dU + sigma * sdU * (rho * z[1] + rho_c * z[2])
            done += 1
            hit = np.nonzero(marks == done)[0]
            for i in hit:
                out[i] = x
    return out, (u, v)


def euler_mc_surface(spec: ModelSpec, frame: MarketFrame, options: Sequence[EuropeanOption],
                     plan: SimPlan):
    """Discounted payoff means and standard errors for all options from shared paths."""
    options = list(options)
    mats = sorted({o.maturity for o in options})
    row = {t: i for i, t in enumerate(mats)}
    sums, sqs = [], []
    for _, n, rng in plan.blocks():
        x, _ = simulate_log_returns(spec, mats, n, plan.euler_step, rng)
        pay = np.empty((len(options), n))
        for j, o in enumerate(options):
            s_t = frame.spot * np.exp(frame.rate * o.maturity + x[row[o.maturity]])
            intrinsic = s_t - o.strike if o.side == "call" else o.strike - s_t
            pay[j] = math.exp(-frame.rate * o.maturity) * np.maximum(intrinsic, 0.0)
        sums.append(pay.sum(axis=1))
        sqs.append((pay * pay).sum(axis=1))
    return summarize(sums, sqs, plan.paths)


def euler_mc_european(spec: ModelSpec, frame: MarketFrame, option: EuropeanOption, plan: SimPlan):
    mean, se = euler_mc_surface(spec, frame, [option], plan)
    return float(mean[0]), float(se[0])


def euler_mc_chf(spec: ModelSpec, m: float, t: float, plan: SimPlan):
    """Monte Carlo estimate of E[exp(i m X_t)] with standard errors of real/imag parts."""
    sums, sqs = [], []
    for _, n, rng in plan.blocks():
        x, _ = simulate_log_returns(spec, [t], n, plan.euler_step, rng)
        e = np.exp(1j * m * x[0])
        sums.append(np.array([e.real.sum(), e.imag.sum()]))
        sqs.append(np.array([(e.real ** 2).sum(), (e.imag ** 2).sum()]))
    mean, se = summarize(sums, sqs, plan.paths)
    return complex(mean[0], mean[1]), complex(se[0], se[1])


def euler_clock_paths(spec: ModelSpec, horizon: float, n: int, step: float, rng: np.random.Generator,
                      u_start=None, v_start=None, chunk: int = 64):
    """Euler paths of (u on the V clock, v, U_V increment) over ``horizon``.

    Leverage does not enter; used for VIX oracles and increment checks.
    """
    ul, vl = spec.u_layer, spec.v_layer
    if vl is None:
        raise ValidationError("clock simulation needs a v-layer")
    v = np.full(n, spec.v0 if v_start is None else v_start, dtype=float)
    u = np.full(n, spec.u0 if u_start is None else u_start, dtype=float)
    clock = np.zeros(n)
    total = max(int(round(horizon / step)), 1)
    sq = math.sqrt(step)
    done = 0
    while done < total:
        k = min(chunk, total - done)
        draws = rng.standard_normal((k, 2, n))
        for z in draws:
            vp = np.maximum(v, 0.0)
            dV = vp * step
            sdV = np.sqrt(vp) * sq
            v = v + vl.kappa * (vl.theta - vp) * step + vl.sigma * sdV * z[0]
            up = np.maximum(u, 0.0)
            clock += up * dV
            u = u + ul.kappa * (ul.theta - up) * dV + ul.sigma * np.sqrt(up) * sdV * z[1]
        done += k
    return np.maximum(u, 0.0), np.maximum(v, 0.0), clock
