"""Calibration error metrics: RMSRE, RMSE/MAE, bucketed tables, ATM IV, skew, near-money
daily RMSRE and Newey-West t statistics.

All functions work on ``IvRow`` records (one per quote), so they are
invariant to quote order. Quotes without a model IV are excluded from the
error metrics and counted separately.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import UndefinedStatisticError, ValidationError

DAYS = 365.0

SPX_MONEYNESS_EDGES = (0.8, 0.9, 0.95, 1.0, 1.1)
SPX_DAY_EDGES = (15, 30, 50, 60, 90, 180)
VIX_MONEYNESS_EDGES = (0.8, 0.9, 1.0, 1.2, 1.5, 1.8)
VIX_DAY_EDGES = (30, 60, 90, 120)

SKEW_ANCHORS = {"SPX": (0.7, 1.2), "VIX": (0.8, 1.5)}
NEAR_MONEY = {"SPX": ((0.9, 1.1), 90), "VIX": ((0.8, 1.2), 45)}


@dataclass(frozen=True)
class IvRow:
    market: str               # SPX or VIX
    date: str
    maturity: float           # years
    moneyness: float          # K / F
    market_iv: float
    model_iv: float           # nan when the model price has no implied volatility

    @property
    def rel(self) -> float:
        return (self.model_iv - self.market_iv) / self.market_iv

    @property
    def valid(self) -> bool:
        return math.isfinite(self.model_iv)


def rows_from(quotes, model_ivs) -> list[IvRow]:
    """IvRow records for a QuoteSet and its ModelIVs."""
    out = []
    for market, qs, ivs in (("SPX", quotes.spx, model_ivs.spx), ("VIX", quotes.vix, model_ivs.vix)):
        for q, m in zip(qs, ivs):
            out.append(IvRow(market, quotes.date, q.maturity, q.moneyness, q.iv, float(m)))
    return out


def _split(rows: Iterable[IvRow]):
    by = defaultdict(list)
    for r in rows:
        if r.valid:
            by[r.market].append(r)
    return by


def _root_mean(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x * x))) if x.size else math.nan


def _half_sum(values: Sequence[float]) -> float:
    """Average over markets that have quotes (half-sum when both do)."""
    vals = [v for v in values if math.isfinite(v)]
    return float(np.mean(vals)) if vals else math.nan


def rmsre(rows: Iterable[IvRow]) -> float:
    by = _split(rows)
    return _half_sum([_root_mean([r.rel for r in by[m]]) for m in ("SPX", "VIX")])


# ---------------------------------------------------------------------------
# buckets


def bucket_labels(edges: Sequence[float], unit: str = "") -> list[str]:
    labels = [f"<{edges[0]:g}{unit}"]
    labels += [f"[{a:g},{b:g}){unit}" for a, b in zip(edges[:-1], edges[1:])]
    labels.append(f">={edges[-1]:g}{unit}")
    return labels


def bucket_index(value: float, edges: Sequence[float]) -> int:
    """Left-closed buckets: below the first edge is 0, at or above the last edge is len(edges)."""
    return int(np.searchsorted(np.asarray(edges), value, side="right"))


@dataclass
class BucketTable:
    labels: list[str]
    values: list[float]        # daily-average RMSRE, nan for empty buckets
    counts: list[int]          # quotes in each bucket

    def as_rows(self):
        return list(zip(self.labels, self.values, self.counts))


def bucket_rmsre(rows: Iterable[IvRow], market: str, by: str) -> BucketTable:
    """RMSRE per bucket computed per date, then averaged over the dates with quotes."""
    if by == "moneyness":
        edges = SPX_MONEYNESS_EDGES if market == "SPX" else VIX_MONEYNESS_EDGES
        labels = bucket_labels(edges)
        key = lambda r: bucket_index(r.moneyness, edges)
    elif by == "maturity":
        edges = SPX_DAY_EDGES if market == "SPX" else VIX_DAY_EDGES
        labels = bucket_labels(edges, "d")
        key = lambda r: bucket_index(r.maturity * DAYS, edges)
    else:
        raise ValidationError("bucket dimension must be 'moneyness' or 'maturity'")
    cells = defaultdict(lambda: defaultdict(list))
    for r in rows:
        if r.market == market and r.valid:
            cells[key(r)][r.date].append(r.rel)
    values, counts = [], []
    for b in range(len(labels)):
        daily = [_root_mean(v) for v in cells[b].values()]
        values.append(float(np.mean(daily)) if daily else math.nan)
        counts.append(sum(len(v) for v in cells[b].values()))
    return BucketTable(labels, values, counts)


# ---------------------------------------------------------------------------
# surface shape


def atm_iv(moneyness: Sequence[float], ivs: Sequence[float]) -> float:
    """Linear interpolation in log moneyness between the nearest quotes on each side of 0."""
    k = np.log(np.asarray(moneyness, dtype=float))
    s = np.asarray(ivs, dtype=float)
    at = np.nonzero(k == 0)[0]
    if at.size:
        return float(s[at[0]])
    pos, neg = k > 0, k < 0
    if not (pos.any() and neg.any()):
        return math.nan
    i_p = np.nonzero(pos)[0][np.argmin(k[pos])]
    i_n = np.nonzero(neg)[0][np.argmax(k[neg])]
    kp, kn = k[i_p], k[i_n]
    return float(kp / (kp - kn) * s[i_n] - kn / (kp - kn) * s[i_p])


def _closest(moneyness: np.ndarray, target: float) -> int:
    dist = np.abs(moneyness - target)
    best = np.flatnonzero(np.isclose(dist, dist.min(), rtol=0, atol=1e-12))
    return int(best[np.argmin(moneyness[best])])     # ties go to the smaller strike


def skew(moneyness: Sequence[float], ivs: Sequence[float], anchors: tuple[float, float]) -> float:
    """Slope in log moneyness between the quotes closest to the two anchors."""
    m = np.asarray(moneyness, dtype=float)
    s = np.asarray(ivs, dtype=float)
    if m.size < 2:
        return math.nan
    i, j = _closest(m, anchors[0]), _closest(m, anchors[1])
    if i == j:
        return math.nan
    k1, k2 = math.log(m[i]), math.log(m[j])
    return float((s[i] - s[j]) / (k1 - k2))


def _slices(rows: Iterable[IvRow], market: str):
    """(date, maturity) -> rows of one market (valid model IVs only)."""
    out = defaultdict(list)
    for r in rows:
        if r.market == market and r.valid:
            out[(r.date, r.maturity)].append(r)
    return out


def shape_metrics(rows: Iterable[IvRow], market: str):
    """Per (date, maturity): (market ATM IV, model ATM IV, market skew, model skew)."""
    out = {}
    for key, rs in sorted(_slices(rows, market).items()):
        m = [r.moneyness for r in rs]
        mk = [r.market_iv for r in rs]
        md = [r.model_iv for r in rs]
        anchors = SKEW_ANCHORS[market]
        out[key] = (atm_iv(m, mk), atm_iv(m, md), skew(m, mk, anchors), skew(m, md, anchors))
    return out


def near_money_daily_rmsre(rows: Iterable[IvRow], market: str) -> dict[str, float]:
    """Per date: average over short maturities of the root of summed squared relative errors."""
    (lo, hi), max_days = NEAR_MONEY[market]
    per_date = defaultdict(lambda: defaultdict(list))
    for r in rows:
        if (r.market == market and r.valid and lo <= r.moneyness <= hi
                and r.maturity * DAYS < max_days):
            per_date[r.date][r.maturity].append(r.rel)
    out = {}
    for date, mats in sorted(per_date.items()):
        out[date] = float(np.mean([math.sqrt(sum(e * e for e in v)) for v in mats.values()]))
    return out


# ---------------------------------------------------------------------------
# report


@dataclass
class MetricsReport:
    rmsre: float
    rmse_spx: float
    rmse_vix: float
    rmse_aggregate: float
    mae: float
    buckets: dict[str, dict[str, BucketTable]] = field(default_factory=dict)
    atm_iv: dict[str, dict] = field(default_factory=dict)
    skew: dict[str, dict] = field(default_factory=dict)
    near_money: dict[str, dict[str, float]] = field(default_factory=dict)
    missing: int = 0

    def summary_rows(self):
        return [("rmsre", self.rmsre), ("rmse_spx", self.rmse_spx), ("rmse_vix", self.rmse_vix),
                ("rmse_aggregate", self.rmse_aggregate), ("mae", self.mae), ("missing", self.missing)]


def metrics(rows_or_result, quotes=None) -> MetricsReport:
    """Full metric suite from IvRow records or a CalibrationResult."""
    if hasattr(rows_or_result, "model_ivs"):
        res = rows_or_result
        if res.model_ivs is None:
            raise ValidationError("calibration result has no model implied volatilities")
        rows = rows_from(quotes or res.quotes, res.model_ivs)
    else:
        rows = list(rows_or_result)
    by = _split(rows)
    abs_err = {m: [r.model_iv - r.market_iv for r in by[m]] for m in ("SPX", "VIX")}
    rmse = {m: _root_mean(abs_err[m]) for m in ("SPX", "VIX")}
    mae = _half_sum([float(np.mean(np.abs(abs_err[m]))) if abs_err[m] else math.nan
                     for m in ("SPX", "VIX")])
    report = MetricsReport(
        rmsre=rmsre(rows), rmse_spx=rmse["SPX"], rmse_vix=rmse["VIX"],
        rmse_aggregate=_half_sum([rmse["SPX"], rmse["VIX"]]), mae=mae,
        missing=sum(1 for r in rows if not r.valid))
    for market in ("SPX", "VIX"):
        if not by[market]:
            continue
        report.buckets[market] = {d: bucket_rmsre(rows, market, d) for d in ("moneyness", "maturity")}
        shapes = shape_metrics(rows, market)
        report.atm_iv[market] = {k: v[:2] for k, v in shapes.items()}
        report.skew[market] = {k: v[2:] for k, v in shapes.items()}
        report.near_money[market] = near_money_daily_rmsre(rows, market)
    return report


def shape_rmse(pairs: Iterable[tuple[float, float]]) -> float:
    """RMSE between market and model values, skipping unavailable entries."""
    diffs = [b - a for a, b in pairs if math.isfinite(a) and math.isfinite(b)]
    return _root_mean(diffs)


# ---------------------------------------------------------------------------
# Newey-West


def newey_west_variance(x: Sequence[float], max_lag: int | None = None) -> float:
    """Long-run variance with Bartlett weights 1 - l/(L+1), L = floor(T^(1/4)) by default."""
    x = np.asarray(x, dtype=float)
    T = len(x)
    L = int(math.floor(T ** 0.25)) if max_lag is None else int(max_lag)
    if L < 0:
        raise ValidationError("max_lag must be >= 0")
    d = x - x.mean()
    s = float(d @ d) / T
    for l in range(1, min(L, T - 1) + 1):
        s += 2 * (1 - l / (L + 1)) * float(d[l:] @ d[:-l]) / T
    return s


def newey_west_tstat(series_i: Sequence[float], series_j: Sequence[float],
                     max_lag: int | None = None) -> float:
    """Mean of series_i - series_j over its HAC standard error."""
    a = np.asarray(series_i, dtype=float)
    b = np.asarray(series_j, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("series must be one-dimensional and of equal length")
    if len(a) < 8:
        raise ValidationError("need at least 8 observations")
    d = a - b
    lrv = newey_west_variance(d, max_lag)
    if not lrv > 1e-300 or np.ptp(d) == 0:
        raise UndefinedStatisticError("difference series has zero variance; t statistic undefined")
    return float(d.mean() / math.sqrt(lrv / len(d)))
