"""Quote ingestion: raw CSV parsing, parity forwards, quote filters and yield curves."""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .black import black_forward, implied_vol_forward
from .calibration import Frame, Quote, QuoteSet
from .errors import ForwardUnavailableError, NoSolutionError, ValidationError

log = logging.getLogger(__name__)

RAW_HEADER = ["date", "underlying", "expiry", "settlement", "strike", "side", "iv", "price", "volume"]
QUOTESET_HEADER = ["date", "market", "maturity", "moneyness", "iv", "volume", "forward", "rate"]
DAYS = 365.0


@dataclass(frozen=True)
class RawQuote:
    date: dt.date
    underlying: str           # SPX or VIX
    expiry: dt.date
    settlement: str           # AM or PM
    strike: float
    side: str                 # call or put
    iv: float | None
    price: float | None
    volume: float

    def __post_init__(self):
        if self.underlying not in ("SPX", "VIX"):
            raise ValidationError(f"underlying must be SPX or VIX, got {self.underlying!r}")
        if self.settlement not in ("AM", "PM"):
            raise ValidationError(f"settlement must be AM or PM, got {self.settlement!r}")
        if self.side not in ("call", "put"):
            raise ValidationError(f"side must be call or put, got {self.side!r}")
        if not self.strike > 0:
            raise ValidationError("strike must be positive")
        if self.iv is None and self.price is None:
            raise ValidationError("a quote needs an implied volatility or a price")
        if self.volume < 0:
            raise ValidationError("volume must be nonnegative")

    @property
    def key(self):
        return (self.date, self.underlying, self.expiry, self.strike, self.side)

    @property
    def expiry_key(self):
        return (self.date, self.underlying, self.expiry)

    def days(self) -> int:
        """Calendar days to expiry; AM-settled SPX options lose one day."""
        d = (self.expiry - self.date).days
        if self.underlying == "SPX" and self.settlement == "AM":
            d -= 1
        return d

    def tau(self) -> float:
        return self.days() / DAYS


def _opt_float(text: str) -> float | None:
    text = text.strip()
    return None if text == "" else float(text)


def read_raw_quotes(path: str | Path) -> list[RawQuote]:
    """Parse a raw quote CSV; the header must match exactly and keys must be unique."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RAW_HEADER:
            raise ValidationError(f"raw quote header must be {','.join(RAW_HEADER)}")
        out, seen = [], set()
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(RAW_HEADER):
                raise ValidationError(f"{path}:{lineno}: expected {len(RAW_HEADER)} fields")
            try:
                q = RawQuote(dt.date.fromisoformat(row[0]), row[1], dt.date.fromisoformat(row[2]),
                             row[3], float(row[4]), row[5], _opt_float(row[6]), _opt_float(row[7]),
                             float(row[8]))
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
            if q.key in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate quote {q.key}")
            seen.add(q.key)
            out.append(q)
    return out


def write_raw_quotes(path: str | Path, quotes: Iterable[RawQuote]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RAW_HEADER)
        for q in quotes:
            w.writerow([q.date.isoformat(), q.underlying, q.expiry.isoformat(), q.settlement, repr(q.strike),
                        q.side, "" if q.iv is None else repr(q.iv), "" if q.price is None else repr(q.price),
                        repr(q.volume)])


# ---------------------------------------------------------------------------
# yield curve


@dataclass(frozen=True)
class YieldCurve:
    tenors: tuple[float, ...]          # years
    rates: tuple[float, ...]           # continuously compounded

    def __post_init__(self):
        if len(self.tenors) == 0:
            raise ValidationError("yield curve is empty")
        if len(self.tenors) != len(self.rates):
            raise ValidationError("tenors and rates differ in length")
        t = np.asarray(self.tenors, dtype=float)
        if np.any(np.diff(t) <= 0) or np.any(t <= 0):
            raise ValidationError("tenors must be positive and strictly increasing")
        if not np.all(np.isfinite(self.rates)):
            raise ValidationError("rates must be finite")

    def spline(self):
        if len(self.tenors) < 2:
            return None
        return CubicSpline(self.tenors, self.rates, bc_type="natural", extrapolate=False)


def rate_at(curve: YieldCurve, tenor) -> float | np.ndarray:
    """Natural cubic spline through the curve, flat beyond the first and last tenor."""
    t = np.asarray(tenor, dtype=float)
    if np.any(t <= 0):
        raise ValidationError("tenor must be > 0")
    if len(curve.tenors) == 1:
        out = np.full(t.shape, curve.rates[0], dtype=float)
    else:
        clamped = np.clip(t, curve.tenors[0], curve.tenors[-1])
        out = curve.spline()(clamped)
    return float(out) if out.ndim == 0 else out


def read_curve(path: str | Path) -> YieldCurve:
    """CSV with header ``tenor,rate`` (years, decimal)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"tenor", "rate"}:
        raise ValidationError("curve CSV needs the header tenor,rate")
    pairs = sorted((float(r["tenor"]), float(r["rate"])) for r in rows)
    return YieldCurve(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))


# ---------------------------------------------------------------------------
# forwards


def infer_forward(quotes: Sequence[RawQuote], rate: float, spot: float | None = None) -> float:
    """Forward from put-call parity, F = K + (C - P) e^{r tau}.

    Uses the call/put pair at the strike closest to ``spot``; without a
    spot, the pair with the smallest |C - P| (the strike nearest the money).
    """
    if not quotes:
        raise ForwardUnavailableError("no quotes for this expiry")
    if len({q.expiry_key for q in quotes}) != 1:
        raise ValidationError("infer_forward expects quotes of a single date, underlying and expiry")
    calls = {q.strike: q.price for q in quotes if q.side == "call" and q.price is not None}
    puts = {q.strike: q.price for q in quotes if q.side == "put" and q.price is not None}
    common = sorted(set(calls) & set(puts))
    if not common:
        raise ForwardUnavailableError(f"no call/put price pair for expiry {quotes[0].expiry_key}")
    if spot is not None:
        K = min(common, key=lambda k: (abs(k - spot), k))
    else:
        K = min(common, key=lambda k: (abs(calls[k] - puts[k]), k))
    tau = quotes[0].tau()
    return K + (calls[K] - puts[K]) * math.exp(rate * tau)


def log_moneyness(strike: float, forward: float) -> float:
    return math.log(strike / forward)


# ---------------------------------------------------------------------------
# filters


@dataclass(frozen=True)
class FilterConfig:
    spx_days: tuple[int, int] = (7, 365)
    vix_days: tuple[int, int] = (7, 160)
    spx_moneyness: tuple[float, float] = (0.5, 1.4)
    vix_moneyness: tuple[float, float] = (0.7, 2.5)
    drop_zero_volume: bool = True
    drop_itm: bool = True
    arbitrage: bool = True
    arbitrage_tol: float = 1e-8

    def __post_init__(self):
        for name in ("spx_days", "vix_days", "spx_moneyness", "vix_moneyness"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValidationError(f"window {name} is empty")


RULES = ("volume", "forward", "arbitrage", "maturity", "moneyness", "itm")


@dataclass
class FilteredQuote:
    raw: RawQuote
    forward: float
    rate: float
    iv: float | None
    price: float | None

    @property
    def moneyness(self) -> float:
        return self.raw.strike / self.forward


@dataclass
class FilterResult:
    quotes: list[FilteredQuote]
    removed: Counter = field(default_factory=Counter)
    forwards: dict = field(default_factory=dict)      # (date, underlying, expiry) -> forward used

    @property
    def raw(self) -> list[RawQuote]:
        return [q.raw for q in self.quotes]

    def quote_sets(self) -> list[QuoteSet]:
        """One QuoteSet per date; quotes without an implied volatility are skipped."""
        by_date = defaultdict(list)
        for q in self.quotes:
            by_date[q.raw.date].append(q)
        out = []
        for date in sorted(by_date):
            qs = QuoteSet(date.isoformat())
            for q in sorted(by_date[date], key=lambda q: (q.raw.underlying, q.raw.tau(), q.raw.strike)):
                if q.iv is None:
                    continue
                tau = q.raw.tau()
                item = Quote(tau, q.moneyness, q.iv, q.raw.volume)
                if q.raw.underlying == "SPX":
                    qs.spx.append(item)
                    qs.spx_frames[tau] = Frame(q.forward, q.rate)
                else:
                    qs.vix.append(item)
                    qs.vix_frames[tau] = Frame(q.forward, q.rate)
            out.append(qs)
        return out


def _curve_for(curves, date):
    if isinstance(curves, YieldCurve):
        return curves
    if date not in curves:
        raise ValidationError(f"no yield curve for {date}")
    return curves[date]


def _complete(q: RawQuote, forward: float, rate: float) -> FilteredQuote:
    """Fill the missing one of price and IV from the other (Black-76 on the forward)."""
    tau = q.tau()
    iv, price = q.iv, q.price
    disc = math.exp(-rate * tau) if tau > 0 else 1.0
    if price is None and iv is not None and tau > 0:
        price = disc * float(black_forward(forward, q.strike, tau, iv, q.side == "call"))
    elif iv is None and price is not None and tau > 0:
        try:
            iv = implied_vol_forward(price / disc, forward, q.strike, tau, q.side == "call")
        except (NoSolutionError, ValidationError):
            iv = None
    return FilteredQuote(q, forward, rate, iv, price)


def _arbitrage_screen(group: list[FilteredQuote], tol: float) -> tuple[list[FilteredQuote], int]:
    """Drop quotes of one expiry and side until call-equivalent prices are arbitrage-free.

    Conditions per neighbouring strikes: nonincreasing, slope no steeper than
    -e^{-r tau} (vertical spread bound) and convex. Each round removes the
    quote with the largest total violation.
    """
    if not group:
        return group, 0
    removed = 0
    quotes = sorted(group, key=lambda q: q.raw.strike)
    while len(quotes) >= 2:
        K = np.array([q.raw.strike for q in quotes])
        tau = quotes[0].raw.tau()
        disc = math.exp(-quotes[0].rate * tau)
        F = quotes[0].forward
        P = np.array([q.price for q in quotes])
        if quotes[0].raw.side == "put":
            C = P + disc * (F - K)        # call-equivalent price by parity
        else:
            C = P
        score = np.zeros(len(quotes))
        dK = np.diff(K)
        dC = np.diff(C)
        up = np.maximum(dC - tol, 0.0)                       # increasing in strike
        steep = np.maximum(-dC - disc * dK - tol, 0.0)       # spread above its bound
        for v in (up, steep):
            score[:-1] += v
            score[1:] += v
        if len(quotes) >= 3:
            w = dK[1:] / (K[2:] - K[:-2])
            chord = w * C[:-2] + (1 - w) * C[2:]
            bump = np.maximum(C[1:-1] - chord - tol, 0.0)
            score[1:-1] += bump
            score[:-2] += 0.5 * bump
            score[2:] += 0.5 * bump
        low = np.maximum(-C - tol, 0.0)
        score += low
        if not np.any(score > 0):
            break
        worst = int(np.argmax(score))
        quotes.pop(worst)
        removed += 1
    return quotes, removed


def filter_quotes(raw: Sequence[RawQuote], forwards: Mapping | None = None, curves=None,
                  cfg: FilterConfig = FilterConfig(), spots: Mapping | None = None) -> FilterResult:
    """Apply the ingestion rules in order and count removals per rule.

    ``forwards`` maps (date, underlying, expiry) to a forward; expiries
    without one are inferred from parity (``spots`` optionally maps
    (date, underlying) to the index level) and dropped when no pair exists.
    """
    curves = curves if curves is not None else YieldCurve((1.0,), (0.0,))
    forwards = dict(forwards or {})
    removed = Counter()
    keep = list(raw)
    if cfg.drop_zero_volume:
        before = len(keep)
        keep = [q for q in keep if q.volume > 0]
        removed["volume"] += before - len(keep)
    groups = defaultdict(list)
    for q in keep:
        groups[q.expiry_key].append(q)
    completed: list[FilteredQuote] = []
    for key, qs in groups.items():
        date, und, _ = key
        tau = qs[0].tau()
        rate = rate_at(_curve_for(curves, date), tau) if tau > 0 else 0.0
        F = forwards.get(key)
        if F is None:
            try:
                spot = None if spots is None else spots.get((date, und))
                F = infer_forward(qs, rate, spot)
            except ForwardUnavailableError:
                removed["forward"] += len(qs)
                log.info("no forward for %s; expiry dropped", key)
                continue
            forwards[key] = F
        completed.extend(_complete(q, F, rate) for q in qs)
    if cfg.arbitrage:
        sides = defaultdict(list)
        for q in completed:
            sides[q.raw.expiry_key + (q.raw.side,)].append(q)
        screened = []
        for key in sorted(sides):
            priced = [q for q in sides[key] if q.price is not None]
            kept, n = _arbitrage_screen(priced, cfg.arbitrage_tol)
            removed["arbitrage"] += n
            screened.extend(kept)
        completed = screened
    survivors = []
    for q in completed:
        days = q.raw.days()
        lo, hi = cfg.spx_days if q.raw.underlying == "SPX" else cfg.vix_days
        if not lo <= days <= hi:
            removed["maturity"] += 1
            continue
        mlo, mhi = cfg.spx_moneyness if q.raw.underlying == "SPX" else cfg.vix_moneyness
        if not mlo <= q.moneyness <= mhi:
            removed["moneyness"] += 1
            continue
        if cfg.drop_itm and ((q.raw.side == "call" and q.raw.strike < q.forward)
                             or (q.raw.side == "put" and q.raw.strike > q.forward)):
            removed["itm"] += 1
            continue
        survivors.append(q)
    survivors.sort(key=lambda q: q.raw.key)
    if not survivors:
        log.warning("no quotes survived the filters")
    return FilterResult(survivors, removed, forwards)


# ---------------------------------------------------------------------------
# QuoteSet CSV


def write_quote_sets(path: str | Path, sets: Iterable[QuoteSet]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(QUOTESET_HEADER)
        for qs in sets:
            for market, quotes, frames in (("SPX", qs.spx, qs.spx_frames), ("VIX", qs.vix, qs.vix_frames)):
                for q in quotes:
                    fr = frames.get(q.maturity, Frame(math.nan))
                    w.writerow([qs.date, market, repr(q.maturity), repr(q.moneyness), repr(q.iv),
                                repr(q.volume), repr(fr.forward), repr(fr.rate)])


def read_quote_sets(path: str | Path) -> list[QuoteSet]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != QUOTESET_HEADER:
            raise ValidationError(f"quote-set header must be {','.join(QUOTESET_HEADER)}")
        rows = defaultdict(lambda: ([], [], {}, {}))
        order = []
        for lineno, r in enumerate(reader, 2):
            if not r:
                continue
            if len(r) != len(QUOTESET_HEADER):
                raise ValidationError(f"{path}:{lineno}: expected {len(QUOTESET_HEADER)} fields")
            date, market = r[0], r[1]
            if market not in ("SPX", "VIX"):
                raise ValidationError(f"{path}:{lineno}: market must be SPX or VIX")
            if date not in rows:
                order.append(date)
            try:
                T, m, iv, vol, F, rate = (float(x) for x in r[2:])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
            spx, vix, fs, fv = rows[date]
            q = Quote(T, m, iv, vol)
            if market == "SPX":
                spx.append(q)
                if math.isfinite(F):
                    fs[T] = Frame(F, rate)
            else:
                vix.append(q)
                fv[T] = Frame(F, rate)
    return [QuoteSet(d, *rows[d]) for d in order]
