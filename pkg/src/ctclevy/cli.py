"""Command line interface ``ctc``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import calibration as cal
from . import market_io, metrics as mt, vix
from .cos import CosConfig, EuropeanOption, MarketFrame, implied_vol, price_surface
from .errors import CtcError, NoSolutionError, NumericalError, ValidationError
from .levy import CALIBRATED, KINDS, catalog, dump_config, load_config
from .montecarlo import SimPlan, simulate_log_returns

log = logging.getLogger("ctclevy")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ValidationError(f"expected a list of numbers, got {text!r}") from exc


def _writer(path):
    if path in (None, "-"):
        return csv.writer(sys.stdout), None
    fh = open(path, "w", newline="")
    return csv.writer(fh), fh


def _load_model(text: str):
    if text in KINDS:
        return catalog(text)
    if not Path(text).exists():
        raise ValidationError(f"model {text!r} is neither a kind ({', '.join(KINDS)}) nor a config file")
    return load_config(text)


def cmd_price_european(args) -> int:
    spec = _load_model(args.model)
    frame = MarketFrame(args.spot, args.rate)
    opts = [EuropeanOption(K, T, args.side) for T in _floats(args.T) for K in _floats(args.K)]
    cfg = CosConfig(N=args.N, M_terms=args.M, D=args.D)
    prices = price_surface(spec, frame, opts, cfg)
    w, fh = _writer(args.out)
    w.writerow(["K", "T", "side", "price", "iv"])
    for o, p in zip(opts, prices):
        try:
            iv = implied_vol(p, frame, o)
        except NoSolutionError:
            iv = math.nan
        w.writerow([repr(o.strike), repr(o.maturity), o.side, repr(float(p)), repr(float(iv))])
    if fh:
        fh.close()
    return 0


def cmd_price_vix(args) -> int:
    spec = _load_model(args.model)
    strikes = np.array(_floats(args.K))
    method = args.method
    if method == "auto":
        method = "fourier" if spec.v_layer is None and spec.u_layer.eta == 0 else "exact"
    w, fh = _writer(args.out)
    w.writerow(["K", "T", "price", "std_err"])
    for T in _floats(args.T):
        if method == "fourier":
            p, se = np.atleast_1d(vix.vix_call_fourier_ordinary(spec, strikes, T, args.rate)), np.zeros(len(strikes))
        elif method == "quadrature":
            p, se = np.atleast_1d(vix.vix_call_quadrature(spec, strikes, T, args.rate)), np.zeros(len(strikes))
        else:
            plan = SimPlan(paths=args.paths, seed=args.seed)
            p, se = vix.price_vix_option_exact(spec, strikes, T, plan, args.rate)
        for K, a, b in zip(strikes, p, se):
            w.writerow([repr(float(K)), repr(T), repr(float(a)), repr(float(b))])
    if fh:
        fh.close()
    return 0


def cmd_simulate(args) -> int:
    spec = _load_model(args.model)
    w, fh = _writer(args.out)
    if args.method == "exact":
        plan = SimPlan(paths=args.paths, seed=args.seed)
        v_, u, v, V = vix.simulate_vix_exact(spec, args.T, plan)
        w.writerow(["path", "u", "v", "V", "vix"])
        for i in range(len(v_)):
            w.writerow([i, repr(float(u[i])), repr(float(v[i])), repr(float(V[i])), repr(float(v_[i]))])
    else:
        plan = SimPlan(paths=args.paths, seed=args.seed, euler_step=args.step)
        T = round(args.T / args.step) * args.step
        w.writerow(["path", "x", "u", "v"])
        for start, n, rng in plan.blocks():
            x, (u, v) = simulate_log_returns(spec, [T], n, args.step, rng)
            for i in range(n):
                w.writerow([start + i, repr(float(x[0, i])), repr(float(u[i])), repr(float(v[i]))])
    if fh:
        fh.close()
    return 0


def _write_ivs(path: Path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["market", "date", "maturity", "moneyness", "market_iv", "model_iv"])
        for r in rows:
            w.writerow([r.market, r.date, repr(r.maturity), repr(r.moneyness), repr(r.market_iv),
                        repr(r.model_iv)])


def _read_ivs(path: Path):
    with open(path, newline="") as fh:
        return [mt.IvRow(r["market"], r["date"], float(r["maturity"]), float(r["moneyness"]),
                         float(r["market_iv"]), float(r["model_iv"])) for r in csv.DictReader(fh)]


def _write_result(out: Path, tag: str, res: cal.CalibrationResult) -> list:
    (out / f"params_{tag}.cfg").write_text(dump_config(res.spec))
    rows = mt.rows_from(res.quotes, res.model_ivs) if res.model_ivs is not None else []
    _write_ivs(out / f"ivs_{tag}.csv", rows)
    return rows


def cmd_calibrate(args) -> int:
    sets = market_io.read_quote_sets(args.quotes)
    if not sets:
        raise ValidationError("quote file holds no dates")
    init_spec = _load_model(args.model)
    space = cal.default_space(init_spec)
    init = cal.free_values(init_spec, space)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    if args.mode == "daily":
        for qs in sets:
            res = cal.calibrate_daily(qs, space, init, args.budget, args.optimizer, args.seed)
            rows = _write_result(out, qs.date, res)
            summary.append((qs.date, "daily", res.loss, mt.rmsre(rows), res.evaluations, res.converged))
    else:
        if len(sets) < args.window + 1:
            raise ValidationError(f"two-step mode needs more than {args.window} dates")
        window, oos = sets[:args.window], sets[args.window:]
        res2 = cal.calibrate_two_step(window, oos, space, init, args.budget, args.optimizer, args.seed)
        for qs, res in zip(window, res2.window):
            rows = _write_result(out, qs.date, res)
            summary.append((qs.date, "window", res.loss, mt.rmsre(rows), res2.evaluations, res2.converged))
        for qs, res in zip(oos, res2.out_of_sample):
            rows = _write_result(out, qs.date, res)
            summary.append((qs.date, "out-of-sample", res.loss, mt.rmsre(rows), res.evaluations, res.converged))
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "stage", "loss", "rmsre", "evaluations", "converged"])
        for row in summary:
            w.writerow([row[0], row[1], repr(float(row[2])), repr(float(row[3])), row[4], int(row[5])])
    for row in summary:
        print(f"{row[0]} {row[1]} loss={row[2]:.6g} rmsre={row[3]:.6g}")
    return 0


def cmd_report_metrics(args) -> int:
    files = sorted(Path(args.results).glob("ivs_*.csv"))
    if not files:
        raise ValidationError(f"no ivs_*.csv files in {args.results}")
    rows = [r for f in files for r in _read_ivs(f)]
    rep = mt.metrics(rows)
    w, fh = _writer(args.out)
    w.writerow(["table", "market", "bucket", "value", "count"])
    for name, value in rep.summary_rows():
        w.writerow(["summary", "", name, repr(float(value)), ""])
    for market, tables in rep.buckets.items():
        for dim, table in tables.items():
            for label, value, count in table.as_rows():
                w.writerow([dim, market, label, repr(float(value)), count])
    for market, daily in rep.near_money.items():
        for date, value in daily.items():
            w.writerow(["near_money", market, date, repr(float(value)), ""])
    if fh:
        fh.close()
    return 0


def _parse_spots(items):
    out = {}
    for item in items or []:
        try:
            date, und, level = item.split(":")
            out[(dt.date.fromisoformat(date), und)] = float(level)
        except ValueError as exc:
            raise ValidationError(f"--spot expects DATE:UNDERLYING:LEVEL, got {item!r}") from exc
    return out


def cmd_ingest(args) -> int:
    raw = market_io.read_raw_quotes(args.raw)
    curve = market_io.read_curve(args.curve) if args.curve else market_io.YieldCurve((1.0,), (0.0,))
    res = market_io.filter_quotes(raw, curves=curve, spots=_parse_spots(args.spot))
    market_io.write_quote_sets(args.out, res.quote_sets())
    print("rule,removed", file=sys.stderr)
    for rule in market_io.RULES:
        print(f"{rule},{res.removed.get(rule, 0)}", file=sys.stderr)
    print(f"kept,{len(res.quotes)}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctc", description="Composite time-changed Levy model toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("price-european", help="COS prices of European options")
    e.add_argument("--model", required=True, help="model kind or config file")
    e.add_argument("--K", required=True, help="strikes, comma separated")
    e.add_argument("--T", required=True, help="maturities in years")
    e.add_argument("--spot", type=float, default=100.0)
    e.add_argument("--rate", type=float, default=0.0)
    e.add_argument("--side", choices=["call", "put"], default="call")
    e.add_argument("--N", type=int, default=256)
    e.add_argument("--M", type=int, default=256)
    e.add_argument("--D", type=int, default=200)
    e.add_argument("--out", default="-")
    e.set_defaults(func=cmd_price_european)

    v = sub.add_parser("price-vix", help="VIX call prices")
    v.add_argument("--model", required=True)
    v.add_argument("--K", required=True)
    v.add_argument("--T", required=True)
    v.add_argument("--paths", type=int, default=100_000)
    v.add_argument("--seed", type=int, default=20240601)
    v.add_argument("--rate", type=float, default=0.0)
    v.add_argument("--method", choices=["auto", "exact", "fourier", "quadrature"], default="auto")
    v.add_argument("--out", default="-")
    v.set_defaults(func=cmd_price_vix)

    s = sub.add_parser("simulate", help="terminal-state samples")
    s.add_argument("--model", required=True)
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--paths", type=int, default=10_000)
    s.add_argument("--step", type=float, default=1e-4)
    s.add_argument("--seed", type=int, default=20240601)
    s.add_argument("--method", choices=["exact", "euler"], default="exact")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="calibrate to a quote-set CSV")
    c.add_argument("--quotes", required=True)
    c.add_argument("--model", required=True, help="kind (published values as start) or config file")
    c.add_argument("--mode", choices=["daily", "two-step"], default="daily")
    c.add_argument("--optimizer", choices=["local", "global"], default="local")
    c.add_argument("--window", type=int, default=2, help="in-sample dates for two-step mode")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--budget", type=int, default=20_000)
    c.add_argument("--out", required=True, help="output directory")
    c.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("report-metrics", help="metric tables from calibration output")
    r.add_argument("--results", required=True)
    r.add_argument("--out", default="-")
    r.set_defaults(func=cmd_report_metrics)

    i = sub.add_parser("ingest", help="filter raw quotes into a quote-set CSV")
    i.add_argument("--raw", required=True)
    i.add_argument("--curve")
    i.add_argument("--spot", action="append", help="DATE:UNDERLYING:LEVEL, repeatable")
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_ingest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except CtcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
