import csv
from pathlib import Path

import numpy as np
import pytest

from ctclevy import calibration as cal, market_io
from ctclevy.cli import main
from ctclevy.cos import EuropeanOption, MarketFrame, price_surface
from ctclevy.levy import REFERENCE_COMPOSITE_HESTON as R, catalog, composite_heston, dump_config

FIXTURE = Path(__file__).parent / "fixtures" / "day10.csv"


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_price_european_matches_library(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["price-european", "--model", "Heston", "--K", "90,100,110", "--T", "0.25,0.5",
                 "--out", str(out)]) == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["K", "T", "side", "price", "iv"]
    assert len(rows) == 6
    opts = [EuropeanOption(K, T) for T in (0.25, 0.5) for K in (90.0, 100.0, 110.0)]
    ref = price_surface(catalog("Heston"), MarketFrame(100.0), opts)
    assert np.allclose([float(r["price"]) for r in rows], ref, rtol=0, atol=1e-12)
    assert all(0 < float(r["iv"]) < 2 for r in rows)


def test_price_european_from_config_file(tmp_path):
    cfg = tmp_path / "m.cfg"
    cfg.write_text(dump_config(composite_heston(**R)))
    out = tmp_path / "p.csv"
    assert main(["price-european", "--model", str(cfg), "--K", "100", "--T", "0.3", "--side", "put",
                 "--out", str(out)]) == 0
    row = read_csv(out)[0]
    ref = price_surface(composite_heston(**R), MarketFrame(100.0), [EuropeanOption(100.0, 0.3, "put")])[0]
    assert float(row["price"]) == pytest.approx(ref, abs=1e-12)


def test_price_vix_fourier_and_exact(tmp_path):
    out = tmp_path / "v.csv"
    assert main(["price-vix", "--model", "Heston", "--K", "0.2,0.3", "--T", "0.1", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["K", "T", "price", "std_err"]
    assert [float(r["std_err"]) for r in rows] == [0.0, 0.0]
    out2 = tmp_path / "v2.csv"
    assert main(["price-vix", "--model", "Heston", "--K", "0.2,0.3", "--T", "0.1", "--method", "exact",
                 "--paths", "20000", "--seed", "3", "--out", str(out2)]) == 0
    for a, b in zip(rows, read_csv(out2)):
        assert abs(float(a["price"]) - float(b["price"])) < 4 * float(b["std_err"])


def test_simulate_both_methods(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["simulate", "--model", "CompositeHeston", "--T", "0.1", "--paths", "50",
                 "--out", str(out)]) == 0
    rows = read_csv(out)
    assert list(rows[0]) == ["path", "u", "v", "V", "vix"] and len(rows) == 50
    assert all(float(r["V"]) > 0 for r in rows)
    out2 = tmp_path / "e.csv"
    assert main(["simulate", "--model", "CompositeHeston", "--T", "0.01", "--paths", "20", "--step", "1e-3",
                 "--method", "euler", "--out", str(out2)]) == 0
    rows = read_csv(out2)
    assert list(rows[0]) == ["path", "x", "u", "v"] and len(rows) == 20
    again = tmp_path / "s2.csv"
    main(["simulate", "--model", "CompositeHeston", "--T", "0.1", "--paths", "50", "--out", str(again)])
    assert again.read_text() == out.read_text()


def test_ingest_calibrate_and_report(tmp_path, capsys):
    qs_path = tmp_path / "qs.csv"
    assert main(["ingest", "--raw", str(FIXTURE), "--out", str(qs_path)]) == 0
    err = capsys.readouterr().err
    assert "itm,2" in err and "kept,3" in err
    assert len(market_io.read_quote_sets(qs_path)[0].spx) == 3

    spec = composite_heston(**R)
    synth = cal.synthetic_quotes(spec, {0.1: [0.9, 1.0, 1.1]}, {0.1: [1.0, 1.2]})
    synth.date = "2024-01-02"
    market_io.write_quote_sets(tmp_path / "synth.csv", [synth])
    cfg = tmp_path / "truth.cfg"
    cfg.write_text(dump_config(spec))
    res_dir = tmp_path / "res"
    assert main(["calibrate", "--quotes", str(tmp_path / "synth.csv"), "--model", str(cfg),
                 "--budget", "40", "--out", str(res_dir)]) == 0
    summary = read_csv(res_dir / "summary.csv")
    assert float(summary[0]["loss"]) < 1e-12
    ivs = read_csv(res_dir / "ivs_2024-01-02.csv")
    assert len(ivs) == 5
    assert (res_dir / "params_2024-01-02.cfg").exists()

    report = tmp_path / "m.csv"
    assert main(["report-metrics", "--results", str(res_dir), "--out", str(report)]) == 0
    rows = read_csv(report)
    assert list(rows[0]) == ["table", "market", "bucket", "value", "count"]
    rmsre = [r for r in rows if r["table"] == "summary" and r["bucket"] == "rmsre"]
    assert float(rmsre[0]["value"]) < 1e-6


def test_validation_errors_exit_2(tmp_path, capsys):
    assert main(["price-european", "--model", "NoSuchModel", "--K", "100", "--T", "0.1"]) == 2
    assert main(["price-european", "--model", "Heston", "--K", "abc", "--T", "0.1"]) == 2
    assert main(["price-european", "--model", "Heston", "--K", "100", "--T", "0.1", "--N", "100"]) == 2
    assert main(["ingest", "--raw", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o.csv")]) == 2
    assert main(["report-metrics", "--results", str(tmp_path)]) == 2
    assert "error" in capsys.readouterr().err


def test_numerical_failure_exits_3(capsys):
    assert main(["price-european", "--model", "CompositeHeston", "--K", "100", "--T", "0.9", "--M", "4"]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
