import csv
from datetime import date, timedelta

import numpy as np
import pytest

from bvarcast.cli import TABLE_FILES, main
from bvarcast.config import PROFILES, load_config
from bvarcast.evaluation import interval_violations
from bvarcast.forecast import ForecastStore, load_forecasts
from bvarcast.market_data import PriceSeries, write_price_csv

from conftest import daily

START = date(2016, 1, 4)  # a Monday


def write_inputs(root, rng, T=75):
    data = root / "data"
    data.mkdir()
    dates = daily(START, T)
    for name in ("btc", "eth"):
        p = 100 * np.exp(np.cumsum(rng.normal(0, 0.03, T)))
        write_price_csv(PriceSeries(name, dates, p), data / f"{name}.csv")
    wk = [d for d in dates if d.weekday() < 5]
    write_price_csv(PriceSeries("spx", wk, 2000 * np.exp(np.cumsum(rng.normal(0, 0.01, len(wk))))),
                    data / "spx.csv")
    cfg = root / "run.ini"
    cfg.write_text(f"""
[data]
dir = data
targets = BTC=btc.csv, ETH=eth.csv
predictors = SPX=spx.csv

[run]
models = BVAR, BVARX, BAR1
benchmark = BVAR
seed = 3
out = out

[rolling]
window = 60
origins = 4

[sampler]
n_iter = 140
n_burn = 30
lags = 1

[evaluate]
mcs_reps = 200
""")
    return cfg


@pytest.fixture
def project(tmp_path, rng):
    return write_inputs(tmp_path, rng)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_end_to_end(project):
    out = project.parent / "out"
    assert main(["ingest", "--config", str(project)]) == 0
    assert (out / "returns.csv").exists() and (out / "predictors.csv").exists()
    log = (out / "ingest.log").read_text()
    weekends = [START + timedelta(days=i) for i in range(1, 75) if (START + timedelta(days=i)).weekday() >= 5]
    assert all(d.isoformat() in log for d in weekends)

    assert main(["describe", "--config", str(project)]) == 0
    rows = read_rows(out / "table1_descriptive.csv")
    assert [r["statistic"] for r in rows] == ["maximum", "minimum", "mean", "median", "std", "skewness", "kurtosis"]

    assert main(["run", "--config", str(project)]) == 0
    for m in ("BVAR", "BVARX", "BAR1"):
        assert load_forecasts(out / "draws" / f"{m}.zip", require_complete=True).n_origins == 4

    assert main(["evaluate", "--config", str(project)]) == 0
    for name in list(TABLE_FILES.values()) + ["table7_univariate.csv", "report.txt"]:
        assert (out / name).exists(), name
    rmse_rows = read_rows(out / TABLE_FILES["rmse"])
    assert rmse_rows[0]["model"] == "BVAR"
    assert float(rmse_rows[0]["BTC_rel"]) == 1.0
    uni = read_rows(out / "table7_univariate.csv")
    assert {r["model"] for r in uni} == {"BAR1", "BVAR"}

    assert main(["plot-data", "--config", str(project), "--model", "BVAR", "--series", "ETH"]) == 0
    bands = read_rows(out / "bands_BVAR_ETH.csv")
    assert len(bands) == 4
    lo = np.array([float(r["lower"]) for r in bands])
    hi = np.array([float(r["upper"]) for r in bands])
    pt = np.array([float(r["point"]) for r in bands])
    real = np.array([float(r["realized"]) for r in bands])
    assert np.all(lo <= pt) and np.all(pt <= hi)
    outside = 100 * np.mean((real < lo) | (real > hi))
    fs = load_forecasts(out / "draws" / "BVAR.zip")
    assert outside == interval_violations(fs)[fs.series("ETH")]
    cov = read_rows(out / TABLE_FILES["coverage"])
    assert float(cov[0]["ETH"]) == outside


def test_run_is_resumable(project):
    out = project.parent / "out"
    assert main(["ingest", "--config", str(project)]) == 0
    assert main(["run", "--config", str(project), "--models", "BVAR"]) == 0
    path = out / "draws" / "BVAR.zip"
    first = load_forecasts(path)
    stamp = path.stat().st_mtime_ns
    assert main(["run", "--config", str(project), "--models", "BVAR"]) == 0
    assert path.stat().st_mtime_ns == stamp
    ForecastStore(path).drop([1])
    assert main(["run", "--config", str(project), "--models", "BVAR"]) == 0
    assert load_forecasts(path).draws.tobytes() == first.draws.tobytes()


def test_negative_price_fails_with_date(tmp_path, rng, capsys):
    cfg = write_inputs(tmp_path, rng)
    p = tmp_path / "data" / "eth.csv"
    lines = p.read_text().splitlines()
    d, _ = lines[5].split(",")
    lines[5] = f"{d},-3.0"
    p.write_text("\n".join(lines) + "\n")
    assert main(["ingest", "--config", str(cfg)]) == 1
    assert d in capsys.readouterr().err


def test_constant_series_describe_fails(tmp_path, rng):
    cfg = write_inputs(tmp_path, rng)
    write_price_csv(PriceSeries("btc", daily(START, 75), np.full(75, 5.0)), tmp_path / "data" / "btc.csv")
    assert main(["ingest", "--config", str(cfg)]) == 0
    assert main(["describe", "--config", str(cfg)]) == 1


def test_evaluate_without_draws_fails(project, capsys):
    assert main(["ingest", "--config", str(project)]) == 0
    assert main(["evaluate", "--config", str(project)]) == 1
    assert "missing draw files" in capsys.readouterr().err


def test_plot_data_unknown_model(project):
    assert main(["plot-data", "--config", str(project), "--model", "BVAR-SV", "--series", "BTC"]) == 1


def test_configuration_errors(tmp_path):
    assert main(["describe", "--config", str(tmp_path / "none.ini")]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\nmodels = BVAR\nbenchmark = BVAR-SV\n")
    assert main(["describe", "--config", str(bad)]) == 2


def test_profiles_and_env_override(tmp_path, monkeypatch, project):
    cfg = load_config(project).resolved()
    assert (cfg.window, cfg.n_origins, cfg.n_iter) == (60, 4, 140)
    full = load_config(None)
    full.profile = "full"
    full = full.resolved()
    assert (full.window, full.n_origins, full.n_iter, full.n_burn) == (731, 567, 6000, 1000)
    assert full.spec("BVAR").n_keep == 5000
    assert PROFILES["desk"]["n_origins"] == 100
    monkeypatch.setenv("BVARCAST_DATA_DIR", str(tmp_path / "elsewhere"))
    assert load_config(project).data_dir == tmp_path / "elsewhere"
