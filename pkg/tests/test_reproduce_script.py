import importlib.util
from datetime import date
from pathlib import Path

import numpy as np

from bvarcast.cli import main
from bvarcast.market_data import PriceSeries, write_price_csv

from conftest import daily


def load_script():
    path = Path(__file__).resolve().parents[1] / "scripts" / "reproduce_reference.py"
    spec = importlib.util.spec_from_file_location("reproduce_reference", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def test_checks_run_on_cli_outputs(tmp_path, rng):
    mod = load_script()
    data = tmp_path / "data"
    data.mkdir()
    dates = daily(date(2016, 1, 1), 70)
    for name in mod.SERIES:
        write_price_csv(PriceSeries(name, dates, 100 * np.exp(np.cumsum(rng.normal(0, 0.04, 70)))),
                        data / f"{name}.csv")
    cfg = tmp_path / "ref.ini"
    cfg.write_text(
        "[data]\ndir = data\ntargets = " + ", ".join(f"{n}={n}.csv" for n in mod.SERIES) + "\n"
        "[run]\nmodels = BVAR, BVAR-SV, BVAR-SVt, BAR1, BAR3\nbenchmark = BVAR\nout = out\n"
        "[rolling]\nwindow = 55\norigins = 3\n[sampler]\nn_iter = 130\nn_burn = 20\nlags = 1\n"
        "[evaluate]\nmcs_reps = 100\n")
    for cmd in ("ingest", "describe", "run", "evaluate"):
        assert main([cmd, "--config", str(cfg)]) == 0
    results = mod.check(tmp_path / "out")
    assert set(results) == {"a", "b", "c", "d"}
    ok, misses = results["a"]
    assert not ok and misses  # synthetic data cannot match the published table
    assert mod.main(["--config", str(cfg), "--check-only"]) in (0, 1)
