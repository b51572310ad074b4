"""Best-effort reproduction of the published crypto forecasting tables.

Needs a user-supplied daily price vintage covering 2015-08-08 .. 2019-02-28
for Bitcoin, Ethereum, Ripple and Litecoin (plus the predictor series for the
VARX models). Point a config file at it, for example::

    [data]
    dir = /path/to/prices
    targets = Bitcoin=btc.csv, Ethereum=eth.csv, Ripple=xrp.csv, Litecoin=ltc.csv
    predictors = SP500=spx.csv, Nikkei=n225.csv, ...
    start = 2015-08-08
    end = 2019-02-28

    [run]
    models = BVAR, BVAR-SV, BVAR-GARCH, BVARX, BVARX-SV, BVARX-GARCH, BVAR-SVt, BVARX-SVt, BAR1, BAR3
    benchmark = BVAR
    workers = 4

then run::

    python3 scripts/reproduce_reference.py --config reference.ini

The full profile (731-row windows, 567 origins, 6000 iterations with 1000
burned) takes hours. ``--check-only`` re-reads existing outputs. Exit code 0
means every check passed.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from bvarcast.cli import TABLE_FILES, main as cli_main
from bvarcast.config import load_config

SERIES = ("Bitcoin", "Ethereum", "Ripple", "Litecoin")

# Published descriptive statistics of the percent log returns.
TABLE1 = {
    "maximum": (22.5119, 41.2337, 102.7356, 51.0348),
    "minimum": (-20.7530, -31.5469, -61.6273, -39.5151),
    "mean": (0.2071, 0.4001, 0.2781, 0.1912),
    "median": (0.2343, -0.0884, -0.3537, 0.0000),
    "std": (3.9543, 6.7950, 7.4433, 5.7424),
    "skewness": (-0.2624, 0.4898, 3.0179, 1.2631),
    "kurtosis": (7.8178, 7.6368, 42.6234, 15.3417),
}
TOLERANCE = 0.05


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _within(value, ref, tol=TOLERANCE):
    if ref == 0.0:
        return abs(value) <= tol
    return abs(value - ref) <= tol * abs(ref)


def check_descriptive(out: Path) -> tuple[bool, list[str]]:
    rows = {r["statistic"]: r for r in _rows(out / "table1_descriptive.csv")}
    misses = []
    for stat, refs in TABLE1.items():
        for name, ref in zip(SERIES, refs):
            got = float(rows[stat][name])
            if not _within(got, ref):
                misses.append(f"{stat}/{name}: {got:.4f} vs {ref:.4f}")
    return not misses, misses


def _relative(out: Path, metric: str, model: str) -> dict[str, float]:
    row = next(r for r in _rows(out / TABLE_FILES[metric]) if r["model"] == model)
    return {name: float(row[f"{name}_rel"]) for name in SERIES}


def check_sv_rmse(out: Path) -> tuple[bool, list[str]]:
    notes, ok = [], True
    for model in ("BVAR-SV", "BVAR-SVt"):
        rel = _relative(out, "rmse", model)
        for name in ("Ripple", "Litecoin"):
            notes.append(f"{model} RMSE ratio {name} = {rel[name]:.5f}")
            ok &= rel[name] < 1.0
    return ok, notes


def check_svt_crps(out: Path) -> tuple[bool, list[str]]:
    rel = _relative(out, "crps", "BVAR-SVt")
    return all(v < 1.0 for v in rel.values()), [f"BVAR-SVt CRPS ratio {k} = {v:.5f}" for k, v in rel.items()]


def check_univariate(out: Path) -> tuple[bool, list[str]]:
    table = {}
    for r in _rows(out / "table7_univariate.csv"):
        table[(r["measure"], r["model"])] = {name: float(r[name]) for name in SERIES}
    notes, ok = [], True
    for measure in ("RMSE", "CRPS"):
        base = table[(measure, "BVAR")]
        for model in ("BAR1", "BAR3"):
            for name in SERIES:
                v = table[(measure, model)][name]
                good = _within(v, base[name])
                ok &= good
                if not good:
                    notes.append(f"{measure} {model}/{name}: {v:.4f} vs {base[name]:.4f}")
    return ok, notes


CHECKS = {
    "a": ("descriptive statistics within 5%", check_descriptive),
    "b": ("SV and SVt RMSE ratios below 1 for Ripple and Litecoin", check_sv_rmse),
    "c": ("SVt CRPS ratios below 1 for all four series", check_svt_crps),
    "d": ("AR(1)/AR(3) RMSE and CRPS within 5% of the VAR(3)", check_univariate),
}


def check(out: Path) -> dict[str, tuple[bool, list[str]]]:
    return {key: fn(out) for key, (_, fn) in CHECKS.items()}


def run(config: Path, out: Path | None, profile: str) -> int:
    common = ["--config", str(config), "--profile", profile]
    if out is not None:
        common += ["--out", str(out)]
    for cmd in ("ingest", "describe", "run", "evaluate"):
        code = cli_main([cmd, *common])
        if code != 0:
            print(f"bvarcast {cmd} exited with {code}", file=sys.stderr)
            return code
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, required=True)
    ap.add_argument("--out", type=Path)
    ap.add_argument("--profile", default="full", choices=("full", "desk"))
    ap.add_argument("--check-only", action="store_true")
    args = ap.parse_args(argv)
    if not args.check_only:
        code = run(args.config, args.out, args.profile)
        if code != 0:
            return code
    out = args.out or load_config(args.config).out_dir
    results = check(out)
    for key, (ok, notes) in results.items():
        print(f"({key}) {'PASS' if ok else 'FAIL'}  {CHECKS[key][0]}")
        for line in notes:
            print(f"      {line}")
    return 0 if all(ok for ok, _ in results.values()) else 1


if __name__ == "__main__":
    sys.exit(main())
