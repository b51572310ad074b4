"""Command-line entry point: ``bvarcast <command> [options]``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import PROFILES, RunConfig, load_config
from .errors import BvarcastError
from .evaluation import build_report, crps, prediction_bands, rmse
from .forecast import RollingPlan, load_forecasts, run_rolling
from .market_data import (
    PredictorPanel,
    ReturnPanel,
    align_predictors,
    build_return_panel,
    describe,
    fetch_price_series,
    read_panel_csv,
    read_price_csv,
    write_panel_csv,
    write_price_csv,
)

log = logging.getLogger("bvarcast")

TABLE_FILES = {
    "coverage": "table2_coverage.csv",
    "success": "table_success.csv",
    "rmse": "table3_rmse.csv",
    "crps": "table4_crps.csv",
    "ls": "table6_pl.csv",
}


class CommandFailed(Exception):
    """Command finished but some requested artifacts are missing."""


def _setup_logging(out_dir: Path | None, verbose: bool):
    fmt = logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s", "%Y-%m-%dT%H:%M:%S")
    root = logging.getLogger("bvarcast")
    root.handlers.clear()
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    h = logging.StreamHandler(sys.stderr)
    h.setFormatter(fmt)
    root.addHandler(h)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        fh = logging.FileHandler(out_dir / "bvarcast.log")
        fh.setFormatter(fmt)
        root.addHandler(fh)


def _panel_paths(cfg: RunConfig):
    return cfg.out_dir / "returns.csv", cfg.out_dir / "predictors.csv"


def _load_panels(cfg: RunConfig, need_predictors: bool):
    ret_path, pred_path = _panel_paths(cfg)
    if not ret_path.exists():
        raise BvarcastError(f"{ret_path} not found; run 'bvarcast ingest' first")
    panel = read_panel_csv(ret_path, ReturnPanel)
    preds = None
    if pred_path.exists():
        preds = read_panel_csv(pred_path, PredictorPanel)
    elif need_predictors:
        raise BvarcastError(f"{pred_path} not found but a VARX model is configured")
    return panel, preds


def _plan(cfg: RunConfig, n_rows: int) -> RollingPlan:
    if cfg.first_origin is not None or cfg.n_origins is None:
        return RollingPlan(cfg.window, cfg.first_origin or 0, cfg.n_origins, cfg.stride)
    return RollingPlan.trailing(n_rows, cfg.window, cfg.n_origins, cfg.stride)


# ---------------------------------------------------------------------------
# commands

def cmd_ingest(cfg: RunConfig) -> None:
    if not cfg.targets:
        raise BvarcastError("no target series configured ([data] targets)")
    targets = [read_price_csv(cfg.data_dir / p, name) for name, p in cfg.targets]
    panel = build_return_panel(targets, cfg.start, cfg.end)
    price_dates = targets[0].window(cfg.start, cfg.end).dates
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    ret_path, pred_path = _panel_paths(cfg)
    write_panel_csv(panel, ret_path)
    lines = [f"targets: {', '.join(panel.names)}; {len(price_dates)} price rows "
             f"{price_dates[0].isoformat()}..{price_dates[-1].isoformat()}; {panel.T} returns"]
    if cfg.predictors:
        raw = [read_price_csv(cfg.data_dir / p, name) for name, p in cfg.predictors]
        preds = align_predictors(price_dates, raw)
        write_panel_csv(preds, pred_path)
        for name in preds.names:
            filled = preds.carried_forward[name]
            lines.append(f"{name}: {len(filled)} carried-forward dates")
            lines.extend(f"  {d.isoformat()}" for d in filled)
    (cfg.out_dir / "ingest.log").write_text("\n".join(lines) + "\n")
    log.info("wrote %s (%d x %d)%s", ret_path, panel.T, panel.N,
             f" and {pred_path}" if cfg.predictors else "")


def cmd_describe(cfg: RunConfig) -> None:
    panel, _ = _load_panels(cfg, need_predictors=False)
    st = describe(panel)
    path = cfg.out_dir / "table1_descriptive.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["statistic", *st.names])
        for row in st.ROWS:
            w.writerow([row, *(f"{v:.4f}" for v in getattr(st, row))])
    log.info("wrote %s", path)


def cmd_run(cfg: RunConfig) -> None:
    specs = [cfg.spec(m) for m in cfg.models]
    panel, preds = _load_panels(cfg, need_predictors=any(s.family == "VARX" for s in specs))
    plan = _plan(cfg, panel.T)
    log.info("plan: window %d rows (%s..%s in the first window), %d origins", plan.window,
             panel.dates[plan.first_origin].isoformat(),
             panel.dates[plan.first_origin + plan.window - 1].isoformat(),
             len(plan.origins(panel.T)))
    incomplete = {}
    for spec in specs:
        fs = run_rolling(panel, preds, spec, plan, cfg.draw_file(spec.model_id), workers=cfg.workers)
        if fs.failures:
            incomplete[spec.model_id] = sorted(fs.failures)
    if incomplete:
        msg = "; ".join(f"{m}: origins {v}" for m, v in incomplete.items())
        raise CommandFailed(f"incomplete origins remain ({msg})")


def _load_sets(cfg: RunConfig, models):
    sets = {}
    missing = [m for m in models if not cfg.draw_file(m).exists()]
    if missing:
        raise BvarcastError(f"missing draw files for {', '.join(missing)}; run 'bvarcast run' first")
    ref = None
    for m in models:
        fs = load_forecasts(cfg.draw_file(m), require_complete=True)
        plan = (fs.manifest["R"], fs.manifest["origins"], fs.manifest["series"])
        if ref is None:
            ref = (m, plan)
        elif plan != ref[1]:
            raise BvarcastError(f"rolling plan of {m} differs from {ref[0]}")
        sets[m] = fs
    return sets


def cmd_evaluate(cfg: RunConfig) -> None:
    sets = _load_sets(cfg, cfg.models)
    multi = [m for m in cfg.models if not m.upper().startswith("BAR")]
    if cfg.benchmark not in multi:
        raise BvarcastError("benchmark must be a multivariate model")
    report = build_report({m: sets[m] for m in multi}, cfg.benchmark, alpha=cfg.alpha,
                          mcs_reps=cfg.mcs_reps, seed=cfg.seed)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    for metric, name in TABLE_FILES.items():
        report.write_table_csv(metric, cfg.out_dir / name)
    uni = [m for m in cfg.models if m.upper().startswith("BAR")]
    with open(cfg.out_dir / "table7_univariate.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["measure", "model", *report.names])
        for measure, fn in (("RMSE", rmse), ("CRPS", crps)):
            for m in uni + [cfg.benchmark]:
                w.writerow([measure, m, *(repr(float(v)) for v in fn(sets[m]))])
    text = report.text()
    (cfg.out_dir / "report.txt").write_text(text)
    log.info("wrote evaluation tables to %s", cfg.out_dir)


def cmd_plot_data(cfg: RunConfig, model: str, series: str) -> Path:
    path = cfg.draw_file(model)
    if not path.exists():
        raise BvarcastError(f"unknown model {model!r}: no draw file {path}")
    fs = load_forecasts(path)
    i = fs.series(series)
    lo, hi = prediction_bands(fs.draws[:, :, i])
    point = fs.point[:, i]
    out = cfg.out_dir / f"bands_{model}_{series}.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "realized", "point", "lower", "upper"])
        for k in range(fs.n_origins):
            w.writerow([fs.dates[k].isoformat(), repr(float(fs.realized[k, i])), repr(float(point[k])),
                        repr(float(lo[k])), repr(float(hi[k]))])
    log.info("wrote %s (%d rows)", out, fs.n_origins)
    return out


def cmd_fetch(cfg: RunConfig, url: str, name: str, date_field: str, price_field: str) -> Path:
    series = fetch_price_series(url, name, date_field=date_field, price_field=price_field)
    cfg.data_dir.mkdir(parents=True, exist_ok=True)
    out = cfg.data_dir / f"{name}.csv"
    write_price_csv(series, out)
    log.info("wrote %s (%d rows)", out, len(series))
    return out


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI configuration file")
    common.add_argument("--profile", choices=sorted(PROFILES), help="sampler/rolling budget profile")
    common.add_argument("--seed", type=int)
    common.add_argument("--models", help="comma-separated model ids, e.g. BVAR,BVAR-SV,BAR1")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bvarcast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="prices -> return and predictor panels")
    sub.add_parser("describe", parents=[common], help="descriptive statistics of the return panel")
    sub.add_parser("run", parents=[common], help="rolling estimation and predictive draws")
    sub.add_parser("evaluate", parents=[common], help="forecast tables, DM tests and MCS")
    p = sub.add_parser("plot-data", parents=[common], help="predictive interval bands for one series")
    p.add_argument("--model", required=True)
    p.add_argument("--series", required=True)
    p = sub.add_parser("fetch", parents=[common], help="download a daily price history")
    p.add_argument("--url", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--date-field", default="date")
    p.add_argument("--price-field", default="price")
    return parser


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.profile:
        # an explicit profile replaces budget values from the file
        cfg = replace(cfg, profile=args.profile, window=None, n_origins=None, n_iter=None, n_burn=None)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.models:
        cfg.models = [m.strip() for m in args.models.split(",") if m.strip()]
        if cfg.benchmark not in cfg.models:
            cfg.benchmark = cfg.models[0] if not cfg.models[0].upper().startswith("BAR") else cfg.benchmark
    if args.out:
        cfg.out_dir = args.out
    return cfg.resolved()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"bvarcast: configuration error: {exc}", file=sys.stderr)
        return 2
    _setup_logging(cfg.out_dir if args.command != "fetch" else None, args.verbose)
    try:
        if args.command == "ingest":
            cmd_ingest(cfg)
        elif args.command == "describe":
            cmd_describe(cfg)
        elif args.command == "run":
            cmd_run(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg)
        elif args.command == "plot-data":
            cmd_plot_data(cfg, args.model, args.series)
        elif args.command == "fetch":
            cmd_fetch(cfg, args.url, args.name, args.date_field, args.price_field)
    except CommandFailed as exc:
        print(f"bvarcast {args.command}: {exc}", file=sys.stderr)
        return 1
    except (BvarcastError, OSError, KeyError) as exc:
        print(f"bvarcast {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
