"""Point and density forecast measures, Diebold-Mariano tests and the MCS."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import special, stats

from .errors import DataError
from .forecast import ForecastSet

LOG_2PI = math.log(2.0 * math.pi)
STAR_LEVELS = ((0.05, "**"), (0.10, "*"))


@dataclass(frozen=True)
class LossSeries:
    model: str
    series: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise DataError(f"{self.model}/{self.series}: losses must be a finite 1-D sequence")
        object.__setattr__(self, "values", v)


# ---------------------------------------------------------------------------
# per-origin scores

def squared_errors(fs: ForecastSet) -> np.ndarray:
    return (fs.point - fs.realized) ** 2


def rmse(fs: ForecastSet) -> np.ndarray:
    if fs.n_origins < 2:
        raise DataError("RMSE needs at least 2 origins")
    return np.sqrt(squared_errors(fs).mean(axis=0))


def success_rate(fs: ForecastSet) -> np.ndarray:
    """Percent of origins whose point forecast has the sign of the realization.

    Origins with a realization of exactly zero are left out.
    """
    real = fs.realized
    counted = real != 0
    if np.any(counted.sum(axis=0) == 0):
        raise DataError("every realization is zero for some series; success rate undefined")
    hits = (np.sign(fs.point) == np.sign(real)) & counted
    return 100.0 * hits.sum(axis=0) / counted.sum(axis=0)


def prediction_bands(draws: np.ndarray, level: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """Equal-tailed empirical quantiles over the draw axis (axis 1), linear interpolation."""
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(draws, [tail, 1.0 - tail], axis=1, method="linear")
    return lo, hi


def interval_violations(fs: ForecastSet, level: float = 0.95) -> np.ndarray:
    """Percent of realizations strictly outside the central ``level`` interval."""
    if fs.draws.shape[1] < 100:
        raise DataError("interval coverage needs at least 100 draws per origin")
    lo, hi = prediction_bands(fs.draws, level)
    outside = (fs.realized < lo) | (fs.realized > hi)
    return 100.0 * outside.mean(axis=0)


def log_score_series(fs: ForecastSet) -> np.ndarray:
    """Log predictive density per origin and series.

    The predictive density is the draw average of the per-draw conditional
    densities (normal, or Student-t when ``eta`` is stored).
    """
    y = fs.realized[:, None, :]
    mu, var = fs.cond_mean, fs.cond_var
    if fs.eta is None:
        logpdf = -0.5 * (LOG_2PI + np.log(var) + (y - mu) ** 2 / var)
    else:
        eta = fs.eta[:, :, None]
        logpdf = stats.t.logpdf(y, df=eta, loc=mu, scale=np.sqrt(var))
    out = special.logsumexp(logpdf, axis=1) - math.log(fs.draws.shape[1])
    if not np.all(np.isfinite(out)):
        raise DataError("predictive density underflows to zero at some realization")
    return out


def log_score(fs: ForecastSet) -> np.ndarray:
    """Average log predictive score over origins."""
    return log_score_series(fs).mean(axis=0)


def crps_draws(draws: np.ndarray, y) -> np.ndarray:
    """Empirical CRPS, ``E|X - y| - 0.5 E|X - X'|``, along axis 1 of ``draws``.

    ``draws`` is (O, M, ...) and ``y`` is (O, ...). The pair term uses the
    sorted-sample identity and costs O(M log M).
    """
    draws = np.asarray(draws, dtype=float)
    m = draws.shape[1]
    if m < 2:
        raise DataError("CRPS needs at least 2 draws")
    y = np.asarray(y, dtype=float)
    term1 = np.abs(draws - y[:, None]).mean(axis=1)
    xs = np.sort(draws, axis=1)
    w = (2.0 * np.arange(1, m + 1) - m - 1).reshape((1, m) + (1,) * (draws.ndim - 2))
    pair = 2.0 * (w * xs).sum(axis=1) / m**2
    return term1 - 0.5 * pair


def crps_series(fs: ForecastSet) -> np.ndarray:
    return crps_draws(fs.draws, fs.realized)


def crps(fs: ForecastSet) -> np.ndarray:
    return crps_series(fs).mean(axis=0)


# ---------------------------------------------------------------------------
# tests

@dataclass(frozen=True)
class DMResult:
    statistic: float
    pvalue: float


def dm_test(loss_a, loss_b, horizon: int = 1) -> DMResult:
    """Diebold-Mariano test with the Harvey-Leybourne-Newbold correction.

    Positive statistics mean ``loss_a`` is larger on average. The long-run
    variance uses autocovariances up to lag ``horizon - 1`` (rectangular
    kernel); the p-value is two-sided from Student-t with n - 1 dof.
    """
    a = loss_a.values if isinstance(loss_a, LossSeries) else np.asarray(loss_a, dtype=float)
    b = loss_b.values if isinstance(loss_b, LossSeries) else np.asarray(loss_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError("loss series must be 1-D with equal lengths")
    n = len(a)
    if n < 10:
        raise DataError("DM test needs at least 10 paired losses")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise DataError("losses must be finite")
    d = a - b
    dc = d - d.mean()
    gamma = [dc @ dc / n] + [dc[k:] @ dc[:-k] / n for k in range(1, horizon)]
    lrv = gamma[0] + 2.0 * sum(gamma[1:])
    if not lrv > 1e-14 * max(1.0, float(np.mean(d * d))):
        raise DataError("loss differential has zero variance; models are indistinguishable")
    stat = d.mean() / math.sqrt(lrv / n)
    h = horizon
    stat *= math.sqrt((n + 1 - 2 * h + h * (h - 1) / n) / n)
    p = 2.0 * stats.t.sf(abs(stat), df=n - 1)
    return DMResult(float(stat), float(p))


def stars(pvalue: float) -> str:
    if pvalue is None or not np.isfinite(pvalue):
        return ""
    for level, mark in STAR_LEVELS:
        if pvalue < level:
            return mark
    return ""


def block_bootstrap_indices(rng, n: int, reps: int, block_length: int) -> np.ndarray:
    """Circular moving-block bootstrap index matrix of shape (reps, n)."""
    n_blocks = -(-n // block_length)
    starts = rng.integers(0, n, size=(reps, n_blocks))
    idx = (starts[:, :, None] + np.arange(block_length)) % n
    return idx.reshape(reps, -1)[:, :n]


@dataclass
class MCSResult:
    models: tuple[str, ...]
    pvalues: dict[str, float]
    eliminated: list[str]
    alpha: float

    @property
    def included(self) -> list[str]:
        return [m for m in self.models if self.pvalues[m] >= self.alpha]


def model_confidence_set(losses, alpha: float = 0.10, bootstrap_reps: int = 5000,
                         block_length: int | None = None, rng=None, seed: int = 0) -> MCSResult:
    """Model confidence set with the T_max statistic.

    ``losses`` maps model name to a loss sequence (or is a sequence of
    :class:`LossSeries`). Models are eliminated one at a time, worst first;
    each model's MCS p-value is the running maximum of the elimination
    p-values, and the last survivor gets 1.
    """
    if isinstance(losses, Mapping):
        names = list(losses)
        cols = [np.asarray(losses[k], dtype=float) for k in names]
    else:
        names = [ls.model for ls in losses]
        cols = [ls.values for ls in losses]
    if len(names) < 2:
        raise DataError("MCS needs at least 2 models")
    if len({len(c) for c in cols}) != 1:
        raise DataError("loss series differ in length")
    L = np.column_stack(cols)
    if not np.all(np.isfinite(L)):
        raise DataError("losses must be finite")
    n = L.shape[0]
    if block_length is None:
        block_length = max(1, math.ceil(n ** (1.0 / 3.0)))
    if rng is None:
        rng = np.random.default_rng(seed)
    idx = block_bootstrap_indices(rng, n, bootstrap_reps, block_length)
    boot = _boot_means(L, idx)
    mean = L.mean(axis=0)

    alive = list(range(len(names)))
    pvalues: dict[str, float] = {}
    eliminated: list[str] = []
    running = 0.0
    while len(alive) > 1:
        d = mean[alive] - mean[alive].mean()
        db = boot[:, alive] - boot[:, alive].mean(axis=1, keepdims=True)
        centred = db - d
        var = (centred**2).mean(axis=0)
        if np.all(var <= 0):
            raise DataError("bootstrap variance is zero; all models have identical losses")
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(var > 0, d / np.sqrt(var), np.sign(d) * np.inf)
            tb = np.where(var > 0, centred / np.sqrt(var), 0.0)
        t = np.nan_to_num(t, nan=0.0)
        t_max = t.max()
        p = float(np.mean(tb.max(axis=1) >= t_max))
        worst = alive[int(np.argmax(t))]
        running = max(running, p)
        pvalues[names[worst]] = running
        eliminated.append(names[worst])
        alive.remove(worst)
    pvalues[names[alive[0]]] = 1.0
    return MCSResult(tuple(names), pvalues, eliminated, alpha)


def _boot_means(L, idx):
    # chunked to bound memory at reps x n x m
    out = np.empty((idx.shape[0], L.shape[1]))
    step = max(1, 2_000_000 // (idx.shape[1] * L.shape[1]))
    for s in range(0, idx.shape[0], step):
        out[s:s + step] = L[idx[s:s + step]].mean(axis=1)
    return out


# ---------------------------------------------------------------------------
# report

METRICS = ("coverage", "success", "rmse", "crps", "ls")


def _loss_matrix(fs: ForecastSet, metric: str) -> np.ndarray:
    if metric == "rmse":
        return squared_errors(fs)
    if metric == "crps":
        return crps_series(fs)
    if metric == "ls":
        return -log_score_series(fs)
    raise KeyError(metric)


@dataclass
class EvaluationReport:
    """Per model x series measures against a benchmark.

    ``values[metric][model]`` holds raw averages per series; ``relative``
    holds ratios (RMSE, CRPS) or differences (LS) to the benchmark, so the
    benchmark row is 1 or 0. Text tables print the raw value on the
    benchmark row. ``dm_pvalues`` and ``mcs`` cover RMSE, CRPS and LS.
    """

    models: list[str]
    names: tuple[str, ...]
    benchmark: str
    dates: tuple
    values: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    relative: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    dm_pvalues: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    mcs: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    mcs_pvalues: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)

    def cell(self, metric, model, i) -> str:
        if metric in ("coverage", "success"):
            return f"{self.values[metric][model][i]:.4f}"
        if model == self.benchmark:
            return f"{self.values[metric][model][i]:.5g}"
        return f"{self.relative[metric][model][i]:.5g}" + stars(self.dm_pvalues[metric][model][i])

    def write_table_csv(self, metric: str, path, models: Sequence[str] | None = None) -> None:
        models = list(models or self.models)
        tested = metric in ("rmse", "crps", "ls")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["model"]
            for name in self.names:
                header.append(name)
                if tested:
                    header += [f"{name}_rel", f"{name}_dm_p", f"{name}_stars", f"{name}_mcs"]
            w.writerow(header)
            for model in models:
                row = [model]
                for i in range(len(self.names)):
                    if tested:
                        p = self.dm_pvalues[metric][model][i]
                        row += [repr(float(self.values[metric][model][i])),
                                repr(float(self.relative[metric][model][i])),
                                "" if not np.isfinite(p) else repr(float(p)),
                                "" if model == self.benchmark else stars(p),
                                str(bool(self.mcs[metric][model][i])).lower()]
                    else:
                        row.append(repr(float(self.values[metric][model][i])))
                w.writerow(row)

    def text(self, models: Sequence[str] | None = None) -> str:
        models = list(models or self.models)
        titles = {
            "coverage": "Percentage of realizations outside the 95% predictive interval",
            "success": "Percentage of forecasts in the right direction",
            "rmse": "RMSE (benchmark) and ratio to benchmark",
            "crps": "CRPS (benchmark) and ratio to benchmark",
            "ls": "Log score (benchmark) and difference to benchmark",
        }
        width = max(12, *(len(m) + 2 for m in models))
        colw = max(14, *(len(n) + 2 for n in self.names))
        out = []
        for metric in METRICS:
            out.append(titles[metric])
            out.append("-" * (width + colw * len(self.names)))
            out.append("model".ljust(width) + "".join(n.rjust(colw) for n in self.names))
            for model in models:
                cells = []
                for i in range(len(self.names)):
                    c = self.cell(metric, model, i)
                    if metric in self.mcs and self.mcs[metric][model][i]:
                        c += " [M]"
                    cells.append(c.rjust(colw))
                out.append(model.ljust(width) + "".join(cells))
            out.append("")
        out.append("** and * : Diebold-Mariano p-value below 5% and 10% against "
                   f"{self.benchmark}.")
        out.append("[M]      : member of the 10% model confidence set.")
        return "\n".join(out) + "\n"


def check_aligned(sets: Mapping[str, ForecastSet]) -> None:
    it = iter(sets.items())
    ref_name, ref = next(it)
    for name, fs in it:
        if fs.names != ref.names:
            raise DataError(f"{name}: series {fs.names} differ from {ref_name}")
        if fs.origins.shape != ref.origins.shape or np.any(fs.origins != ref.origins):
            raise DataError(f"{name}: forecast origins differ from {ref_name}")
        if fs.dates != ref.dates:
            raise DataError(f"{name}: forecast dates differ from {ref_name}")


def build_report(sets: Mapping[str, ForecastSet], benchmark: str, *, alpha: float = 0.10,
                 mcs_reps: int = 5000, block_length: int | None = None, seed: int = 0) -> EvaluationReport:
    """Assemble all measures, DM tests against ``benchmark`` and MCS flags."""
    if benchmark not in sets:
        raise DataError(f"benchmark {benchmark!r} not among the evaluated models")
    check_aligned(sets)
    models = list(sets)
    ref = sets[benchmark]
    rep = EvaluationReport(models, ref.names, benchmark, ref.dates)
    rep.values["coverage"] = {m: interval_violations(fs) for m, fs in sets.items()}
    rep.values["success"] = {m: success_rate(fs) for m, fs in sets.items()}
    losses = {metric: {m: _loss_matrix(fs, metric) for m, fs in sets.items()}
              for metric in ("rmse", "crps", "ls")}
    rep.values["rmse"] = {m: np.sqrt(v.mean(axis=0)) for m, v in losses["rmse"].items()}
    rep.values["crps"] = {m: v.mean(axis=0) for m, v in losses["crps"].items()}
    rep.values["ls"] = {m: -v.mean(axis=0) for m, v in losses["ls"].items()}

    n = len(ref.names)
    for metric in ("rmse", "crps", "ls"):
        base = rep.values[metric][benchmark]
        rel, pv = {}, {}
        for m in models:
            v = rep.values[metric][m]
            rel[m] = v - base if metric == "ls" else v / base
            if m == benchmark:
                pv[m] = np.full(n, np.nan)
                continue
            pv[m] = np.array([
                _safe_dm(losses[metric][m][:, i], losses[metric][benchmark][:, i]) for i in range(n)
            ])
        rep.relative[metric] = rel
        rep.dm_pvalues[metric] = pv

        flags = {m: np.zeros(n, bool) for m in models}
        mp = {m: np.ones(n) for m in models}
        if len(models) > 1:
            for i in range(n):
                try:
                    res = model_confidence_set(
                        {m: losses[metric][m][:, i] for m in models}, alpha=alpha,
                        bootstrap_reps=mcs_reps, block_length=block_length,
                        rng=np.random.default_rng([seed, i, METRICS.index(metric)]))
                except DataError:
                    # identical losses across models: nothing can be eliminated
                    for m in models:
                        flags[m][i] = True
                    continue
                for m in models:
                    mp[m][i] = res.pvalues[m]
                    flags[m][i] = res.pvalues[m] >= alpha
        else:
            for m in models:
                flags[m][:] = True
        rep.mcs[metric] = flags
        rep.mcs_pvalues[metric] = mp
    return rep


def _safe_dm(a, b) -> float:
    try:
        return dm_test(a, b).pvalue
    except DataError:
        return float("nan")
