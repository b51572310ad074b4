"""Rolling-window re-estimation and one-step-ahead predictive simulation."""

from __future__ import annotations

import io
import json
import logging
import subprocess
import zipfile
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BvarcastError, DataError, SchemaError
from .estimators import (
    MinnesotaHyper,
    ModelSpec,
    PosteriorDrawSet,
    build_design,
    sample_ar,
    sample_posterior,
)
from .kernels import make_rng
from .market_data import PredictorPanel, ReturnPanel

log = logging.getLogger(__name__)

FORMAT_NAME = "bvarcast-draws"
FORMAT_VERSION = 1
MANIFEST_FIELDS = ("model", "family", "volatility", "p", "R", "seed", "n_iter", "n_burn",
                   "origins", "series")


@dataclass(frozen=True)
class RollingPlan:
    """Origins ``first_origin, first_origin + stride, ...``.

    Origin ``o`` fits rows ``[o, o + window)`` and forecasts row ``o + window``.
    ``n_origins=None`` runs until the data end.
    """

    window: int = 731
    first_origin: int = 0
    n_origins: int | None = None
    stride: int = 1

    def __post_init__(self):
        if self.window < 50:
            raise ValueError("window must be at least 50 rows")
        if self.stride < 1 or self.first_origin < 0:
            raise ValueError("stride must be >= 1 and first_origin >= 0")
        if self.n_origins is not None and self.n_origins < 1:
            raise ValueError("n_origins must be positive")

    def origins(self, n_rows: int) -> list[int]:
        last = n_rows - self.window - 1
        if last < self.first_origin:
            raise DataError(f"window {self.window} leaves no forecast origin in {n_rows} rows")
        full = list(range(self.first_origin, last + 1, self.stride))
        if self.n_origins is None:
            return full
        if self.n_origins > len(full):
            raise DataError(f"plan needs {self.n_origins} origins but the data allow {len(full)}")
        return full[:self.n_origins]

    @classmethod
    def trailing(cls, n_rows: int, window: int, n_origins: int, stride: int = 1) -> "RollingPlan":
        """Plan whose last origin forecasts the final row."""
        first = n_rows - window - 1 - (n_origins - 1) * stride
        if first < 0:
            raise DataError(f"{n_origins} origins with window {window} need more than {n_rows} rows")
        return cls(window=window, first_origin=first, n_origins=n_origins, stride=stride)


@dataclass(frozen=True)
class LastState:
    """Information at the forecast origin.

    ``lags`` is (p, N) with row 0 the most recent observation; ``exog`` the
    predictor values entering the next design row (VARX only).
    """

    lags: np.ndarray
    exog: np.ndarray | None = None

    def regressors(self) -> np.ndarray:
        parts = [np.asarray(self.lags, float).ravel()]
        if self.exog is not None:
            parts.append(np.asarray(self.exog, float).ravel())
        return np.concatenate(parts)


@dataclass
class Predictive:
    """Per-draw one-step-ahead samples and conditional density parameters."""

    draws: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eta: np.ndarray | None = None


@dataclass
class ForecastSet:
    """Predictive output of one model over a sequence of origins.

    Arrays are indexed (origin, draw, series) or (origin, series).
    ``cond_var`` is the conditional variance, or the squared scale of the
    Student-t when ``eta`` is present.
    """

    model: str
    names: tuple[str, ...]
    origins: np.ndarray
    dates: tuple[date, ...]
    draws: np.ndarray
    cond_mean: np.ndarray
    cond_var: np.ndarray
    realized: np.ndarray
    eta: np.ndarray | None = None
    manifest: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def __post_init__(self):
        self.names = tuple(self.names)
        self.dates = tuple(self.dates)
        self.origins = np.asarray(self.origins, dtype=int)
        o, m, n = self.draws.shape
        if self.realized.shape != (o, n) or self.cond_mean.shape != (o, m, n) or self.cond_var.shape != (o, m, n):
            raise SchemaError("forecast arrays have inconsistent shapes")
        if len(self.dates) != o or len(self.origins) != o or len(self.names) != n:
            raise SchemaError("forecast index lengths do not match the draw array")
        if self.eta is not None and self.eta.shape != (o, m):
            raise SchemaError("eta array has the wrong shape", field="eta")

    @property
    def point(self) -> np.ndarray:
        return self.draws.mean(axis=1)

    @property
    def n_origins(self) -> int:
        return len(self.origins)

    def series(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown series {name!r}; have {', '.join(self.names)}") from None


# ---------------------------------------------------------------------------
# predictive simulation

def _require(vol, keys, scheme):
    missing = [k for k in keys if k not in vol]
    if missing:
        raise DataError(f"{scheme} predictive needs {', '.join(missing)} in the draw set")


def one_step_predictive(draws: PosteriorDrawSet, last_state: LastState, rng) -> Predictive:
    """One y_{T+1} draw per retained posterior draw, with its conditional moments."""
    x = last_state.regressors()
    if x.shape[0] != draws.n_regressors:
        raise DataError(f"last state has {x.shape[0]} regressors, draws expect {draws.n_regressors}")
    mean = draws.coefficient_matrices() @ x
    m, n = mean.shape
    vol = draws.vol
    scheme = draws.spec.volatility
    eta = None
    scale = np.ones(m)
    if scheme == "CONST":
        _require(vol, ["sigma"], scheme)
        cov = vol["sigma"]
    elif scheme in ("SV", "SVT"):
        keys = ["A", "phi", "log_lambda_last"] + (["eta"] if scheme == "SVT" else [])
        _require(vol, keys, scheme)
        step = np.einsum("mij,mj->mi", np.linalg.cholesky(vol["phi"]), rng.standard_normal((m, n)))
        lam = np.exp(vol["log_lambda_last"] + step)
        a_inv = np.linalg.inv(vol["A"])
        cov = np.einsum("mik,mk,mjk->mij", a_inv, lam, a_inv)
        if scheme == "SVT":
            eta = vol["eta"].astype(float)
            w = rng.gamma(eta / 2.0, 2.0 / eta)
            scale = 1.0 / np.sqrt(w)
    elif scheme == "GARCH":
        _require(vol, ["omega", "b", "g", "corr", "h_last", "resid_last"], scheme)
        h = vol["omega"] + vol["b"] * vol["resid_last"] ** 2 + vol["g"] * vol["h_last"]
        d = np.sqrt(h)
        cov = vol["corr"] * d[:, :, None] * d[:, None, :]
    else:  # pragma: no cover - ModelSpec validates the scheme
        raise DataError(f"unknown scheme {scheme}")
    chol = np.linalg.cholesky(cov)
    z = np.einsum("mij,mj->mi", chol, rng.standard_normal((m, n)))
    y = mean + z * scale[:, None]
    var = np.diagonal(cov, axis1=1, axis2=2).copy()
    return Predictive(y, mean, var, eta)


def _window_state(values, p, exog_row=None):
    return LastState(values[::-1][:p].copy(), None if exog_row is None else exog_row.copy())


def fit_and_predict(spec: ModelSpec, window: np.ndarray, rng,
                    window_exog: np.ndarray | None = None) -> Predictive:
    """Estimate ``spec`` on a window of returns and simulate the next row."""
    p = spec.lags
    if spec.family == "AR":
        parts = []
        for i in range(window.shape[1]):
            d = sample_ar(window[:, i], p, spec, rng)
            parts.append(one_step_predictive(d, _window_state(window[:, [i]], p), rng))
        return Predictive(*(np.concatenate([getattr(q, f) for q in parts], axis=1)
                            for f in ("draws", "mean", "var")))
    if spec.family == "VARX":
        if window_exog is None:
            raise DataError("VARX model needs a predictor panel")
        Y, X = build_design(window, p, window_exog)
        state = _window_state(window, p, window_exog[-1])
    else:
        Y, X = build_design(window, p)
        state = _window_state(window, p)
    d = sample_posterior(spec, Y, X, rng)
    return one_step_predictive(d, state, rng)


def _run_origin(spec, values, exog, origin, window):
    rng = make_rng(spec.seed, origin)
    sl = slice(origin, origin + window)
    return fit_and_predict(spec, values[sl], rng, None if exog is None else exog[sl])


# ---------------------------------------------------------------------------
# storage

def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def build_manifest(spec: ModelSpec, plan: RollingPlan, origins, series, predictors=None) -> dict:
    return {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "model": spec.model_id,
        "family": spec.family,
        "volatility": spec.volatility,
        "p": spec.lags,
        "R": plan.window,
        "seed": spec.seed,
        "n_iter": spec.n_iter,
        "n_burn": spec.n_burn,
        "origins": [int(o) for o in origins],
        "series": list(series),
        "predictors": list(predictors) if predictors is not None else None,
        "prior": asdict(spec.prior),
        "plan": asdict(plan),
        "version": version_string(),
    }


def _block_name(origin):
    return f"origins/{origin:06d}.npz"


def _failure_name(origin):
    return f"failures/{origin:06d}.json"


def _encode_block(origin, when, pred: Predictive, realized) -> bytes:
    buf = io.BytesIO()
    arrays = dict(draws=pred.draws, cond_mean=pred.mean, cond_var=pred.var,
                  realized=np.asarray(realized, float), origin=np.array(origin),
                  date=np.array(when.isoformat()))
    if pred.eta is not None:
        arrays["eta"] = pred.eta
    np.savez_compressed(buf, **arrays)
    return buf.getvalue()


def _read_manifest(zf: zipfile.ZipFile, path) -> dict:
    try:
        manifest = json.loads(zf.read("manifest.json").decode("utf-8"))
    except KeyError:
        raise SchemaError(f"{path}: missing manifest", field="manifest") from None
    except ValueError as exc:
        raise SchemaError(f"{path}: manifest is not valid JSON ({exc})", field="manifest") from None
    if manifest.get("format") != FORMAT_NAME:
        raise SchemaError(f"{path}: not a {FORMAT_NAME} file", field="format")
    if manifest.get("format_version") != FORMAT_VERSION:
        raise SchemaError(f"{path}: unsupported format version {manifest.get('format_version')!r}",
                          field="format_version")
    for key in MANIFEST_FIELDS:
        if key not in manifest:
            raise SchemaError(f"{path}: manifest lacks field {key!r}", field=key)
    return manifest


def _open_zip(path):
    try:
        return zipfile.ZipFile(path, "r")
    except (zipfile.BadZipFile, EOFError, OSError) as exc:
        raise SchemaError(f"{path}: unreadable draw file ({exc})", field="archive") from None


class ForecastStore:
    """Append-only draw file: a zip with ``manifest.json`` and one block per origin.

    Only the owning process writes; blocks are appended as origins finish.
    """

    def __init__(self, path):
        self.path = Path(path)

    def exists(self) -> bool:
        return self.path.exists()

    def create(self, manifest: dict) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with zipfile.ZipFile(self.path, "w") as zf:
            zf.writestr("manifest.json", json.dumps(manifest, indent=2, sort_keys=True))

    def manifest(self) -> dict:
        with _open_zip(self.path) as zf:
            return _read_manifest(zf, self.path)

    def check_compatible(self, manifest: dict) -> None:
        have = self.manifest()
        for key in MANIFEST_FIELDS + ("predictors", "prior"):
            if have.get(key) != manifest.get(key):
                raise SchemaError(
                    f"{self.path}: manifest field {key!r} differs from the requested run "
                    f"({have.get(key)!r} != {manifest.get(key)!r})", field=key)

    def completed(self) -> set[int]:
        with _open_zip(self.path) as zf:
            return {int(n[8:14]) for n in zf.namelist() if n.startswith("origins/")}

    def append(self, origin: int, when: date, pred: Predictive, realized) -> None:
        with zipfile.ZipFile(self.path, "a") as zf:
            zf.writestr(_block_name(origin), _encode_block(origin, when, pred, realized),
                        compress_type=zipfile.ZIP_STORED)

    def record_failure(self, origin: int, message: str) -> None:
        with zipfile.ZipFile(self.path, "a") as zf:
            zf.writestr(_failure_name(origin), json.dumps({"origin": origin, "error": message}))

    def drop(self, origins) -> None:
        """Rewrite the file without the blocks (and failure records) of ``origins``."""
        drop = {_block_name(o) for o in origins} | {_failure_name(o) for o in origins}
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        with _open_zip(self.path) as src, zipfile.ZipFile(tmp, "w") as dst:
            for info in src.infolist():
                if info.filename not in drop:
                    dst.writestr(info, src.read(info.filename))
        tmp.replace(self.path)


def store_forecasts(fs: ForecastSet, path) -> None:
    """Write a complete :class:`ForecastSet` (manifest taken from ``fs.manifest``)."""
    manifest = dict(fs.manifest) if fs.manifest else {
        "format": FORMAT_NAME, "format_version": FORMAT_VERSION, "model": fs.model,
        "family": None, "volatility": None, "p": None, "R": None, "seed": None,
        "n_iter": None, "n_burn": None, "series": list(fs.names), "version": version_string(),
    }
    manifest["origins"] = [int(o) for o in fs.origins]
    manifest["series"] = list(fs.names)
    store = ForecastStore(path)
    store.create(manifest)
    for k, origin in enumerate(fs.origins):
        eta = None if fs.eta is None else fs.eta[k]
        pred = Predictive(fs.draws[k], fs.cond_mean[k], fs.cond_var[k], eta)
        store.append(int(origin), fs.dates[k], pred, fs.realized[k])
    for origin, msg in fs.failures.items():
        store.record_failure(int(origin), msg)


_BLOCK_KEYS = ("draws", "cond_mean", "cond_var", "realized", "origin", "date")


def load_forecasts(path, *, require_complete: bool = False) -> ForecastSet:
    """Read a draw file. Origins without a block are reported in ``failures``."""
    path = Path(path)
    with _open_zip(path) as zf:
        manifest = _read_manifest(zf, path)
        blocks, failures = {}, {}
        try:
            names = zf.namelist()
            for name in names:
                if name.startswith("failures/"):
                    rec = json.loads(zf.read(name))
                    failures[int(rec["origin"])] = rec["error"]
            for name in sorted(n for n in names if n.startswith("origins/")):
                with np.load(io.BytesIO(zf.read(name)), allow_pickle=False) as npz:
                    for key in _BLOCK_KEYS:
                        if key not in npz.files:
                            raise SchemaError(f"{path}:{name}: missing array {key!r}", field=key)
                    blocks[int(npz["origin"])] = {k: npz[k] for k in npz.files}
        except (zipfile.BadZipFile, EOFError, ValueError, OSError) as exc:
            raise SchemaError(f"{path}: corrupt draw file ({exc})", field="archive") from None
    origins = [o for o in manifest["origins"] if o in blocks]
    for o in manifest["origins"]:
        if o not in blocks:
            failures.setdefault(o, "not computed")
        else:
            failures.pop(o, None)
    if require_complete and failures:
        raise SchemaError(f"{path}: {len(failures)} origins incomplete", field="origins")
    if not origins:
        raise SchemaError(f"{path}: no completed origins", field="origins")
    first = blocks[origins[0]]
    if any(blocks[o]["draws"].shape != first["draws"].shape for o in origins):
        raise SchemaError(f"{path}: draw count differs across origins", field="draws")
    has_eta = "eta" in first
    if any(("eta" in blocks[o]) != has_eta for o in origins):
        raise SchemaError(f"{path}: eta present for some origins only", field="eta")
    if first["draws"].shape[1] != len(manifest["series"]):
        raise SchemaError(f"{path}: series count differs from manifest", field="series")
    stack = lambda key: np.stack([blocks[o][key] for o in origins])  # noqa: E731
    return ForecastSet(
        model=manifest["model"],
        names=manifest["series"],
        origins=np.array(origins),
        dates=[date.fromisoformat(str(blocks[o]["date"])) for o in origins],
        draws=stack("draws"),
        cond_mean=stack("cond_mean"),
        cond_var=stack("cond_var"),
        realized=stack("realized"),
        eta=stack("eta") if has_eta else None,
        manifest=manifest,
        failures=failures,
    )


# ---------------------------------------------------------------------------
# rolling driver

def run_rolling(panel: ReturnPanel, predictors: PredictorPanel | None, spec: ModelSpec,
                plan: RollingPlan, store=None, *, workers: int = 1) -> ForecastSet:
    """Fit ``spec`` on every rolling window of ``plan`` and simulate one step ahead.

    With a ``store`` path, completed origins already in the file are skipped
    and new blocks are appended as they finish. Sampler failures are recorded
    per origin; the run carries on.
    """
    if spec.family == "VARX":
        if predictors is None:
            raise DataError("VARX model needs a predictor panel")
        if tuple(predictors.dates) != tuple(panel.dates):
            raise DataError("predictor dates do not match the return panel")
    exog = predictors.values if (predictors is not None and spec.family == "VARX") else None
    origins = plan.origins(panel.T)
    manifest = build_manifest(spec, plan, origins, panel.names,
                              predictors.names if exog is not None else None)

    done: set[int] = set()
    st = ForecastStore(store) if store is not None else None
    results: dict[int, Predictive] = {}
    failures: dict[int, str] = {}
    if st is not None:
        if st.exists():
            st.check_compatible(manifest)
            done = st.completed()
        else:
            st.create(manifest)
    todo = [o for o in origins if o not in done]
    log.info("%s: %d origins, %d already stored, %d to run", spec.model_id, len(origins),
             len(origins) - len(todo), len(todo))

    def finish(origin, pred=None, error=None):
        target = origin + plan.window
        if error is not None:
            failures[origin] = error
            log.warning("%s origin %d failed: %s", spec.model_id, origin, error)
            if st is not None:
                st.record_failure(origin, error)
            return
        if st is not None:
            st.append(origin, panel.dates[target], pred, panel.values[target])
        else:
            results[origin] = pred
        log.info("%s origin %d -> %s done", spec.model_id, origin, panel.dates[target].isoformat())

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futs = {pool.submit(_run_origin, spec, panel.values, exog, o, plan.window): o for o in todo}
            for fut in as_completed(futs):
                o = futs[fut]
                try:
                    finish(o, fut.result())
                except (BvarcastError, np.linalg.LinAlgError, FloatingPointError) as exc:
                    finish(o, error=f"{type(exc).__name__}: {exc}")
    else:
        for o in todo:
            try:
                pred = _run_origin(spec, panel.values, exog, o, plan.window)
            except (BvarcastError, np.linalg.LinAlgError, FloatingPointError) as exc:
                finish(o, error=f"{type(exc).__name__}: {exc}")
            else:
                finish(o, pred)

    if st is not None:
        return load_forecasts(st.path)
    ok = [o for o in origins if o in results]
    if not ok:
        raise DataError(f"{spec.model_id}: every origin failed")
    first = results[ok[0]]
    return ForecastSet(
        model=spec.model_id,
        names=panel.names,
        origins=np.array(ok),
        dates=[panel.dates[o + plan.window] for o in ok],
        draws=np.stack([results[o].draws for o in ok]),
        cond_mean=np.stack([results[o].mean for o in ok]),
        cond_var=np.stack([results[o].var for o in ok]),
        realized=np.stack([panel.values[o + plan.window] for o in ok]),
        eta=np.stack([results[o].eta for o in ok]) if first.eta is not None else None,
        manifest=manifest,
        failures=failures,
    )


def spec_from_manifest(manifest: dict) -> ModelSpec:
    return ModelSpec(family=manifest["family"], volatility=manifest["volatility"],
                     lags=manifest["p"], n_iter=manifest["n_iter"], n_burn=manifest["n_burn"],
                     prior=MinnesotaHyper(**manifest.get("prior", {})), seed=manifest["seed"])
