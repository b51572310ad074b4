"""Run configuration: INI file + profile defaults + command-line overrides."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path

from .estimators import MinnesotaHyper, ModelSpec

DATA_DIR_ENV = "BVARCAST_DATA_DIR"

DEFAULT_MODELS = ("BVAR", "BVAR-SV", "BVAR-GARCH", "BVARX", "BVARX-SV", "BVARX-GARCH",
                "BVAR-SVt", "BVARX-SVt")

PROFILES = {
    "full": {"window": 731, "n_origins": 567, "n_iter": 6000, "n_burn": 1000},
    "desk": {"window": 731, "n_origins": 100, "n_iter": 2000, "n_burn": 500},
}


@dataclass
class RunConfig:
    data_dir: Path = Path("data")
    targets: list[tuple[str, str]] = field(default_factory=list)
    predictors: list[tuple[str, str]] = field(default_factory=list)
    start: date | None = None
    end: date | None = None
    models: list[str] = field(default_factory=lambda: list(DEFAULT_MODELS))
    benchmark: str = "BVAR"
    profile: str = "desk"
    window: int | None = None
    n_origins: int | None = None
    first_origin: int | None = None
    stride: int = 1
    n_iter: int | None = None
    n_burn: int | None = None
    lags: int = 3
    seed: int = 20190228
    workers: int = 1
    out_dir: Path = Path("out")
    prior: MinnesotaHyper = field(default_factory=MinnesotaHyper)
    mcs_reps: int = 5000
    alpha: float = 0.10

    def resolved(self) -> "RunConfig":
        """Fill unset rolling/sampler fields from the profile and validate."""
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r} (expected one of {', '.join(PROFILES)})")
        defaults = PROFILES[self.profile]
        cfg = replace(self, **{k: v for k, v in defaults.items() if getattr(self, k) is None})
        if not cfg.models:
            raise ValueError("at least one model must be configured")
        for m in cfg.models:
            ModelSpec.from_id(m)
        if cfg.benchmark not in cfg.models:
            raise ValueError(f"benchmark {cfg.benchmark!r} is not in the model list")
        return cfg

    def spec(self, model_id: str) -> ModelSpec:
        spec = ModelSpec.from_id(model_id, n_iter=self.n_iter, n_burn=self.n_burn,
                                 prior=self.prior, seed=self.seed)
        if spec.family != "AR":
            spec = replace(spec, lags=self.lags)
        return spec

    @property
    def draws_dir(self) -> Path:
        return self.out_dir / "draws"

    def draw_file(self, model_id: str) -> Path:
        return self.draws_dir / f"{model_id}.zip"


def _pairs(text: str) -> list[tuple[str, str]]:
    out = []
    for item in (t.strip() for t in text.replace("\n", ",").split(",")):
        if not item:
            continue
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        out.append((name.strip(), path.strip()))
    return out


def _list(text: str) -> list[str]:
    return [t.strip() for t in text.replace("\n", ",").split(",") if t.strip()]


def _opt_int(section, key):
    raw = section.get(key, "").strip()
    return int(raw) if raw else None


def load_config(path=None) -> RunConfig:
    """Read an INI config; missing sections fall back to defaults.

    The data directory may be overridden by the ``BVARCAST_DATA_DIR``
    environment variable.
    """
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise FileNotFoundError(f"config file {path} not found")
        base = Path(path).resolve().parent
        if parser.has_section("data"):
            d = parser["data"]
            cfg.data_dir = base / d.get("dir", "data")
            cfg.targets = _pairs(d.get("targets", ""))
            cfg.predictors = _pairs(d.get("predictors", ""))
            cfg.start = date.fromisoformat(d["start"]) if d.get("start", "").strip() else None
            cfg.end = date.fromisoformat(d["end"]) if d.get("end", "").strip() else None
        if parser.has_section("run"):
            r = parser["run"]
            cfg.profile = r.get("profile", cfg.profile).strip()
            if r.get("models", "").strip():
                cfg.models = _list(r["models"])
            cfg.benchmark = r.get("benchmark", cfg.benchmark).strip()
            cfg.seed = r.getint("seed", cfg.seed)
            cfg.workers = r.getint("workers", cfg.workers)
            cfg.out_dir = base / r.get("out", "out")
        if parser.has_section("rolling"):
            s = parser["rolling"]
            cfg.window = _opt_int(s, "window")
            cfg.n_origins = _opt_int(s, "origins")
            cfg.first_origin = _opt_int(s, "first_origin")
            cfg.stride = s.getint("stride", cfg.stride)
        if parser.has_section("sampler"):
            s = parser["sampler"]
            cfg.n_iter = _opt_int(s, "n_iter")
            cfg.n_burn = _opt_int(s, "n_burn")
            cfg.lags = s.getint("lags", cfg.lags)
        if parser.has_section("prior"):
            s = parser["prior"]
            cfg.prior = MinnesotaHyper(**{k: s.getfloat(k) for k in
                                          ("lambda1", "lambda2", "lambda3", "lambda4", "own_mean")
                                          if k in s})
        if parser.has_section("evaluate"):
            s = parser["evaluate"]
            cfg.mcs_reps = s.getint("mcs_reps", cfg.mcs_reps)
            cfg.alpha = s.getfloat("alpha", cfg.alpha)
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        cfg.data_dir = Path(env)
    return cfg
