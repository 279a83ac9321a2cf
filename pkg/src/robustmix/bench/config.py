"""Strict JSON experiment configuration.

The config is a single JSON document; unknown keys are errors so sweeps
stay reproducible.  Each experiment ships a complete default, and a config
file only overrides the fields it names.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "default_config"]

THREADS_ENV_VAR = "ROBUSTMIX_THREADS"


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


_SUBSPACE_DEFAULTS: dict[str, Any] = {
    # Variance-spike point-cloud benchmark: d=10, k=1, n=1e4 with the
    # variance-spike distribution and the planted-coordinate corruption.
    "d": 10,
    "k": 1,
    "n": 10000,
    "alphas": [0.005, 0.01, 0.015, 0.02, 0.025],
    "methods": ["double_filter", "hrpca", "oracle"],
    # Calibrated filter scale for this instance family (see README):
    # the mean-shift test uses threshold_const*(alpha*mu + nu*sqrt(k alpha)).
    "nu": 0.2,
    "threshold_const": 6.0,
    "delta": 0.05,
}

_PIPELINE_DEFAULTS: dict[str, Any] = {
    "model": {
        "d": 32,
        "k": 3,
        "separation": 4.0,  # pairwise center distance, in noise units
        "noise": 1.0,
        "weights": None,  # uniform when null
    },
    "sizes": {"n_L1": 20000, "t_L1": 1, "n_H": 600, "t_H": 50, "n_L2": 3000, "t_L2": 25},
    "adversary": {
        "light1": {"strategy": "none", "alpha": 0.0},
        "heavy": {"strategy": "none", "alpha": 0.0},
        "light2": {"strategy": "none", "alpha": 0.0},
    },
    "nu": None,  # null -> sqrt(k) * rho^2 from the model
    "delta": 0.05,
    "threshold_const": 48.0,
    "tau": 20,
    "prediction_trials": 2000,
}

_MOMENTS_DEFAULTS: dict[str, Any] = {
    "d": 8,
    "t": 32,
    "n": 100000,
    "m_max": 3,
    "n_directions": 8,
    "bound_m": {"t": 5, "d": 4, "replicates": 100000},
    "chi_square": {"replicates": 100000},
    "tolerance_se": 5.0,
}

_TOP_LEVEL_KEYS = {
    "experiment",
    "seeds",
    "base_seed",
    "plots",
    "threads",
    "output",
    "subspace",
    "pipeline",
    "moments",
}


@dataclass
class ExperimentConfig:
    experiment: str
    seeds: int = 10
    base_seed: int = 0
    plots: bool = True
    threads: int = 0  # 0 = all cores; CLI flag takes precedence
    output: str = "results"  # CLI flag takes precedence
    subspace: dict = field(default_factory=lambda: copy.deepcopy(_SUBSPACE_DEFAULTS))
    pipeline: dict = field(default_factory=lambda: copy.deepcopy(_PIPELINE_DEFAULTS))
    moments: dict = field(default_factory=lambda: copy.deepcopy(_MOMENTS_DEFAULTS))

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "seeds": self.seeds,
            "base_seed": self.base_seed,
            "plots": self.plots,
            "threads": self.threads,
            "output": self.output,
            self.experiment: copy.deepcopy(getattr(self, self.experiment)),
        }


def _merge_strict(defaults: dict, override: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key: {path}{key}")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            out[key] = _merge_strict(defaults[key], value, f"{path}{key}.")
        else:
            out[key] = value
    return out


def default_config(experiment: str) -> ExperimentConfig:
    if experiment not in ("subspace", "pipeline", "moments"):
        raise ConfigError(f"unknown experiment: {experiment}")
    return ExperimentConfig(experiment=experiment)


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.experiment not in ("subspace", "pipeline", "moments"):
        raise ConfigError(f"experiment must be subspace|pipeline|moments, got {cfg.experiment!r}")
    if cfg.seeds < 1:
        raise ConfigError("seeds must be >= 1")
    if cfg.experiment == "subspace":
        sub = cfg.subspace
        if any(a < 0 for a in sub["alphas"]):
            raise ConfigError("subspace.alphas must be nonnegative")
        bad = set(sub["methods"]) - {"double_filter", "hrpca", "oracle"}
        if bad:
            raise ConfigError(f"subspace.methods contains unknown entries: {sorted(bad)}")
        if sub["d"] < 2 or sub["n"] < 1 or sub["k"] < 1:
            raise ConfigError("subspace.d/n/k out of range")
    if cfg.experiment == "pipeline":
        sizes = cfg.pipeline["sizes"]
        for key, value in sizes.items():
            if value < 0:
                raise ConfigError(f"pipeline.sizes.{key} must be nonnegative")
        for split, adv in cfg.pipeline["adversary"].items():
            if not 0.0 <= adv.get("alpha", 0.0) < 1.0:
                raise ConfigError(f"pipeline.adversary.{split}.alpha must lie in [0, 1)")
    if cfg.experiment == "moments":
        mom = cfg.moments
        if mom["t"] < 2 * mom["m_max"]:
            raise ConfigError("moments.t must be at least 2 * m_max")
    return cfg


def parse_config(doc: dict) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = set(doc) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config key: {sorted(unknown)[0]}")
    if "experiment" not in doc:
        raise ConfigError("missing required key: experiment")
    cfg = ExperimentConfig(
        experiment=doc["experiment"],
        seeds=int(doc.get("seeds", 10)),
        base_seed=int(doc.get("base_seed", 0)),
        plots=bool(doc.get("plots", True)),
        threads=int(doc.get("threads", 0)),
        output=str(doc.get("output", "results")),
    )
    for section, defaults in (
        ("subspace", _SUBSPACE_DEFAULTS),
        ("pipeline", _PIPELINE_DEFAULTS),
        ("moments", _MOMENTS_DEFAULTS),
    ):
        if section in doc:
            if not isinstance(doc[section], dict):
                raise ConfigError(f"{section} must be an object")
            setattr(cfg, section, _merge_strict(defaults, doc[section], f"{section}."))
    return _validate(cfg)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(doc)
