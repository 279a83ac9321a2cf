"""Experiment runners.

Every experiment decomposes into pure cells keyed by (method, alpha, seed).
A cell regenerates its data from streams derived from the base seed and the
cell key, so results are identical whether cells run serially or on a pool,
and all methods at one (alpha, seed) see the same data.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Optional

import numpy as np

from .. import model as mdl
from ..clustering import sos_moment_check
from ..moments import chi_square_moment_check, second_moment_check
from ..pipeline import center_errors, parameter_errors, run_pipeline
from ..prediction import eval_prediction
from ..seeding import stream
from ..subspace import hrpca, robust_subspace, subspace_metrics, top_k_subspace
from .config import THREADS_ENV_VAR, ExperimentConfig
from .output import ResultRecord

__all__ = [
    "resolve_threads",
    "run_experiment",
    "run_moments_check",
    "run_pipeline_bench",
    "run_subspace_bench",
]


def resolve_threads(threads: Optional[int]) -> int:
    """0 or None means: the env var if set, else every core."""
    if threads is None or threads == 0:
        env = os.environ.get(THREADS_ENV_VAR)
        if env:
            return max(1, int(env))
        return os.cpu_count() or 1
    return max(1, threads)


def _figure2_sigma(d: int) -> np.ndarray:
    Sigma = np.eye(d)
    Sigma[0, 0] = 1.1
    return Sigma


def _figure2_meta(d: int) -> mdl.MetaParameter:
    # Rank-one signal matching the benchmark's second moment I + 0.1 e1 e1'.
    W = np.zeros((d, 1))
    W[0, 0] = math.sqrt(0.1)
    return mdl.MetaParameter(W=W, s=np.array([1.0]), p=np.array([1.0]))


def _subspace_cell(cfg: ExperimentConfig, method: str, alpha: float, seed: int):
    sub = cfg.subspace
    d, k, n = sub["d"], sub["k"], sub["n"]
    data_rng = stream(cfg.base_seed, "subspace", "data", alpha, seed)
    points, flags = mdl.figure2_points(d, alpha, n, data_rng)
    Sigma = _figure2_sigma(d)
    meta = _figure2_meta(d)

    records = []

    def emit(metric, value):
        records.append(
            ResultRecord("subspace", method, alpha, seed, metric, float(value))
        )

    if method == "oracle":
        U = top_k_subspace(points[~flags], k)
        emit("captured_variance", subspace_metrics(U, meta, Sigma)["captured_variance"])
        return records

    method_rng = stream(cfg.base_seed, "subspace", method, alpha, seed)
    if method == "double_filter":
        est = robust_subspace(
            points,
            k,
            alpha,
            nu=sub["nu"],
            delta=sub["delta"],
            seed=method_rng,
            threshold_const=sub["threshold_const"],
            corrupted=flags,
        )
    elif method == "hrpca":
        est = hrpca(points, k, alpha, seed=method_rng, corrupted=flags)
    else:
        raise ValueError(f"unknown subspace method {method!r}")
    emit("captured_variance", subspace_metrics(est.U, meta, Sigma)["captured_variance"])
    emit("removed_good", est.diagnostics.removed_good or 0)
    emit("removed_corrupted", est.diagnostics.removed_corrupted or 0)
    return records


def _pipeline_model(cfg: ExperimentConfig) -> mdl.MetaParameter:
    m = cfg.pipeline["model"]
    return mdl.simplex_meta(
        m["d"], m["k"], m["separation"], m["noise"], m.get("weights")
    )


def _pipeline_adversaries(cfg: ExperimentConfig, meta) -> dict[str, mdl.AdversaryConfig]:
    from ..model import derived_stats

    stats = derived_stats(meta)
    out = {}
    for split, entry in cfg.pipeline["adversary"].items():
        params = dict(entry.get("params", {}))
        if entry.get("strategy") == "large_leverage":
            params.setdefault("rho", stats.rho)
        out[split] = mdl.AdversaryConfig(
            strategy=entry.get("strategy", "none"),
            alpha=float(entry.get("alpha", 0.0)),
            params=params,
        )
    return out


def _pipeline_cell(cfg: ExperimentConfig, seed: int):
    pipe = cfg.pipeline
    meta = _pipeline_model(cfg)
    stats = mdl.derived_stats(meta)
    adv = _pipeline_adversaries(cfg, meta)
    splits = mdl.make_splits(
        meta, pipe["sizes"], adv, seed=int(stream(cfg.base_seed, "pipe", "data", seed).integers(2**63 - 1))
    )
    alphas = splits.alphas
    report_alpha = max(alphas)
    nu = pipe["nu"] if pipe["nu"] is not None else math.sqrt(meta.k) * stats.rho ** 2

    result = run_pipeline(
        mdl.views(splits.light1),
        mdl.views(splits.heavy),
        mdl.views(splits.light2),
        meta.k,
        alphas=alphas,
        nu=nu,
        p_min=stats.p_min,
        delta=pipe["delta"],
        seed=int(stream(cfg.base_seed, "pipe", "run", seed).integers(2**63 - 1)),
        threshold_const=pipe["threshold_const"],
    )

    records = []

    def emit(metric, value):
        records.append(
            ResultRecord("pipeline", "pipeline", report_alpha, seed, metric, float(value))
        )

    for stage, was_skipped in result.skipped.items():
        if was_skipped:
            emit(f"skipped_{stage}", 1.0)
    if result.subspace is not None:
        resid = subspace_metrics(result.subspace.U, meta)["residuals"]
        emit("subspace_residual_max", float(np.max(resid)))
    if result.cluster is not None:
        errs = center_errors(result.cluster.centers, meta)
        emit("cluster_center_err_max", float(np.max(errs)))
    if result.fitted is not None:
        errs = parameter_errors(result.fitted, meta)
        emit("w_err_over_s_max", float(np.max(errs["w_err_over_s"])))
        emit("s2_rel_err_max", float(np.max(errs["s2_rel_err"])))
        emit("p_abs_err_max", float(np.max(errs["p_abs_err"])))
        pred = eval_prediction(
            meta,
            result.fitted,
            tau=pipe["tau"],
            trials=pipe["prediction_trials"],
            seed=stream(cfg.base_seed, "pipe", "pred", seed),
        )
        emit("mse_map", pred["mse_map"])
        emit("mse_bayes", pred["mse_bayes"])
    return records


def _moments_cells(cfg: ExperimentConfig):
    """The moments experiment runs as one cell per check."""
    return [("bound_m", 0), ("chi_square", 0), ("sos", 0)]


def _moments_cell(cfg: ExperimentConfig, check: str, seed: int):
    mom = cfg.moments
    tol = float(mom["tolerance_se"])
    records = []

    def emit(metric, value, alpha=0.0):
        records.append(ResultRecord("moments", check, alpha, seed, metric, float(value)))

    if check == "bound_m":
        bm = mom["bound_m"]
        beta = np.zeros(bm["d"])
        beta[0] = 1.0
        res = second_moment_check(
            beta, 1.0, bm["t"], bm["replicates"], stream(cfg.base_seed, "mom", "bm", seed)
        )
        emit("max_z", res["max_z"])
        emit("passed", 1.0 if res["max_z"] <= tol else 0.0)
        for i, (emp, exp) in enumerate(zip(res["diag_empirical"], res["diag_expected"])):
            emit(f"diag_{i}_empirical", emp)
            emit(f"diag_{i}_expected", exp)
    elif check == "chi_square":
        reps = mom["chi_square"]["replicates"]
        rng = stream(cfg.base_seed, "mom", "chisq", seed)
        beta = np.array([0.6, -0.8, 0.0])
        v = np.array([0.5, 0.5, math.sqrt(0.5)])
        res = chi_square_moment_check(beta, 1.2, v, reps, rng)
        emit("max_z", res["max_z"])
        emit("passed", 1.0 if res["max_z"] <= tol else 0.0)
    elif check == "sos":
        d = mom["d"]
        W = np.zeros((d, 1))
        W[0, 0] = 1.0
        meta = mdl.MetaParameter(W=W, s=np.array([1.0]), p=np.array([1.0]))
        res = sos_moment_check(
            meta,
            t=mom["t"],
            n=mom["n"],
            m_max=mom["m_max"],
            n_directions=mom["n_directions"],
            seed=stream(cfg.base_seed, "mom", "sos", seed),
        )
        for m in range(1, mom["m_max"] + 1):
            emit(f"sos_ratio_m{m}", float(res["ratios"][m - 1].max()))
        emit("max_ratio", res["max_ratio"])
        emit("passed", 1.0 if res["passed"] else 0.0)
    else:
        raise ValueError(f"unknown moments check {check!r}")
    return records


def _cells(cfg: ExperimentConfig) -> list[tuple]:
    if cfg.experiment == "subspace":
        return [
            ("subspace", method, alpha, seed)
            for method in cfg.subspace["methods"]
            for alpha in cfg.subspace["alphas"]
            for seed in range(cfg.seeds)
        ]
    if cfg.experiment == "pipeline":
        return [("pipeline", seed) for seed in range(cfg.seeds)]
    if cfg.experiment == "moments":
        return [("moments", check, seed) for (check, seed) in _moments_cells(cfg)]
    raise ValueError(cfg.experiment)


def _run_cell(payload):
    cfg_doc, cell = payload
    from .config import parse_config

    cfg = parse_config(cfg_doc)
    kind = cell[0]
    if kind == "subspace":
        _, method, alpha, seed = cell
        return _subspace_cell(cfg, method, alpha, seed)
    if kind == "pipeline":
        return _pipeline_cell(cfg, cell[1])
    if kind == "moments":
        _, check, seed = cell
        return _moments_cell(cfg, check, seed)
    raise ValueError(kind)


def run_experiment(cfg: ExperimentConfig, threads: Optional[int] = None) -> list[ResultRecord]:
    """Map cells over a worker pool; records come back in deterministic cell
    order regardless of completion order."""
    cells = _cells(cfg)
    n_workers = resolve_threads(threads)
    payloads = [(cfg.to_dict(), cell) for cell in cells]
    if n_workers == 1 or len(cells) <= 1:
        chunks = [_run_cell(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=min(n_workers, len(cells))) as pool:
            chunks = list(pool.map(_run_cell, payloads))
    records: list[ResultRecord] = []
    for chunk in chunks:
        records.extend(chunk)
    return records


def run_subspace_bench(cfg: ExperimentConfig, threads: Optional[int] = None):
    if cfg.experiment != "subspace":
        raise ValueError("config is not a subspace experiment")
    return run_experiment(cfg, threads)


def run_pipeline_bench(cfg: ExperimentConfig, threads: Optional[int] = None):
    if cfg.experiment != "pipeline":
        raise ValueError("config is not a pipeline experiment")
    return run_experiment(cfg, threads)


def run_moments_check(cfg: ExperimentConfig, threads: Optional[int] = None):
    if cfg.experiment != "moments":
        raise ValueError("config is not a moments experiment")
    return run_experiment(cfg, threads)
