"""End-to-end meta-learning: subspace -> clustering -> classification.

The pipeline consumes truth-free task views.  Scale parameters the analyst
is assumed to know (nu, p_min) enter as explicit inputs; evaluation against
ground truth lives in the helpers at the bottom and in the bench harness.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .classification import FittedMeta, refine
from .clustering import (
    ClusterModel,
    ClusteringConfig,
    boosts_for_confidence,
    embed_heavy,
    estimate_r2,
    lift,
    robust_cluster,
)
from .model import MetaParameter, TaskData
from .seeding import stream
from .subspace import THRESHOLD_CONST, SubspaceEstimate, robust_subspace

__all__ = [
    "PipelineResult",
    "run_pipeline",
    "match_components",
    "parameter_errors",
    "center_errors",
]

_RADIUS_FLOOR = 1e-12  # classification needs strictly positive radii


@dataclass
class PipelineResult:
    subspace: Optional[SubspaceEstimate]
    cluster: Optional[ClusterModel]
    fitted: Optional[FittedMeta]
    skipped: dict


def run_pipeline(
    light1: Sequence[TaskData],
    heavy: Sequence[TaskData],
    light2: Sequence[TaskData],
    k: int,
    alphas: tuple[float, float, float],
    nu: float,
    p_min: float,
    delta: float,
    seed: int,
    threshold_const: float = THRESHOLD_CONST,
    cluster_trim: Optional[float] = None,
) -> PipelineResult:
    """Run every stage whose input split is nonempty.

    alphas = (alpha_L1, alpha_H, alpha_L2) are the corruption levels the
    analyst budgets for each split.  Skipped stages appear in the result's
    `skipped` map; downstream stages needing their outputs skip too.
    """
    alpha_l1, alpha_h, alpha_l2 = alphas
    skipped = {"subspace": False, "clustering": False, "classification": False}

    subspace = None
    if light1:
        stats = np.vstack([t.y[:, None] * t.x for t in light1])
        subspace = robust_subspace(
            stats,
            k,
            alpha_l1,
            nu=nu,
            delta=delta,
            seed=stream(seed, "subspace"),
            threshold_const=threshold_const,
        )
    else:
        skipped["subspace"] = True

    cluster = None
    if heavy and subspace is not None:
        embedded = embed_heavy(heavy, subspace.U)
        trim = cluster_trim
        if trim is None:
            trim = min(alpha_h / p_min, 0.25) if alpha_h > 0 else 0.0
        cfg = ClusteringConfig(
            k=k, trim=trim, boosts=boosts_for_confidence(delta)
        )
        centers_proj, assignments = robust_cluster(
            embedded, cfg, stream(seed, "cluster")
        )
        centers = lift(subspace.U, centers_proj)
        radii = estimate_r2(heavy, centers, assignments, alpha_h, delta)
        cluster = ClusterModel(
            centers=centers,
            radii=np.maximum(radii, _RADIUS_FLOOR),
            assignments=assignments,
        )
    else:
        skipped["clustering"] = True

    fitted = None
    if light2 and cluster is not None:
        fitted = refine(light2, cluster, alpha_l2, delta)
    else:
        skipped["classification"] = True

    return PipelineResult(
        subspace=subspace, cluster=cluster, fitted=fitted, skipped=skipped
    )


def match_components(estimated: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Permutation aligning estimated rows to true rows (Hungarian matching);
    returns `perm` with estimated[perm[l]] matched to truth[l]."""
    cost = np.linalg.norm(truth[:, None, :] - estimated[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(truth.shape[0], dtype=int)
    perm[rows] = cols
    return perm


def center_errors(centers: np.ndarray, meta: MetaParameter) -> np.ndarray:
    """||w_tilde_l - w_l|| per component after optimal matching."""
    truth = meta.components
    perm = match_components(centers, truth)
    return np.linalg.norm(centers[perm] - truth, axis=1)


def parameter_errors(fitted: FittedMeta, meta: MetaParameter) -> dict:
    """Per-component errors of a fitted mixture against ground truth:
    ||w_hat - w|| / s, |s2_hat - s^2| / s^2, |p_hat - p|."""
    truth = meta.components
    perm = match_components(fitted.w_hat, truth)
    w_err = np.linalg.norm(fitted.w_hat[perm] - truth, axis=1) / meta.s
    s2 = meta.s ** 2
    s2_err = np.abs(fitted.s2_hat[perm] - s2) / s2
    p_err = np.abs(fitted.p_hat[perm] - meta.p)
    return {"w_err_over_s": w_err, "s2_rel_err": s2_err, "p_abs_err": p_err}
