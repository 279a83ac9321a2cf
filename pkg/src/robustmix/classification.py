"""Likelihood classification of light tasks and refined parameter estimation.

Each light task joins the cluster minimizing the Gaussian negative
log-likelihood (1 / 2 r_l^2) sum_j (y_j - x_j' w_l)^2 + t log r_l against
the coarse model.  Per cluster, the pooled examples go through iterative
trimmed least squares, noise variances come from a trimmed mean of per-task
residual energies, and weights are cluster fractions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .clustering import ClusterModel, trimmed_mean
from .model import TaskData

__all__ = [
    "FittedMeta",
    "classify",
    "refine",
    "trimmed_least_squares",
]


@dataclass
class FittedMeta:
    """Refined mixture estimate.  `fallback[l]` marks a component whose
    cluster emptied after classification: its center and variance are copied
    from the coarse model and its weight is zero."""

    w_hat: np.ndarray  # (k, d)
    s2_hat: np.ndarray  # (k,)
    p_hat: np.ndarray  # (k,)
    fallback: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def __post_init__(self):
        if self.fallback.size == 0:
            self.fallback = np.zeros(self.w_hat.shape[0], dtype=bool)
        if np.any(self.s2_hat <= 0):
            raise ValueError("noise variances must be positive")
        if np.any(self.p_hat < 0) or self.p_hat.sum() > 1.0 + 1e-12:
            raise ValueError("weights must be nonnegative with total mass <= 1")

    @property
    def k(self) -> int:
        return self.w_hat.shape[0]


def classify(batch: TaskData, model: ClusterModel) -> int:
    """Most likely cluster for one batch; ties break to the lowest label."""
    centers = model.centers
    radii = np.asarray(model.radii, dtype=float)
    if centers.shape[0] < 1 or np.any(radii <= 0):
        raise ValueError("model needs at least one center with positive radius")
    resid = batch.y[:, None] - batch.x @ centers.T  # (t, k)
    sq = np.sum(resid * resid, axis=0)
    t = batch.x.shape[0]
    objective = sq / (2.0 * radii) + t * 0.5 * np.log(radii)
    return int(np.argmin(objective))


def trimmed_least_squares(
    X: np.ndarray,
    y: np.ndarray,
    alpha: float,
    max_rounds: int = 10,
    ridge: float = 0.0,
) -> np.ndarray:
    """Least squares with iterative residual trimming.

    Splits the corruption budget evenly across rounds: each of `max_rounds`
    passes refits on the survivors and drops the ceil(alpha*n/max_rounds)
    largest absolute residuals (ties keep the lower index), stopping once
    ceil(alpha*n) points are gone.  alpha = 0 is a single ordinary solve,
    bit-for-bit.  Singular systems raise unless a ridge is requested
    explicitly.  The cap sits at 1/4 inclusive: refinement budgets clip there.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n <= d:
        raise ValueError("need more examples than dimensions")
    if not 0.0 <= alpha <= 0.25:
        raise ValueError("alpha must lie in [0, 1/4]")

    def solve(A, b):
        if ridge > 0.0:
            G = A.T @ A + ridge * np.eye(d)
            return np.linalg.solve(G, A.T @ b)
        w, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
        if rank < d:
            raise np.linalg.LinAlgError(
                "singular normal equations; pass ridge > 0 to regularize"
            )
        return w

    if alpha == 0.0:
        return solve(X, y)

    per_round = math.ceil(alpha * n / max_rounds)
    budget = math.ceil(alpha * n)  # total removals never exceed the budget
    keep = np.arange(n)
    w = solve(X, y)
    for _ in range(max_rounds):
        drop = min(per_round, budget - (n - keep.size))
        if drop <= 0 or drop >= keep.size:
            break
        resid = np.abs(y[keep] - X[keep] @ w)
        order = np.lexsort((keep, resid))  # ascending residual, index tiebreak
        keep = np.sort(keep[order[: keep.size - drop]])
        if keep.size <= d:
            raise ValueError("trimming exhausted the sample")
        w = solve(X[keep], y[keep])
    return w


def refine(
    light2: Sequence[TaskData],
    model: ClusterModel,
    alpha: float,
    delta: float = 0.05,
    max_rounds: int = 10,
) -> FittedMeta:
    """Classify every task, then robustly re-estimate each component.

    Per cluster l the regression budget is min(4*alpha / p_hat_l, 1/4): the
    worst-case corrupted share a cluster can inherit.  Noise variances use
    the trimmed mean of per-task mean squared residuals at the same budget
    capped at 1/8; weights are cluster fractions of the classified tasks.
    """
    if not light2:
        raise ValueError("light2 must be nonempty")
    k = model.centers.shape[0]
    n = len(light2)
    labels = np.array([classify(task, model) for task in light2])

    w_hat = np.empty((k, model.centers.shape[1]))
    s2_hat = np.empty(k)
    p_hat = np.empty(k)
    fallback = np.zeros(k, dtype=bool)
    for ell in range(k):
        members = [light2[i] for i in range(n) if labels[i] == ell]
        p_hat[ell] = len(members) / n
        if not members:
            w_hat[ell] = model.centers[ell]
            s2_hat[ell] = max(float(model.radii[ell]), 1e-12)
            p_hat[ell] = 0.0
            fallback[ell] = True
            continue
        X = np.vstack([m.x for m in members])
        yv = np.concatenate([m.y for m in members])
        budget = min(4.0 * alpha / p_hat[ell], 0.25) if alpha > 0 else 0.0
        w_hat[ell] = trimmed_least_squares(X, yv, budget, max_rounds=max_rounds)
        r2 = np.array(
            [float(np.mean((m.y - m.x @ w_hat[ell]) ** 2)) for m in members]
        )
        if alpha > 0.0 and len(members) >= 16:
            eps = min(max(budget, 1.0 / len(members)), 0.125)
            s2 = trimmed_mean(r2, eps, delta)
        else:
            s2 = float(r2.mean())
        s2_hat[ell] = max(s2, 1e-12)
    return FittedMeta(w_hat=w_hat, s2_hat=s2_hat, p_hat=p_hat, fallback=fallback)
