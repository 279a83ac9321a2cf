"""Robust clustering of heavy tasks in the projected subspace.

Heavy tasks embed as U'(1/t sum_j y_j x_j), one k-vector per task.  The
clustering surrogate runs seeded trimmed Lloyd iterations on disjoint folds
and takes a coordinatewise median of the matched fold centers; assignments
then go to the nearest boosted center, with a distance-quantile outlier
budget.  Per-cluster radii r_l^2 = ||w_tilde_l - w_l||^2 + s_l^2 come from
a trimmed mean of per-task mean squared residuals.

The moment diagnostics at the bottom verify, numerically, the higher-order
moment bounds that justify clustering beyond second-moment separation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import MetaParameter, TaskData
from .seeding import as_generator

__all__ = [
    "ClusterModel",
    "ClusteringConfig",
    "boosts_for_confidence",
    "embed_heavy",
    "estimate_r2",
    "lift",
    "robust_cluster",
    "sos_moment_check",
    "trimmed_mean",
]

SOS_MOMENT_CONST = math.exp(6.0)  # explicit cap on the moment-bound constant


@dataclass(frozen=True)
class ClusteringConfig:
    k: int
    trim: float = 0.0  # outlier fraction budget
    boosts: int = 1  # median-of-means repetitions
    m: int = 2  # moment order, diagnostics only
    max_lloyd_iters: int = 100

    def __post_init__(self):
        if self.k < 1 or self.m < 1 or self.boosts < 1:
            raise ValueError("k, m, and boosts must be positive")
        if not 0.0 <= self.trim < 0.25:
            raise ValueError("trim must lie in [0, 1/4)")


def boosts_for_confidence(delta: float) -> int:
    """Default median-of-means repetition count, ceil(4 ln(1/delta))."""
    return max(1, math.ceil(4.0 * math.log(1.0 / delta)))


@dataclass
class ClusterModel:
    """Coarse mixture estimate: centers w_tilde (k, d), radii r_tilde^2, and
    heavy-task assignments (-1 marks an outlier)."""

    centers: np.ndarray
    radii: np.ndarray
    assignments: np.ndarray


def embed_heavy(heavy: Sequence[TaskData], U: np.ndarray) -> np.ndarray:
    """Projected rank-one statistics, one row U'((1/t) sum_j y_j x_j) per task."""
    U = np.asarray(U, dtype=float)
    out = np.empty((len(heavy), U.shape[1]))
    for i, task in enumerate(heavy):
        if task.x.shape[1] != U.shape[0]:
            raise ValueError("task dimension does not match the subspace")
        out[i] = U.T @ (task.x.T @ task.y) / task.x.shape[0]
    return out


def lift(U: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Map projected centers back to the ambient space: rows c -> U c."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    U = np.asarray(U, dtype=float)
    if centers.shape[1] != U.shape[1]:
        raise ValueError("centers do not live in the projected space")
    return centers @ U.T


def trimmed_mean(samples, eps: float, delta: float = 0.05) -> float:
    """Mean after deleting the ceil(2*eps*n) smallest and largest samples.

    The robust univariate location estimator behind every variance estimate
    here; its error on bounded-variance data is at most 18*sqrt(eps) standard
    deviations.  Statistically valid for n >= max(8, 1/eps); `delta` is part
    of the estimator interface but the point estimate does not depend on it.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.shape[0]
    if n == 0:
        raise ValueError("samples must be nonempty")
    if not 0.0 < eps <= 0.125:
        raise ValueError("eps must lie in (0, 1/8]")
    r = math.ceil(2.0 * eps * n)
    if 2 * r >= n:
        raise ValueError("trimming would empty the sample")
    return float(x[r : n - r].mean())


def _coordinatewise_trimmed_mean(points: np.ndarray, trim: float) -> np.ndarray:
    m = points.shape[0]
    r = math.ceil(2.0 * trim * m) if trim > 0 else 0
    if m == 0:
        raise ValueError("empty cluster")
    if 2 * r >= m:
        return np.median(points, axis=0)
    if r == 0:
        return points.mean(axis=0)
    srt = np.sort(points, axis=0)
    return srt[r : m - r].mean(axis=0)


def _farthest_point_init(
    points: np.ndarray, k: int, trim: float, rng: np.random.Generator
) -> np.ndarray:
    """k-center seeding that ignores the far `trim` tail, so isolated
    adversarial clouds cannot capture a seed."""
    m = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    first = int(rng.integers(m))
    centers[0] = points[first]
    mindist = np.linalg.norm(points - centers[0], axis=1)
    quantile_rank = int((1.0 - max(2.0 * trim, 0.0)) * (m - 1))
    for j in range(1, k):
        order = np.argsort(mindist, kind="stable")
        pick = order[min(quantile_rank, m - 1)]
        centers[j] = points[pick]
        mindist = np.minimum(mindist, np.linalg.norm(points - centers[j], axis=1))
    return centers


def _lloyd(points: np.ndarray, cfg: ClusteringConfig, rng) -> np.ndarray:
    m = points.shape[0]
    centers = _farthest_point_init(points, cfg.k, cfg.trim, rng)
    labels = np.full(m, -1)
    for _ in range(cfg.max_lloyd_iters):
        dists = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
        new_labels = np.argmin(dists, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(cfg.k):
            members = points[labels == j]
            if members.shape[0] == 0:
                # reseed an empty cluster at the trimmed farthest point
                mind = dists.min(axis=1)
                order = np.argsort(mind, kind="stable")
                pick = order[int((1.0 - max(2.0 * cfg.trim, 0.0)) * (m - 1))]
                centers[j] = points[pick]
            else:
                centers[j] = _coordinatewise_trimmed_mean(members, cfg.trim)
    return centers


def _greedy_match(reference: np.ndarray, candidate: np.ndarray) -> np.ndarray:
    """Reorder candidate rows to the reference by repeatedly taking the
    globally closest unmatched pair."""
    k = reference.shape[0]
    dists = np.linalg.norm(reference[:, None, :] - candidate[None, :, :], axis=2)
    out = np.empty_like(candidate)
    used_r, used_c = set(), set()
    flat = [(dists[i, j], i, j) for i in range(k) for j in range(k)]
    flat.sort()
    for _, i, j in flat:
        if i in used_r or j in used_c:
            continue
        out[i] = candidate[j]
        used_r.add(i)
        used_c.add(j)
        if len(used_r) == k:
            break
    return out


def robust_cluster(
    points: np.ndarray, cfg: ClusteringConfig, seed
) -> tuple[np.ndarray, np.ndarray]:
    """Cluster projected heavy-task statistics.

    Points are canonicalized by lexicographic sort before fold assignment,
    which makes the output exactly equivariant under input permutation.
    Returns (centers (k, dim), assignments with -1 for trimmed outliers).
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be (n, dim)")
    n = points.shape[0]
    if n < cfg.k:
        raise ValueError("need at least k points")
    if cfg.k > 1 and np.all(points == points[0]):
        raise ValueError("all points identical; k > 1 clustering is degenerate")
    rng = as_generator(seed)

    canon = np.lexsort(points.T[::-1])  # canonical order, first coordinate major
    perm = canon[rng.permutation(n)]
    folds = np.array_split(perm, min(cfg.boosts, n))

    fold_centers = []
    for fold in folds:
        if fold.size < cfg.k:
            continue
        fold_centers.append(_lloyd(points[fold], cfg, rng))
    if not fold_centers:
        raise ValueError("boosts leave folds smaller than k")
    reference = fold_centers[0]
    aligned = [reference] + [_greedy_match(reference, c) for c in fold_centers[1:]]
    centers = np.median(np.stack(aligned, axis=0), axis=0)

    dists = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
    assignments = np.argmin(dists, axis=1).astype(int)
    n_out = int(cfg.trim * n)
    if n_out > 0:
        mind = dists[np.arange(n), assignments]
        order = np.lexsort((np.arange(n), -mind))
        assignments[order[:n_out]] = -1
    return centers, assignments


def estimate_r2(
    heavy: Sequence[TaskData],
    centers: np.ndarray,
    assignments: np.ndarray,
    alpha: float,
    delta: float = 0.05,
) -> np.ndarray:
    """Per-cluster radii r_tilde_l^2 from mean squared residuals.

    Each member task contributes r_{l,i}^2 = (1/t) sum_j (y_j - x_j' w_l)^2;
    with alpha > 0 the cluster estimate is a trimmed mean at level
    min(alpha / p_hat_l, 1/8), otherwise the plain mean.  The trim level is
    floored at 1/|C_l| so tiny corrupted clusters stay estimable; clusters
    under 16 tasks fall back to the plain mean.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    assignments = np.asarray(assignments)
    k = centers.shape[0]
    n = len(heavy)
    radii = np.empty(k)
    for ell in range(k):
        members = [heavy[i] for i in range(n) if assignments[i] == ell]
        if not members:
            raise ValueError(f"cluster {ell} is empty")
        r2 = np.array(
            [float(np.mean((task.y - task.x @ centers[ell]) ** 2)) for task in members]
        )
        if alpha > 0.0:
            p_hat = len(members) / n
            eps = min(alpha / p_hat, 0.125)
            if len(members) >= 16:
                eps = min(max(eps, 1.0 / len(members)), 0.125)
                radii[ell] = trimmed_mean(r2, eps, delta)
            else:
                radii[ell] = float(r2.mean())
        else:
            radii[ell] = float(r2.mean())
    return radii


def sos_moment_check(
    meta: MetaParameter,
    t: int,
    n: int,
    m_max: int,
    n_directions: int,
    seed,
) -> dict:
    """Empirical check of the higher-order moment bounds on beta_hat - beta.

    For each order m <= m_max and random unit direction v, compares the
    empirical 2m-th moment (1/n) sum <beta_hat_i - beta_i, v>^(2m) on clean
    tasks against rho^(2m) (2m)^m C^m / t^m with C = e^6.  Passes when every
    ratio is at most 1.  For m = 1 the report also carries the analytic
    second moment v'[(1/t) B + (rho_bar/t) I]v implied by the mixture, where
    B mixes w w' over components.
    """
    if t < 2 * m_max:
        raise ValueError("need t >= 2*m per moment order requested")
    rng = as_generator(seed)
    from .model import derived_stats, sample_tasks

    rho = derived_stats(meta).rho
    dirs = rng.standard_normal((n_directions, meta.d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)

    # accumulate inner products in chunks to bound memory
    chunk = max(1, min(n, 20000))
    inner = np.empty((n, n_directions))
    done = 0
    while done < n:
        m_chunk = min(chunk, n - done)
        tasks = sample_tasks(meta, m_chunk, t, rng)
        for i, task in enumerate(tasks):
            beta_hat = task.x.T @ task.y / t
            dev = beta_hat - meta.W[:, task.truth.component]
            inner[done + i] = dirs @ dev
        done += m_chunk

    ratios = np.empty((m_max, n_directions))
    empirical = np.empty((m_max, n_directions))
    for m in range(1, m_max + 1):
        emp = np.mean(inner ** (2 * m), axis=0)
        bound = rho ** (2 * m) * (2 * m) ** m * SOS_MOMENT_CONST ** m / t ** m
        empirical[m - 1] = emp
        ratios[m - 1] = emp / bound

    # analytic second moment for the m = 1 identity
    W, s, p = meta.W, meta.s, meta.p
    B = (W * p) @ W.T
    rho_bar2 = float(np.sum(p * (np.sum(W * W, axis=0) + s * s)))
    second_theory = np.einsum(
        "ij,jk,ik->i", dirs, B / t + (rho_bar2 / t) * np.eye(meta.d), dirs
    )
    return {
        "ratios": ratios,
        "empirical_moments": empirical,
        "max_ratio": float(ratios.max()),
        "passed": bool(np.all(ratios <= 1.0)),
        "directions": dirs,
        "second_moment_empirical": np.mean(inner ** 2, axis=0),
        "second_moment_theory": second_theory,
        "constant": SOS_MOMENT_CONST,
    }
