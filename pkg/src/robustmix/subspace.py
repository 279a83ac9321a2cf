"""Outlier-robust subspace estimation by double filtering.

The estimator alternates between a candidate top-k subspace of the
rank-one second-moment statistics and a two-stage filter on the projected
energies z_i = ||U' p_i||^2:

  1. quantile trim: drop the upper and lower ceil(2*alpha*n) scores;
  2. mean-shift test: if removing the tails barely moved the mean, keep the
     whole set; otherwise draw a uniform level and re-admit every trimmed
     point whose excess score falls below it.

The randomized re-admission removes, in expectation, at least twice as many
corrupted points as clean ones per invocation.  A small number of restarts
boosts the success probability; the largest surviving set wins.

Also here: the HRPCA single-filter baseline (one removal per round, sampled
proportionally to projected energy) and subspace quality metrics.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import MetaParameter
from .seeding import as_generator, stream

__all__ = [
    "FilterDiagnostics",
    "SubspaceEstimate",
    "DoubleFilterStep",
    "double_filter",
    "double_filter_detail",
    "first_filter",
    "hrpca",
    "principal_angle",
    "rank_one_scores",
    "robust_subspace",
    "signal_second_moment",
    "subspace_metrics",
    "top_k_subspace",
]

ALPHA_MAX = 1.0 / 36.0
THRESHOLD_CONST = 48.0  # multiplier in the mean-shift test


@dataclass
class FilterDiagnostics:
    survivors: np.ndarray  # indices into the input points
    restarts_run: int
    inner_iterations: list[int]  # filter invocations per restart
    removed_good: Optional[int] = None  # need truth flags; evaluation only
    removed_corrupted: Optional[int] = None
    alpha_clamped: bool = False
    survivor_history: list[list[int]] = field(default_factory=list)  # sizes per restart


@dataclass
class SubspaceEstimate:
    U: np.ndarray  # (d, k), semi-orthogonal
    diagnostics: FilterDiagnostics


def top_k_subspace(points_or_accumulator: np.ndarray, k: int) -> np.ndarray:
    """Top-k eigenbasis of the second-moment accumulator.

    Accepts either an (n, d) stack of points (accumulated as P'P) or a d x d
    symmetric accumulator directly.  Columns are orthonormal, ordered by
    descending eigenvalue, signed so each column's largest-magnitude entry
    is positive.
    """
    A = np.asarray(points_or_accumulator, dtype=float)
    if A.ndim != 2:
        raise ValueError("expected a 2-d array")
    if not (A.shape[0] == A.shape[1] and np.allclose(A, A.T)):
        A = A.T @ A
    d = A.shape[0]
    if k > d:
        raise ValueError("k cannot exceed the ambient dimension")
    if not np.any(A):
        raise ValueError("all-zero accumulator has no principal subspace")
    eigvals, eigvecs = np.linalg.eigh(A)
    U = eigvecs[:, ::-1][:, :k].copy()
    for j in range(k):
        lead = np.argmax(np.abs(U[:, j]))
        if U[lead, j] < 0:
            U[:, j] = -U[:, j]
    return U


def rank_one_scores(points: np.ndarray, U: np.ndarray) -> np.ndarray:
    """z_i = ||U' p_i||^2, the projected energy of each point.

    Equals tr(U' p p' U), the trace statistic of the filter, for the
    rank-one matrices p p'.
    """
    points = np.asarray(points, dtype=float)
    U = np.asarray(U, dtype=float)
    if points.shape[-1] != U.shape[0]:
        raise ValueError("points and subspace dimensions disagree")
    proj = points @ U
    return np.einsum("ij,ij->i", proj, proj)


def first_filter(scores: np.ndarray, alpha: float) -> np.ndarray:
    """Survivor indices after dropping the upper and lower 2*alpha quantiles.

    Exactly ceil(2*alpha*n) scores go from each end; ties break by original
    index with the lower index surviving.  alpha = 0 removes nothing.
    """
    scores = np.asarray(scores, dtype=float)
    n = scores.shape[0]
    if n == 0:
        raise ValueError("scores must be nonempty")
    if not 0.0 <= alpha < 0.25:
        raise ValueError("alpha must lie in [0, 1/4)")
    r = math.ceil(2.0 * alpha * n)
    if r == 0:
        return np.arange(n)
    if 2 * r >= n:
        raise ValueError("quantile removal would exhaust the sample")
    order = np.lexsort((np.arange(n), scores))  # by score, then index
    return np.sort(order[r : n - r])


@dataclass
class DoubleFilterStep:
    """Everything one filter invocation decided, for diagnostics and tests."""

    survivors: np.ndarray
    changed: bool
    mu_all: float
    mu_good: float
    threshold: float
    first_survivors: np.ndarray
    scores: np.ndarray
    w_cut: Optional[float] = None  # second-filter level, if it ran


def double_filter_detail(
    points: np.ndarray,
    k: int,
    alpha: float,
    nu: float,
    rng: np.random.Generator,
    threshold_const: float = THRESHOLD_CONST,
) -> DoubleFilterStep:
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if not 0.0 < alpha <= ALPHA_MAX:
        raise ValueError("alpha must lie in (0, 1/36]")
    if nu <= 0:
        raise ValueError("nu must be positive")
    if n < k:
        raise ValueError("need at least k points")
    U0 = top_k_subspace(points.T @ points, k)
    z = rank_one_scores(points, U0)
    good = first_filter(z, alpha)
    if good.size == 0:
        raise ValueError("first filter removed every point")
    mu_all = float(z.mean())
    mu_good = float(z[good].mean())
    threshold = threshold_const * (alpha * mu_good + nu * math.sqrt(k * alpha))
    if mu_all - mu_good <= threshold:
        return DoubleFilterStep(
            survivors=np.arange(n),
            changed=False,
            mu_all=mu_all,
            mu_good=mu_good,
            threshold=threshold,
            first_survivors=good,
            scores=z,
        )
    removed = np.setdiff1d(np.arange(n), good, assume_unique=True)
    excess = z[removed] - mu_good
    w_cut = float(rng.uniform(0.0, 1.0) * excess.max())
    added_back = removed[excess <= w_cut]
    survivors = np.sort(np.concatenate([good, added_back]))
    return DoubleFilterStep(
        survivors=survivors,
        changed=survivors.size != n,
        mu_all=mu_all,
        mu_good=mu_good,
        threshold=threshold,
        first_survivors=good,
        scores=z,
        w_cut=w_cut,
    )


def double_filter(
    points: np.ndarray,
    k: int,
    alpha: float,
    nu: float,
    seed,
    threshold_const: float = THRESHOLD_CONST,
) -> np.ndarray:
    """One filtering pass; returns surviving indices into `points`.

    Either the whole input comes back (mean-shift test passed) or the
    trimmed set plus the randomly re-admitted tail.
    """
    rng = as_generator(seed)
    return double_filter_detail(points, k, alpha, nu, rng, threshold_const).survivors


def robust_subspace(
    points: np.ndarray,
    k: int,
    alpha: float,
    nu: float,
    delta: float,
    seed,
    threshold_const: float = THRESHOLD_CONST,
    corrupted: Optional[np.ndarray] = None,
) -> SubspaceEstimate:
    """Iterated double filtering with restarts; the pipeline's subspace estimator.

    In the meta-learning pipeline the rows of `points` are the rank-one
    statistics beta_hat_{i,j} = y_{i,j} x_{i,j}.  Runs ceil(log_6(2/delta))
    independent restarts, each iterating the filter from the full set until
    a fixpoint or ceil(9*alpha*n) invocations; the largest final survivor
    set (earliest restart on ties) defines the output eigenbasis.

    alpha above 1/36 is clamped with a warning (recorded in diagnostics);
    alpha = 0 skips filtering entirely.  `corrupted` flags are optional and
    feed evaluation-only removal counts.
    """
    points = np.asarray(points, dtype=float)
    n, d = points.shape
    if k > d:
        raise ValueError("k cannot exceed the ambient dimension")
    if not 0.0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 0.5)")
    clamped = False
    if alpha > ALPHA_MAX:
        warnings.warn(
            f"alpha={alpha:.4g} exceeds 1/36; clamping to 1/36 for the filter",
            RuntimeWarning,
            stacklevel=2,
        )
        alpha = ALPHA_MAX
        clamped = True
    if alpha <= 0.0:
        U = top_k_subspace(points.T @ points, k)
        diag = FilterDiagnostics(
            survivors=np.arange(n),
            restarts_run=0,
            inner_iterations=[],
            alpha_clamped=clamped,
        )
        _count_removals(diag, n, corrupted)
        return SubspaceEstimate(U=U, diagnostics=diag)

    restarts = max(1, math.ceil(math.log(2.0 / delta, 6.0)))
    max_iters = math.ceil(9.0 * alpha * n)
    streams = [stream(_seed_int(seed), "restart", r) for r in range(restarts)]

    best: Optional[np.ndarray] = None
    iters_per_restart: list[int] = []
    history: list[list[int]] = []
    for r in range(restarts):
        rng = streams[r]
        current = np.arange(n)
        sizes = [n]
        iters = 0
        for _ in range(max_iters):
            step = double_filter_detail(
                points[current], k, alpha, nu, rng, threshold_const
            )
            iters += 1
            nxt = current[step.survivors]
            sizes.append(int(nxt.size))
            if nxt.size == current.size:  # unchanged: fixpoint
                current = nxt
                break
            current = nxt
        iters_per_restart.append(iters)
        history.append(sizes)
        if best is None or current.size > best.size:
            best = current
    assert best is not None

    U = top_k_subspace(points[best].T @ points[best], k)
    diag = FilterDiagnostics(
        survivors=best,
        restarts_run=restarts,
        inner_iterations=iters_per_restart,
        alpha_clamped=clamped,
        survivor_history=history,
    )
    _count_removals(diag, n, corrupted)
    return SubspaceEstimate(U=U, diagnostics=diag)


def _seed_int(seed) -> int:
    if isinstance(seed, np.random.Generator):
        # Derive a stable integer from the generator's own stream.
        return int(seed.integers(0, 2**63 - 1))
    return int(seed)


def _count_removals(diag: FilterDiagnostics, n: int, corrupted) -> None:
    if corrupted is None:
        return
    corrupted = np.asarray(corrupted, dtype=bool)
    kept = np.zeros(n, dtype=bool)
    kept[diag.survivors] = True
    diag.removed_good = int(np.sum(~kept & ~corrupted))
    diag.removed_corrupted = int(np.sum(~kept & corrupted))


def hrpca(
    points: np.ndarray,
    k: int,
    alpha: float,
    seed,
    corrupted: Optional[np.ndarray] = None,
) -> SubspaceEstimate:
    """Single-filter baseline: one random removal per round.

    Each of floor(n/2) rounds computes the top-k subspace of the surviving
    set, records it as a candidate, then removes one point sampled with
    probability proportional to its projected energy.  The returned
    candidate maximizes the trimmed captured variance: the mean of the
    surviving scores after dropping the largest ceil(alpha*n) of them.
    """
    points = np.asarray(points, dtype=float)
    n, d = points.shape
    if k > d:
        raise ValueError("k cannot exceed the ambient dimension")
    rng = as_generator(seed)
    rounds = n // 2
    drop = math.ceil(alpha * n)

    alive = np.ones(n, dtype=bool)
    acc = points.T @ points
    best_value = -np.inf
    best_U: Optional[np.ndarray] = None
    best_alive: Optional[np.ndarray] = None
    idx = np.arange(n)
    for _ in range(rounds):
        U = top_k_subspace(acc, k)
        live = idx[alive]
        z = rank_one_scores(points[live], U)
        if drop > 0 and drop < z.size:
            trimmed = np.partition(z, z.size - drop)[: z.size - drop]
        else:
            trimmed = z
        value = float(trimmed.mean()) if trimmed.size else -np.inf
        if value > best_value:
            best_value = value
            best_U = U
            best_alive = alive.copy()
        total = float(z.sum())
        if total > 0.0:
            u = rng.uniform(0.0, total)
            pick = live[min(np.searchsorted(np.cumsum(z), u), z.size - 1)]
        else:
            pick = live[int(rng.integers(z.size))]
        alive[pick] = False
        acc -= np.outer(points[pick], points[pick])
    assert best_U is not None and best_alive is not None

    diag = FilterDiagnostics(
        survivors=idx[best_alive],
        restarts_run=1,
        inner_iterations=[rounds],
    )
    _count_removals(diag, n, corrupted)
    return SubspaceEstimate(U=best_U, diagnostics=diag)


def signal_second_moment(meta: MetaParameter) -> np.ndarray:
    """E[beta_hat beta_hat'] for the t = 1 statistics y*x under the mixture:
    rho_bar^2 I + 2 sum_l p_l w_l w_l', with rho_bar^2 the mean label variance."""
    W, s, p = meta.W, meta.s, meta.p
    rho_bar2 = float(np.sum(p * (np.sum(W * W, axis=0) + s * s)))
    return rho_bar2 * np.eye(meta.d) + 2.0 * (W * p) @ W.T


def _best_rank_k_trace(Sigma: np.ndarray, k: int) -> tuple[float, np.ndarray]:
    eigvals, eigvecs = np.linalg.eigh(Sigma)
    top = eigvals[::-1][:k]
    V = eigvecs[:, ::-1][:, :k]
    return float(top.sum()), V


def subspace_metrics(
    U: np.ndarray, meta: MetaParameter, Sigma: Optional[np.ndarray] = None
) -> dict:
    """Quality of a candidate subspace against the model.

    captured_variance = tr(U' Sigma U); nuclear_error is the excess nuclear
    norm over the best rank-k approximation; residuals are the energies of
    each regression vector outside span(U).  When Sigma is not supplied it
    is computed analytically from the meta-parameter.
    """
    U = np.asarray(U, dtype=float)
    if Sigma is None:
        Sigma = signal_second_moment(meta)
    Sigma = np.asarray(Sigma, dtype=float)
    if U.shape[0] != Sigma.shape[0] or U.shape[0] != meta.d:
        raise ValueError("dimension mismatch between subspace, Sigma, and model")
    k = U.shape[1]
    captured = float(np.trace(U.T @ Sigma @ U))
    proj = U @ (U.T @ Sigma @ U) @ U.T
    _, Vk = _best_rank_k_trace(Sigma, k)
    Pk = Vk @ (Vk.T @ Sigma @ Vk) @ Vk.T
    nuclear_error = float(
        np.linalg.norm(Sigma - proj, ord="nuc") - np.linalg.norm(Sigma - Pk, ord="nuc")
    )
    resid = meta.W - U @ (U.T @ meta.W)
    residuals = np.linalg.norm(resid, axis=0)
    return {
        "captured_variance": captured,
        "nuclear_error": nuclear_error,
        "residuals": residuals,
    }


def principal_angle(U: np.ndarray, V: np.ndarray) -> float:
    """Largest principal angle (radians) between two subspaces."""
    s = np.linalg.svd(np.asarray(U).T @ np.asarray(V), compute_uv=False)
    return float(np.arccos(np.clip(s.min(), -1.0, 1.0)))
