"""Generative model, dataset splits, and adversarial corruption.

A meta-parameter theta = (W, s, p) describes a mixture of k linear
regressions in d dimensions.  A task draws its component z ~ multinomial(p)
and then t examples with x ~ N(0, I_d) and y = w_z' x + s_z * N(0, 1).

Estimators must never see which component generated a task or whether an
adversary replaced it; they receive `TaskData` views carrying only (x, y).
The `truth` field on `Task` exists for evaluation code alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .seeding import as_generator, stream

__all__ = [
    "AdversaryConfig",
    "DatasetSplits",
    "DerivedStats",
    "MetaParameter",
    "Task",
    "TaskData",
    "TaskTruth",
    "corrupt",
    "derived_stats",
    "figure2_points",
    "lower_bound_points",
    "make_splits",
    "sample_tasks",
    "simplex_meta",
    "views",
]

ADVERSARY_STRATEGIES = ("none", "figure2", "cluster_kill", "large_leverage", "boundary")


class TaskData(NamedTuple):
    """Truth-free view of one task: covariate matrix (t, d) and labels (t,)."""

    x: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class TaskTruth:
    component: int
    corrupted: bool = False


@dataclass(frozen=True)
class Task:
    """One regression task; `truth` is evaluation-only metadata."""

    x: np.ndarray  # (t, d)
    y: np.ndarray  # (t,)
    truth: Optional[TaskTruth] = None

    def __post_init__(self):
        if self.x.ndim != 2 or self.y.ndim != 1 or self.x.shape[0] != self.y.shape[0]:
            raise ValueError("task covariates must be (t, d) with labels of length t")
        if self.x.shape[0] < 1:
            raise ValueError("task needs at least one example")

    @property
    def t(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def data(self) -> TaskData:
        return TaskData(self.x, self.y)


def views(tasks: Sequence[Task]) -> list[TaskData]:
    """Strip truth metadata; this is what estimation code receives."""
    return [t.data for t in tasks]


@dataclass(frozen=True)
class MetaParameter:
    """theta = (W, s, p): W is d x k with columns w_l, s the per-component
    noise standard deviations, p the mixture weights."""

    W: np.ndarray  # (d, k), columns are regression vectors
    s: np.ndarray  # (k,), noise standard deviations, > 0
    p: np.ndarray  # (k,), mixture weights, sum to 1

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        s = np.asarray(self.s, dtype=float)
        p = np.asarray(self.p, dtype=float)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "p", p)
        if W.ndim != 2 or W.shape[1] == 0:
            raise ValueError("W must be d x k with k >= 1")
        k = W.shape[1]
        if s.shape != (k,) or p.shape != (k,):
            raise ValueError("s and p must have length k")
        if np.any(s <= 0):
            raise ValueError("noise standard deviations must be positive")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        for i in range(k):
            for j in range(i + 1, k):
                if np.linalg.norm(W[:, i] - W[:, j]) == 0.0:
                    raise ValueError(f"regression vectors {i} and {j} coincide")

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def k(self) -> int:
        return self.W.shape[1]

    @property
    def components(self) -> np.ndarray:
        """Regression vectors as rows, shape (k, d)."""
        return self.W.T


@dataclass(frozen=True)
class DerivedStats:
    rho: float  # max_l sqrt(s_l^2 + ||w_l||^2)
    delta: float  # min pairwise ||w_i - w_j||; +inf for k = 1
    p_min: float
    sigma_min: float  # smallest nonzero singular value of sum_l p_l w_l w_l'


def derived_stats(meta: MetaParameter) -> DerivedStats:
    """Scale statistics of the mixture; see `DerivedStats` for definitions.

    sigma_min comes from a dense eigendecomposition of sum_l p_l w_l w_l';
    eigenvalues below 1e-10 times the largest count as zero, and a rank-0
    moment matrix yields sigma_min = 0.
    """
    W, s, p = meta.W, meta.s, meta.p
    norms2 = np.sum(W * W, axis=0)
    rho = float(np.sqrt(np.max(s * s + norms2)))
    if meta.k == 1:
        delta = math.inf
    else:
        diffs = [
            np.linalg.norm(W[:, i] - W[:, j])
            for i in range(meta.k)
            for j in range(i + 1, meta.k)
        ]
        delta = float(min(diffs))
    moment = (W * p) @ W.T
    eigvals = np.linalg.eigvalsh(moment)
    top = float(eigvals[-1])
    if top <= 0.0:
        sigma_min = 0.0
    else:
        nonzero = eigvals[eigvals > 1e-10 * top]
        sigma_min = float(nonzero[0]) if nonzero.size else 0.0
    return DerivedStats(rho=rho, delta=delta, p_min=float(p.min()), sigma_min=sigma_min)


def simplex_meta(
    d: int, k: int, separation: float, noise, weights=None
) -> MetaParameter:
    """Mixture whose centers are the vertices of a centered regular simplex
    scaled to pairwise distance `separation` (the geometry maximizing the
    separation-to-norm ratio for a given k)."""
    if k > d:
        raise ValueError("need k <= d to embed the simplex")
    if k == 1:
        W = np.zeros((d, 1))
        W[0, 0] = separation  # lone center; `separation` doubles as its norm
    else:
        V = np.eye(k) - np.full((k, k), 1.0 / k)  # centered standard simplex
        V *= separation / math.sqrt(2.0)  # pairwise distance of e_i - e_j is sqrt(2)
        W = np.zeros((d, k))
        W[:k, :] = V  # columns are the centered vertices, embedded in R^d
    s = np.full(k, float(noise)) if np.isscalar(noise) else np.asarray(noise, float)
    p = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, float)
    return MetaParameter(W=W, s=s, p=p)


def sample_tasks(meta: MetaParameter, n: int, t: int, seed) -> list[Task]:
    """Draw n tasks of batch size t from the mixture.  Deterministic given seed."""
    if n < 1 or t < 1:
        raise ValueError("need n >= 1 and t >= 1")
    rng = as_generator(seed)
    z = rng.choice(meta.k, size=n, p=meta.p)
    tasks = []
    for i in range(n):
        x = rng.standard_normal((t, meta.d))
        eps = rng.standard_normal(t)
        w = meta.W[:, z[i]]
        y = x @ w + meta.s[z[i]] * eps
        tasks.append(Task(x=x, y=y, truth=TaskTruth(component=int(z[i]))))
    return tasks


@dataclass(frozen=True)
class AdversaryConfig:
    """One of five concrete attacks; `alpha` is the fraction of tasks replaced.

    params (all optional scalars):
      figure2:        no params; covariate rows become [0, z'*2*alpha^(1/4), x_3:d]
      cluster_kill:   no params; smallest-truth-component tasks are overwritten
                      with clones of tasks from the largest component
      large_leverage: rho (scale; estimated from data when absent) -- every
                      corrupted example has ||y*x|| = 10 * rho^2 * sqrt(d)
      boundary:       k (default 1), margin (default 0.05) -- rank-one scores
                      planted just below the first-filter quantile threshold
    """

    strategy: str = "none"
    alpha: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.strategy not in ADVERSARY_STRATEGIES:
            raise ValueError(f"unknown adversary strategy {self.strategy!r}")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")


def _mark(task: Task) -> TaskTruth:
    comp = task.truth.component if task.truth is not None else -1
    return TaskTruth(component=comp, corrupted=True)


def _corrupt_figure2(tasks, picks, alpha, rng):
    out = list(tasks)
    mag = 2.0 * alpha ** 0.25
    for i in picks:
        x = tasks[i].x.copy()
        signs = rng.choice((-1.0, 1.0), size=x.shape[0])
        x[:, 0] = 0.0
        if x.shape[1] > 1:
            x[:, 1] = signs * mag
        y = np.ones_like(tasks[i].y)
        out[i] = Task(x=x, y=y, truth=_mark(tasks[i]))
    return out


def _corrupt_cluster_kill(tasks, picks_budget, rng):
    comps = np.array(
        [t.truth.component if t.truth is not None else 0 for t in tasks]
    )
    labels, counts = np.unique(comps, return_counts=True)
    order = np.argsort(counts, kind="stable")  # victims from the rarest component up
    donor_label = labels[order[-1]]
    donors = np.flatnonzero(comps == donor_label)
    victims: list[int] = []
    for lbl in labels[order]:
        if lbl == donor_label:
            continue
        members = np.flatnonzero(comps == lbl)
        members = members[rng.permutation(members.size)]
        victims.extend(int(m) for m in members)
        if len(victims) >= picks_budget:
            break
    if len(victims) < picks_budget:  # degenerate: fill from the donor itself
        extra = [int(i) for i in donors if i not in set(victims)]
        victims.extend(extra)
    victims = victims[:picks_budget]
    out = list(tasks)
    for i in victims:
        src = tasks[int(donors[rng.integers(donors.size)])]
        out[i] = Task(x=src.x.copy(), y=src.y.copy(), truth=_mark(tasks[i]))
    return out


def _corrupt_large_leverage(tasks, picks, params, rng):
    d = tasks[0].d
    rho = params.get("rho")
    if rho is None:
        ms = max(float(np.mean(t.y ** 2)) for t in tasks)
        rho = math.sqrt(ms)
    target = 10.0 * rho ** 2 * math.sqrt(d)
    out = list(tasks)
    for i in picks:
        t = tasks[i].t
        u = rng.standard_normal((t, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        out[i] = Task(x=u * target, y=np.ones(t), truth=_mark(tasks[i]))
    return out


def _corrupt_boundary(tasks, picks, alpha, params, rng):
    from .subspace import rank_one_scores, top_k_subspace

    k = int(params.get("k", 1))
    margin = float(params.get("margin", 0.05))
    stats = np.vstack([t.y[:, None] * t.x for t in tasks])  # example-level y*x
    U = top_k_subspace(stats.T @ stats, k)
    z = rank_one_scores(stats, U)
    n = z.shape[0]
    r = math.ceil(2.0 * max(alpha, 1e-12) * n)
    cut_rank = max(n - r - 1, 0)
    threshold = np.sort(z)[cut_rank]  # largest score the first filter keeps
    target = threshold * (1.0 - margin)
    u = U[:, 0]
    out = list(tasks)
    for i in picks:
        t = tasks[i].t
        signs = rng.choice((-1.0, 1.0), size=t)
        x = np.outer(signs * math.sqrt(max(target, 0.0)), u)
        out[i] = Task(x=x, y=signs, truth=_mark(tasks[i]))
    return out


def corrupt(tasks: Sequence[Task], cfg: AdversaryConfig, seed) -> list[Task]:
    """Replace exactly floor(alpha * n) tasks per the configured strategy.

    Clean tasks pass through untouched (same objects); replaced tasks are
    flagged corrupted.  The adversary may inspect everything, truth included.
    """
    if len(tasks) == 0:
        raise ValueError("cannot corrupt an empty task list")
    n = len(tasks)
    budget = int(cfg.alpha * n)
    if budget >= n:
        raise ValueError("corruption budget must leave at least one task")
    if cfg.strategy == "none" or budget == 0:
        return list(tasks)
    rng = as_generator(seed)
    if cfg.strategy == "cluster_kill":
        return _corrupt_cluster_kill(tasks, budget, rng)
    picks = rng.choice(n, size=budget, replace=False)
    if cfg.strategy == "figure2":
        return _corrupt_figure2(tasks, picks, cfg.alpha, rng)
    if cfg.strategy == "large_leverage":
        return _corrupt_large_leverage(tasks, picks, cfg.params, rng)
    if cfg.strategy == "boundary":
        return _corrupt_boundary(tasks, picks, cfg.alpha, cfg.params, rng)
    raise AssertionError(cfg.strategy)


@dataclass(frozen=True)
class DatasetSplits:
    """The three meta-training batches: light (subspace), heavy (clustering),
    light (classification), with the corruption fractions actually applied."""

    light1: list[Task]
    heavy: list[Task]
    light2: list[Task]
    alphas: tuple[float, float, float]


def make_splits(
    meta: MetaParameter,
    sizes: dict,
    adv: dict[str, AdversaryConfig] | None,
    seed: int,
) -> DatasetSplits:
    """Sample and corrupt the three splits with independent RNG streams, so
    resizing one split never perturbs the others."""
    adv = adv or {}
    out = {}
    alphas = []
    for name, n_key, t_key in (
        ("light1", "n_L1", "t_L1"),
        ("heavy", "n_H", "t_H"),
        ("light2", "n_L2", "t_L2"),
    ):
        n, t = int(sizes.get(n_key, 0)), int(sizes.get(t_key, 1))
        if n < 0 or t < 0:
            raise ValueError(f"split sizes must be nonnegative ({name})")
        cfg = adv.get(name, AdversaryConfig())
        if n == 0:
            out[name] = []
            alphas.append(cfg.alpha if cfg.strategy != "none" else 0.0)
            continue
        tasks = sample_tasks(meta, n, t, stream(seed, "sample", name))
        tasks = corrupt(tasks, cfg, stream(seed, "corrupt", name))
        out[name] = tasks
        alphas.append(cfg.alpha if cfg.strategy != "none" else 0.0)
    return DatasetSplits(
        light1=out["light1"],
        heavy=out["heavy"],
        light2=out["light2"],
        alphas=tuple(alphas),
    )


def figure2_points(d: int, alpha: float, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic point cloud for the subspace benchmark.

    Clean law: x_1 ~ N(0, 1.1); x_2 = z * x_1 / sqrt(1.1) with z an
    independent Rademacher sign; remaining coordinates standard normal.
    Its second moment is I_d + 0.1 e_1 e_1'.  Each point is independently
    replaced with probability alpha by [0, z' * 2 * alpha^(-1/4), x_3:d],
    which plants excess variance on coordinate 2.

    Returns (points, corrupted_flags), shapes (n, d) and (n,).
    """
    if d < 2 or n < 1:
        raise ValueError("need d >= 2 and n >= 1")
    rng = as_generator(seed)
    x = rng.standard_normal((n, d))
    x[:, 0] *= math.sqrt(1.1)
    z = rng.choice((-1.0, 1.0), size=n)
    x[:, 1] = z * x[:, 0] / math.sqrt(1.1)
    flags = np.zeros(n, dtype=bool)
    if alpha > 0.0:
        flags = rng.random(n) < alpha
        zp = rng.choice((-1.0, 1.0), size=n)
        mag = 2.0 * alpha ** -0.25
        x[flags, 0] = 0.0
        x[flags, 1] = zp[flags] * mag
    return x, flags


def lower_bound_points(
    d: int, k: int, alpha: float, nu: float, index_set, n: int, seed
) -> np.ndarray:
    """Sampler for the minimax lower-bound family of distributions.

    Coordinates in the index set take +-sqrt(nu) with probability
    (1 - alpha/k)/2 each and +-(nu^2 k / alpha)^(1/4) with probability
    alpha/(2k) each; coordinates outside take +-sqrt(nu) equiprobably.
    An empty index set gives the base distribution.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    index_set = sorted(int(i) for i in index_set)
    if index_set:
        if len(index_set) != k:
            raise ValueError("index set must have exactly k coordinates")
        if index_set[0] < 0 or index_set[-1] >= d:
            raise ValueError("index set out of range")
        if alpha == 0.0:
            raise ValueError("alpha = 0 with a nonempty index set degenerates")
    rng = as_generator(seed)
    x = rng.choice((-1.0, 1.0), size=(n, d)) * math.sqrt(nu)
    if index_set:
        heavy_mag = (nu ** 2 * k / alpha) ** 0.25
        for i in index_set:
            hot = rng.random(n) < alpha / k
            signs = rng.choice((-1.0, 1.0), size=n)
            x[hot, i] = signs[hot] * heavy_mag
    return x
