"""Monte-Carlo checks of the two moment identities behind the pipeline.

Both identities are exact statements about the t-sample statistic
beta_hat = (1/t) X'y under the Gaussian design:

  * second-moment identity: E[beta_hat beta_hat'] =
    (1 + 1/t) beta beta' + ((||beta||^2 + sigma^2)/t) I;
  * chi-square decomposition: for t = 1, (v'x) y is distributed as
    a Z1^2 + b Z2^2 with a, b = (v'beta +- ||v|| sigma_y)/2 and
    sigma_y^2 = ||beta||^2 + sigma^2.

The checks report deviations in units of empirical standard errors so a
pass/fail threshold of a few SE is scale-free.
"""

from __future__ import annotations

import math

import numpy as np

from .seeding import as_generator

__all__ = ["second_moment_check", "chi_square_moment_check"]


def second_moment_check(
    beta: np.ndarray, sigma: float, t: int, replicates: int, seed, chunk: int = 20_000
) -> dict:
    """Empirical mean of beta_hat beta_hat' versus the exact second moment.

    Returns the diagonal comparison and the worst deviation over all matrix
    entries in SE units.
    """
    beta = np.asarray(beta, dtype=float)
    d = beta.shape[0]
    rng = as_generator(seed)
    expected = (1.0 + 1.0 / t) * np.outer(beta, beta) + (
        (beta @ beta + sigma ** 2) / t
    ) * np.eye(d)

    sum_ = np.zeros((d, d))
    sumsq = np.zeros((d, d))
    done = 0
    while done < replicates:
        m = min(chunk, replicates - done)
        X = rng.standard_normal((m, t, d))
        y = np.einsum("mtd,d->mt", X, beta) + sigma * rng.standard_normal((m, t))
        bh = np.einsum("mtd,mt->md", X, y) / t
        outer = np.einsum("mi,mj->mij", bh, bh)
        sum_ += outer.sum(axis=0)
        sumsq += (outer ** 2).sum(axis=0)
        done += m
    mean = sum_ / replicates
    var = np.maximum(sumsq / replicates - mean ** 2, 0.0)
    se = np.sqrt(var / replicates)
    z = np.abs(mean - expected) / np.maximum(se, 1e-300)
    return {
        "empirical": mean,
        "expected": expected,
        "se": se,
        "max_z": float(z.max()),
        "diag_empirical": np.diag(mean),
        "diag_expected": np.diag(expected),
    }


def _chi_square_pair_moments(a: float, b: float) -> np.ndarray:
    """First four moments of a Z1^2 + b Z2^2 with independent standard
    normals, in closed form (even Gaussian moments 1, 3, 15, 105)."""
    m1 = a + b
    m2 = 3 * a ** 2 + 2 * a * b + 3 * b ** 2
    m3 = 15 * a ** 3 + 9 * a ** 2 * b + 9 * a * b ** 2 + 15 * b ** 3
    m4 = (
        105 * a ** 4
        + 60 * a ** 3 * b
        + 54 * a ** 2 * b ** 2
        + 60 * a * b ** 3
        + 105 * b ** 4
    )
    return np.array([m1, m2, m3, m4])


def chi_square_moment_check(
    beta: np.ndarray, sigma: float, v: np.ndarray, replicates: int, seed
) -> dict:
    """First four moments of (v'x) y against the two-chi-square form."""
    beta = np.asarray(beta, dtype=float)
    v = np.asarray(v, dtype=float)
    rng = as_generator(seed)
    d = beta.shape[0]
    X = rng.standard_normal((replicates, d))
    y = X @ beta + sigma * rng.standard_normal(replicates)
    lhs = (X @ v) * y

    sigma_y = math.sqrt(beta @ beta + sigma ** 2)
    a = (v @ beta + np.linalg.norm(v) * sigma_y) / 2.0
    b = (v @ beta - np.linalg.norm(v) * sigma_y) / 2.0
    expected = _chi_square_pair_moments(a, b)

    emp = np.array([np.mean(lhs ** j) for j in range(1, 5)])
    se = np.array(
        [np.std(lhs ** j, ddof=1) / math.sqrt(replicates) for j in range(1, 5)]
    )
    z = np.abs(emp - expected) / np.maximum(se, 1e-300)
    return {"empirical": emp, "expected": expected, "se": se, "max_z": float(z.max())}
