"""MAP and Bayes-optimal prediction for a new task under a fitted mixture."""

from __future__ import annotations

import math
import numpy as np

from .classification import FittedMeta
from .model import MetaParameter, TaskData
from .seeding import as_generator

__all__ = ["posterior", "map_predict", "bayes_predict", "eval_prediction"]

_VAR_FLOOR = 1e-12  # guards log(0) for degenerate fitted variances


def _log_posterior(batch: TaskData, theta: FittedMeta) -> np.ndarray:
    p = np.asarray(theta.p_hat, dtype=float)
    if p.sum() <= 0:
        raise ValueError("posterior undefined: all component weights are zero")
    var = np.maximum(np.asarray(theta.s2_hat, dtype=float), _VAR_FLOOR)
    resid = batch.y[:, None] - batch.x @ theta.w_hat.T  # (t, k)
    t = batch.x.shape[0]
    loglik = -0.5 * np.sum(resid * resid, axis=0) / var - 0.5 * t * np.log(
        2.0 * math.pi * var
    )
    with np.errstate(divide="ignore"):
        return np.where(p > 0, np.log(p, where=p > 0), -np.inf) + loglik


def posterior(batch: TaskData, theta: FittedMeta) -> np.ndarray:
    """P(component | batch), proportional to p_hat_l times the Gaussian
    likelihood of the labels; computed in log space with max subtraction."""
    logp = _log_posterior(batch, theta)
    logp = logp - logp.max()
    w = np.exp(logp)
    return w / w.sum()


def map_predict(batch: TaskData, theta: FittedMeta, x_query: np.ndarray) -> float:
    """Plug-in prediction from the posterior mode (ties to the lowest index)."""
    post = posterior(batch, theta)
    return float(np.asarray(x_query, dtype=float) @ theta.w_hat[int(np.argmax(post))])


def bayes_predict(batch: TaskData, theta: FittedMeta, x_query: np.ndarray) -> float:
    """Posterior-mean prediction under squared loss."""
    post = posterior(batch, theta)
    return float(post @ (theta.w_hat @ np.asarray(x_query, dtype=float)))


def eval_prediction(
    meta_true: MetaParameter,
    theta: FittedMeta,
    tau: int,
    trials: int,
    seed,
    chunk: int = 10_000,
) -> dict:
    """Mean squared prediction error of the MAP and Bayes rules.

    Each trial draws a fresh task from the true mixture, tau training
    examples plus one held-out example, and scores both predictors on the
    held-out label.  Vectorized over trials in chunks.
    """
    if tau < 1 or trials < 1:
        raise ValueError("need tau >= 1 and trials >= 1")
    rng = as_generator(seed)
    d, k = meta_true.d, theta.k
    var = np.maximum(np.asarray(theta.s2_hat, dtype=float), _VAR_FLOOR)
    logp = np.where(
        theta.p_hat > 0,
        np.log(theta.p_hat, where=theta.p_hat > 0),
        -np.inf,
    )
    se_map = 0.0
    se_bayes = 0.0
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        z = rng.choice(meta_true.k, size=m, p=meta_true.p)
        Wz = meta_true.W[:, z].T  # (m, d)
        sz = meta_true.s[z]
        X = rng.standard_normal((m, tau, d))
        y = np.einsum("mtd,md->mt", X, Wz) + sz[:, None] * rng.standard_normal((m, tau))
        xq = rng.standard_normal((m, d))
        yq = np.einsum("md,md->m", xq, Wz) + sz * rng.standard_normal(m)

        resid = y[:, :, None] - np.einsum("mtd,kd->mtk", X, theta.w_hat)
        loglik = -0.5 * np.sum(resid * resid, axis=1) / var - 0.5 * tau * np.log(
            2.0 * math.pi * var
        )
        logpost = logp[None, :] + loglik
        logpost -= logpost.max(axis=1, keepdims=True)
        post = np.exp(logpost)
        post /= post.sum(axis=1, keepdims=True)

        preds = xq @ theta.w_hat.T  # (m, k)
        yhat_map = preds[np.arange(m), np.argmax(post, axis=1)]
        yhat_bayes = np.einsum("mk,mk->m", post, preds)
        se_map += float(np.sum((yhat_map - yq) ** 2))
        se_bayes += float(np.sum((yhat_bayes - yq) ** 2))
        done += m
    return {"mse_map": se_map / trials, "mse_bayes": se_bayes / trials}
