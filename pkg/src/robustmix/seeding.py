"""Deterministic RNG streams.

Every operation in this package is a pure function of (inputs, seed).
Streams for sub-tasks are derived from one master seed via SeedSequence
spawn keys computed from string labels, so e.g. enlarging one dataset
split never perturbs the draws of another, and benchmark cells keyed by
(method, alpha, seed) are reproducible regardless of execution order.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream", "as_generator"]


def _key_words(parts: tuple) -> tuple[int, ...]:
    label = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    # Four 32-bit words are plenty to separate streams.
    return tuple(int.from_bytes(digest[4 * i : 4 * i + 4], "little") for i in range(4))


def stream(master_seed: int, *parts) -> np.random.Generator:
    """Generator for the stream identified by `parts` under `master_seed`."""
    ss = np.random.SeedSequence(master_seed, spawn_key=_key_words(parts))
    return np.random.default_rng(ss)


def as_generator(seed) -> np.random.Generator:
    """Accept an int seed, a SeedSequence, or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
