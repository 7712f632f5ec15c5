"""Reproducible randomness keyed by (seed, position).

Row ``i`` of a randomized residual always receives the ``i``-th output of a
Philox stream keyed by the seed, so results do not depend on evaluation
order, chunking or worker count.
"""

from __future__ import annotations

import secrets

import numpy as np

__all__ = ["derive_seed", "entropy_seed", "generator", "row_uniforms"]

_MASK64 = (1 << 64) - 1


def derive_seed(master: int, *keys: int) -> int:
    """Deterministically derive a 64-bit child seed from a master seed and keys."""
    entropy = [int(master) & _MASK64, (int(master) >> 64) & _MASK64]
    state = np.random.SeedSequence(entropy, spawn_key=tuple(int(k) for k in keys))
    return int(state.generate_state(1, np.uint64)[0])


def entropy_seed() -> int:
    return secrets.randbits(63)


def generator(seed: int) -> np.random.Generator:
    """A Philox-backed generator keyed directly by ``seed``."""
    return np.random.Generator(np.random.Philox(key=int(seed) & ((1 << 128) - 1)))


def row_uniforms(seed: int, rows) -> np.ndarray:
    """Uniform deviates on (0, 1] for the given row indices.

    The value for row ``i`` depends only on ``(seed, i)``.  The generator's
    [0, 1) output ``u`` is mapped to ``1 - u`` so zero is excluded.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        return np.empty(0)
    if rows.min() < 0:
        raise ValueError("row indices must be non-negative")
    stream = generator(seed).random(int(rows.max()) + 1)
    return 1.0 - stream[rows]
