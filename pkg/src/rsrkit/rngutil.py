"""Deterministic seed derivation for parallel streams.

Every randomized component derives its own stream as
``PCG64(mix64(master_seed, tag, index, ...))``.  The mixer is the
SplitMix64 finalizer (Steele, Lea & Flood 2014), a published 64-bit
finalizer with full avalanche, folded left-to-right over the inputs.
The recipe is part of the reproducibility contract: identical seeds and
indices give identical streams on every platform.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One SplitMix64 finalizer step on a 64-bit value."""
    z = (x + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def mix64(*values: int) -> int:
    """Fold integers into one 64-bit seed, order-sensitive."""
    h = 0
    for v in values:
        h = splitmix64((h ^ (int(v) & _MASK)) & _MASK)
    return h


def stream(*values: int) -> np.random.Generator:
    """A PCG64 generator keyed by ``mix64(*values)``."""
    return np.random.Generator(np.random.PCG64(mix64(*values)))


def sample_without_replacement(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """Draw ``k`` distinct indices from ``range(n)``, uniformly.

    Partial Fisher-Yates driven by raw 64-bit draws so the exact index
    sequence is reproducible from the generator state alone (the same
    scheme the batched stage-2 kernel uses).
    """
    if not 0 <= k <= n:
        raise ValueError(f"cannot draw {k} from {n}")
    pool = np.arange(n, dtype=np.int64)
    u = rng.integers(0, 1 << 63, size=k, dtype=np.uint64)
    for t in range(k):
        j = t + int(u[t] % np.uint64(n - t))
        pool[t], pool[j] = pool[j], pool[t]
    return pool[:k].copy()
