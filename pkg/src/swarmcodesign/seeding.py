"""Deterministic random-stream derivation.

Every stochastic component of a run draws from a stream derived from the
master seed plus a structured key (generation, genome id, trial index, ...).
Streams are independent of each other and of evaluation order, which is what
makes results bit-identical for any worker-thread count.
"""

from __future__ import annotations

import numpy as np

# Salts keep streams with overlapping numeric keys disjoint.
SALT_INIT = 0x1A
SALT_EVAL = 0x2B
SALT_ENV = 0x3C
SALT_ROBOT = 0x4D
SALT_MATING = 0x5E


def derive_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Return a Generator seeded from (master_seed, *key)."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *[int(k) for k in key]]))


def derive_seed(master_seed: int, *key: int) -> int:
    """Collapse (master_seed, *key) into a single integer seed."""
    seq = np.random.SeedSequence([int(master_seed), *[int(k) for k in key]])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def derive_uint64(master_seed: int, *key: int, n: int = 1) -> np.ndarray:
    """Return ``n`` raw uint64 words derived from (master_seed, *key).

    Used to seed the counter-based generators inside simulation kernels.
    Zero words are remapped so xorshift state is never all-zero.
    """
    seq = np.random.SeedSequence([int(master_seed), *[int(k) for k in key]])
    words = seq.generate_state(2 * n, dtype=np.uint64)[::2].copy()
    words[words == 0] = np.uint64(0x9E3779B97F4A7C15)
    return words
