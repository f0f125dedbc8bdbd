"""Seeded random-stream derivation.

Every random draw in the package comes from a Generator derived from a
small tuple of integers, so results never depend on draw order across
examples, on batch chunking, or on global RNG state. Attack randomness
is keyed by (seed, example id, purpose); model noise is keyed by
(model seed, call counter, row).
"""

import numpy as np

# Purpose tags keep independent uses of the same (seed, example) pair
# from sharing a stream.
UNIFORM_INIT = 1
NORMAL_INIT = 2
L2_INIT = 3
MODEL_NOISE = 4
DATA = 5


def stream(*key: int) -> np.random.Generator:
    """Return a Generator for an integer key tuple.

    The same key always yields the same stream (PCG64 seeded through
    SeedSequence, which is stable across platforms and numpy versions).
    """
    if not key:
        raise ValueError("stream key must be non-empty")
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in key]))


def per_example_normal(seed: int, purpose: int, example_ids: np.ndarray, d: int) -> np.ndarray:
    """Draw one standard-normal row of width d per example id, float32."""
    out = np.empty((len(example_ids), d), dtype=np.float32)
    for row, ex in enumerate(example_ids):
        out[row] = stream(seed, int(ex), purpose).standard_normal(d, dtype=np.float32)
    return out


def per_example_uniform(seed: int, purpose: int, example_ids: np.ndarray, d: int,
                        low: float, high: float) -> np.ndarray:
    """Draw one uniform row of width d per example id, float32."""
    out = np.empty((len(example_ids), d), dtype=np.float32)
    for row, ex in enumerate(example_ids):
        g = stream(seed, int(ex), purpose)
        out[row] = g.uniform(low, high, size=d).astype(np.float32)
    return out
