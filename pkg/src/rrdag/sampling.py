"""
Seeded random streams and uniform distinct-subset sampling.

Every trial owns one numpy Generator driven by the counter-based Philox bit
generator, keyed by (master_seed, stream_index) through a SeedSequence spawn
key. Two trials never share state, so a trial's draws do not depend on which
worker runs it or in what order.
"""

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger("rrdag")

# Below this population/sample ratio, partial Fisher-Yates beats rejection.
_REJECTION_RATIO = 8


@dataclass(frozen=True)
class Seed:
    """Identifies one reproducible random stream."""

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError(f"master_seed must fit in 64 unsigned bits, got {self.master_seed}")
        if self.stream_index < 0:
            raise ValueError(f"stream_index must be >= 0, got {self.stream_index}")

    def generator(self) -> np.random.Generator:
        return make_rng(self.master_seed, self.stream_index)


def make_rng(master_seed: int, stream_index: int = 0) -> np.random.Generator:
    """Philox-backed Generator for one (master_seed, stream_index) pair."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(stream_index,))
    return np.random.Generator(np.random.Philox(seq))


def as_generator(seed: "Seed | int | np.random.Generator | None") -> np.random.Generator:
    """Accept a Seed, a bare master seed, an existing Generator, or None (seed 0)."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, Seed):
        return seed.generator()
    if seed is None:
        return make_rng(0)
    if isinstance(seed, (int, np.integer)) and not isinstance(seed, bool):
        return make_rng(int(seed))
    raise TypeError(f"cannot build a random stream from {type(seed).__name__}")


# ---------------------------------------------------------------------------
# Distinct subsets
# ---------------------------------------------------------------------------

def sample_distinct(k: int, i: int, rng: np.random.Generator) -> tuple[int, ...]:
    """Uniform ascending k-subset of {1, ..., i}.

    Args:
        k: Subset size, 0 <= k <= i.
        i: Population size.
        rng: Random stream.

    Raises:
        ValueError: If k > i or k < 0.
    """
    if k < 0 or i < 0:
        raise ValueError(f"k and i must be non-negative, got k={k}, i={i}")
    if k > i:
        raise ValueError(f"cannot draw {k} distinct values from a population of {i}")
    if k == i:
        return tuple(range(1, i + 1))

    if k * _REJECTION_RATIO <= i:
        chosen: set[int] = set()
        while len(chosen) < k:
            for x in rng.integers(1, i + 1, size=k - len(chosen)).tolist():
                chosen.add(x)
        return tuple(sorted(chosen))

    # Sparse partial Fisher-Yates over positions 0..i-1.
    swaps: dict[int, int] = {}
    picked = []
    for j in range(k):
        r = int(rng.integers(j, i))
        picked.append(swaps.get(r, r) + 1)
        swaps[r] = swaps.get(j, j)
    return tuple(sorted(picked))


def batch_distinct(rng: np.random.Generator, highs: np.ndarray, k: int) -> np.ndarray:
    """Draw one uniform ascending k-subset of {1, ..., highs[r]} per row r.

    Rows whose population is large relative to k are drawn together by
    rejection (i.i.d. draws, redrawn while a row repeats a value); the rest go
    through sample_distinct one at a time.

    Returns:
        int64 array of shape (len(highs), k), rows ascending.
    """
    highs = np.asarray(highs, dtype=np.int64)
    out = np.empty((highs.size, k), dtype=np.int64)
    if highs.size == 0 or k == 0:
        return out
    if highs.min() < k:
        raise ValueError(f"population {int(highs.min())} is smaller than k={k}")

    small = highs < k * _REJECTION_RATIO
    for r in np.flatnonzero(small):
        out[r] = sample_distinct(k, int(highs[r]), rng)

    rows = np.flatnonzero(~small)
    while rows.size:
        draws = np.sort(rng.integers(1, highs[rows, None] + 1, size=(rows.size, k)), axis=1)
        out[rows] = draws
        if k == 1:
            break
        repeated = (draws[:, 1:] == draws[:, :-1]).any(axis=1)
        rows = rows[repeated]
    return out
