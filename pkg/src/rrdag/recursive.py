"""
Bottom-up random recursive DAG construction.

Vertex i+1 joins the graph with directed edges to m∧i distinct vertices of
[i], chosen uniformly. The first m+1 vertices form the complete increasing
graph; every later vertex draws an m-subset.
"""

import logging

import numpy as np

from .graph import LabeledDag
from .sampling import Seed, as_generator, batch_distinct

logger = logging.getLogger("rrdag")


def _check_params(n: int, m: int) -> None:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")


def complete_prefix(n: int, m: int) -> np.ndarray:
    """Target rows of vertices 1..min(n, m+1), which attach to every earlier vertex."""
    rows = min(n, m + 1)
    targets = np.zeros((rows, m), dtype=np.int64)
    for v in range(2, rows + 1):
        targets[v - 1, : v - 1] = np.arange(v - 1, 0, -1)
    return targets


def generate_recursive(n: int, m: int, seed: "Seed | int | np.random.Generator | None" = None) -> LabeledDag:
    """Sample one RRDAG on [n] with out-degree parameter m.

    Args:
        n: Number of vertices (>= 1).
        m: Out-degree parameter (>= 1).
        seed: A Seed, master seed, or Generator. Identical seeds give identical graphs.

    Returns:
        A LabeledDag that passes validate().

    Raises:
        ValueError: If n or m is below 1.
    """
    _check_params(n, m)
    rng = as_generator(seed)

    targets = np.zeros((n, m), dtype=np.int64)
    prefix = complete_prefix(n, m)
    targets[: prefix.shape[0]] = prefix
    if n > m + 1:
        # Vertex v = i + 1 draws from [i] for i = m+1 .. n-1.
        highs = np.arange(m + 1, n, dtype=np.int64)
        targets[m + 1 :] = batch_distinct(rng, highs, m)[:, ::-1]
    return LabeledDag(n=n, m=m, targets=targets)
