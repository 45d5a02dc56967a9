"""
Exact enumeration oracle for small increasing DAGs.

Counts and lists every increasing DAG in the class I_n^{(m)}, pushes every
coalescent trace through the relabeling map, and derives exact degree laws.
Each trace is equally likely, so uniformity reduces to equal integer counts
and no floating point enters the oracle.

Caps (overridable per call or via environment):
    RRDAG_ENUMERATION_CAP   graphs listed by enumerate_increasing_dags (default 10^6)
    RRDAG_EXHAUSTION_CAP    traces replayed by exhaust_coalescent (default 10^8)
"""

import json
import logging
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, permutations, product
from pathlib import Path
from typing import Iterator

import numpy as np

from .coalescent import count_traces, iter_traces, step_choices, to_labeled_dag
from .graph import LabeledDag
from .recursive import complete_prefix

logger = logging.getLogger("rrdag")

DEFAULT_ENUMERATION_CAP = 10**6
DEFAULT_EXHAUSTION_CAP = 10**8


class CapExceededError(RuntimeError):
    """An exact computation would exceed its configured size cap."""


def _cap_from_env(var: str, default: int) -> int:
    raw = os.environ.get(var)
    if not raw:
        return default
    try:
        cap = int(float(raw))
    except ValueError as e:
        raise ValueError(f"{var} must be an integer, got '{raw}'") from e
    if cap < 1:
        raise ValueError(f"{var} must be >= 1, got {cap}")
    return cap


def enumeration_cap(cap: int | None = None) -> int:
    return cap if cap is not None else _cap_from_env("RRDAG_ENUMERATION_CAP", DEFAULT_ENUMERATION_CAP)


def exhaustion_cap(cap: int | None = None) -> int:
    return cap if cap is not None else _cap_from_env("RRDAG_EXHAUSTION_CAP", DEFAULT_EXHAUSTION_CAP)


# ---------------------------------------------------------------------------
# Counting and enumeration
# ---------------------------------------------------------------------------

def count_increasing_dags(n: int, m: int) -> int:
    """|I_n^{(m)}| = prod_{i=m+1}^{n-1} C(i, m); the empty product is 1."""
    if n < 1 or m < 1:
        raise ValueError(f"n and m must be >= 1, got n={n}, m={m}")
    return math.prod(math.comb(i, m) for i in range(m + 1, n))


def enumerate_increasing_dags(n: int, m: int, cap: int | None = None) -> Iterator[LabeledDag]:
    """Yield every increasing DAG on [n] with out-degree m∧(v-1), once each.

    Raises:
        CapExceededError: If the class is larger than the cap.
    """
    total = count_increasing_dags(n, m)
    limit = enumeration_cap(cap)
    if total > limit:
        raise CapExceededError(
            f"I_{n}^({m}) has {total} graphs, above the enumeration cap {limit}; "
            f"raise RRDAG_ENUMERATION_CAP or pass cap="
        )
    prefix = complete_prefix(n, m)
    choices = [
        [tuple(reversed(c)) for c in combinations(range(1, v), m)]
        for v in range(m + 2, n + 1)
    ]
    for rows in product(*choices):
        targets = np.zeros((n, m), dtype=np.int64)
        targets[: prefix.shape[0]] = prefix
        if rows:
            targets[m + 1 :] = rows
        yield LabeledDag(n=n, m=m, targets=targets)


# ---------------------------------------------------------------------------
# Exhaustive coalescent pushforward
# ---------------------------------------------------------------------------

@dataclass
class ExactDistribution:
    """Integer multiplicity of every graph reached by some trace."""

    n: int
    m: int
    counts: dict[bytes, int]
    total: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.total:
            raise ValueError("multiplicities do not sum to the outcome total")

    @property
    def distinct(self) -> int:
        return len(self.counts)

    def graphs(self) -> Iterator[tuple[LabeledDag, int]]:
        """(graph, multiplicity) pairs ordered by edge list."""
        decoded = [(LabeledDag.decode(key), c) for key, c in self.counts.items()]
        decoded.sort(key=lambda gc: list(gc[0].edges()))
        yield from decoded

    def multiplicities(self) -> set[int]:
        return set(self.counts.values())

    def is_uniform(self) -> bool:
        """Every graph of the class reached, each exactly n! times."""
        return (
            self.distinct == count_increasing_dags(self.n, self.m)
            and self.multiplicities() == {math.factorial(self.n)}
        )

    def to_fixture(self) -> dict:
        return {
            "m": self.m,
            "n": self.n,
            "total": self.total,
            "graphs": [
                {"edges": [[v, w] for v, w in g.edges()], "count": c}
                for g, c in self.graphs()
            ],
        }

    def write_fixture(self, path: Path | str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_fixture(), separators=(",", ":")) + "\n", encoding="utf-8")
        logger.info("Wrote oracle fixture %s (%d graphs)", path, self.distinct)
        return path

    @classmethod
    def from_fixture(cls, obj: dict) -> "ExactDistribution":
        n, m = obj["n"], obj["m"]
        counts = {
            LabeledDag.from_edges(n, m, [tuple(e) for e in entry["edges"]]).encode(): entry["count"]
            for entry in obj["graphs"]
        }
        return cls(n=n, m=m, counts=counts, total=obj["total"])


def _exhaust_chunk(n: int, m: int, first: "tuple[tuple[int, ...], int] | None") -> Counter:
    counts: Counter = Counter()
    for trace in iter_traces(n, m, first=first):
        counts[to_labeled_dag(trace).encode()] += 1
    return counts


def exhaust_coalescent(n: int, m: int, cap: int | None = None, workers: int = 1) -> ExactDistribution:
    """Replay every trace of the (m,n)-coalescent and count the graphs it produces.

    Args:
        n, m: Coalescent parameters.
        cap: Maximum number of traces; defaults to RRDAG_EXHAUSTION_CAP or 10^8.
        workers: Processes to split the step-n choices over. The result does
            not depend on it.

    Raises:
        CapExceededError: If the outcome space is larger than the cap.
    """
    total = count_traces(n, m)
    limit = exhaustion_cap(cap)
    if total > limit:
        raise CapExceededError(
            f"(m,n)=({m},{n}) has {total} traces, above the exhaustion cap {limit}; "
            f"raise RRDAG_EXHAUSTION_CAP or pass cap="
        )
    logger.info("Exhausting %d traces for (m,n)=(%d,%d)", total, m, n)

    counts: Counter = Counter()
    if workers <= 1 or n < 2:
        counts = _exhaust_chunk(n, m, None)
    else:
        firsts = step_choices(n, m)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_exhaust_chunk, [n] * len(firsts), [m] * len(firsts), firsts):
                counts.update(part)

    dist = ExactDistribution(n=n, m=m, counts=dict(counts), total=total)
    logger.info("(m,n)=(%d,%d): %d graphs, multiplicities %s",
                m, n, dist.distinct, sorted(dist.multiplicities()))
    return dist


def load_fixture(path: Path | str) -> ExactDistribution:
    return ExactDistribution.from_fixture(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Exact degree laws
# ---------------------------------------------------------------------------

def _degree_vector_counts(dist: ExactDistribution, k: int) -> tuple[np.ndarray, int]:
    """Weighted counts of (d(V_1),...,d(V_k)) over graphs and ordered distinct vertex k-tuples."""
    n = dist.n
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    table = np.zeros((n + 1,) * k, dtype=np.int64)
    for g, c in dist.graphs():
        degrees = g.in_degrees.tolist()
        for vs in permutations(range(n), k):
            table[tuple(degrees[v] for v in vs)] += c
    denominator = dist.total * math.perm(n, k)
    return table, denominator


def exact_degree_pmf(dist: ExactDistribution, k: int) -> dict[tuple[int, ...], Fraction]:
    """P(d_n(V_j) = d_j, j in [k]) for every d-vector in [0, n]^k, V uniform distinct vertices."""
    table, denominator = _degree_vector_counts(dist, k)
    return {idx: Fraction(int(table[idx]), denominator) for idx in np.ndindex(table.shape)}


def exact_degree_law(dist: ExactDistribution, k: int) -> dict[tuple[int, ...], Fraction]:
    """P(d_n(V_j) >= d_j, j in [k]) for every d-vector in [0, n]^k."""
    table, denominator = _degree_vector_counts(dist, k)
    tails = table
    for axis in range(k):
        tails = np.flip(np.cumsum(np.flip(tails, axis=axis), axis=axis), axis=axis)
    return {idx: Fraction(int(tails[idx]), denominator) for idx in np.ndindex(tails.shape)}


def exact_degree_histogram(dist: ExactDistribution) -> list[Fraction]:
    """Expected number of vertices of each degree 0, 1, ..., n-1."""
    sums = [0] * dist.n
    for g, c in dist.graphs():
        for d, count in enumerate(np.bincount(g.in_degrees, minlength=dist.n).tolist()):
            sums[d] += c * count
    return [Fraction(s, dist.total) for s in sums]


def verify_inclusion_exclusion(
    dist: ExactDistribution,
    k: int,
    dvec: tuple[int, ...],
    *,
    pmf: dict[tuple[int, ...], Fraction] | None = None,
    tails: dict[tuple[int, ...], Fraction] | None = None,
) -> Fraction:
    """Residual of P(d = dvec) - sum_{S ⊆ [k]} (-1)^|S| P(d >= dvec + 1_S); exactly 0 when it holds.

    Pass precomputed ``pmf``/``tails`` tables to check many vectors cheaply.
    """
    dvec = tuple(int(x) for x in dvec)
    if len(dvec) != k or any(x < 0 for x in dvec):
        raise ValueError(f"dvec must hold {k} non-negative entries, got {dvec}")
    pmf = pmf if pmf is not None else exact_degree_pmf(dist, k)
    tails = tails if tails is not None else exact_degree_law(dist, k)

    zero = Fraction(0)
    total = zero
    for size in range(k + 1):
        for subset in combinations(range(k), size):
            shifted = tuple(x + (j in subset) for j, x in enumerate(dvec))
            total += (-1) ** size * tails.get(shifted, zero)
    return pmf.get(dvec, zero) - total
