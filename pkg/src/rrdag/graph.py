"""
Labeled increasing DAGs: representation, validation, traversal, JSONL I/O.

A LabeledDag on [n] stores, for every vertex v, its out-neighbors sorted
descending by label in one row of a zero-padded integer array. In-degrees are
counted once at construction. Both random constructions (recursive and
coalescent) produce this type, and every statistic in the package reads it.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

import numpy as np

logger = logging.getLogger("rrdag")

# Cap on violation messages collected by validate(); the count is still exact.
_MAX_REPORTED_VIOLATIONS = 50


class GraphFormatError(ValueError):
    """A serialized graph could not be parsed."""


class MalformedGraphError(ValueError):
    """A traversal met a vertex that breaks the increasing-DAG invariants."""


# ---------------------------------------------------------------------------
# Core type
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LabeledDag:
    """Directed graph on [n] with out-neighbor rows sorted descending.

    ``targets[v - 1]`` holds the out-neighbors of vertex v followed by zeros.
    The array is read-only; the graph is safe to share between threads.
    """

    n: int
    m: int
    targets: np.ndarray
    in_degrees: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        targets = np.asarray(self.targets, dtype=np.int64)
        if targets.ndim != 2 or targets.shape[0] != self.n:
            raise ValueError(
                f"targets must have shape (n, width) with n={self.n}, got {targets.shape}"
            )
        targets.setflags(write=False)
        object.__setattr__(self, "targets", targets)

        counts = np.bincount(targets[targets > 0], minlength=self.n + 1)[1:]
        counts.setflags(write=False)
        object.__setattr__(self, "in_degrees", counts)

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------

    @classmethod
    def from_edges(cls, n: int, m: int, edges: Iterable[tuple[int, int]]) -> "LabeledDag":
        """Build a graph from (v, w) pairs meaning an edge v -> w.

        Edges are stored as given (invalid graphs are representable so that
        validate() can report them); only vertex range is enforced.

        Raises:
            ValueError: If n or m is below 1 or an endpoint lies outside [n].
        """
        pairs = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        return cls.from_arrays(n, m, pairs[:, 0], pairs[:, 1])

    @classmethod
    def from_arrays(cls, n: int, m: int, src: np.ndarray, dst: np.ndarray) -> "LabeledDag":
        """Vectorized variant of from_edges taking parallel source/target arrays."""
        if n < 1:
            raise ValueError(f"n must be >= 1, got {n}")
        if m < 1:
            raise ValueError(f"m must be >= 1, got {m}")
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if src.size and (
            src.min() < 1 or src.max() > n or dst.min() < 1 or dst.max() > n
        ):
            raise ValueError(f"edge endpoint outside [1, {n}]")

        order = np.lexsort((-dst, src))
        src, dst = src[order], dst[order]
        per_row = np.bincount(src, minlength=n + 1)[1:]
        width = max(m, int(per_row.max()) if per_row.size else 0)
        targets = np.zeros((n, width), dtype=np.int64)
        if src.size:
            col = np.arange(src.size) - np.searchsorted(src, src, side="left")
            targets[src - 1, col] = dst
        return cls(n=n, m=m, targets=targets)

    # ------------------------------------------------------------------
    # Accessors
    # ------------------------------------------------------------------

    def out_neighbors(self, v: int) -> tuple[int, ...]:
        """Out-neighbors of v, highest label first."""
        _check_vertex(self, v)
        row = self.targets[v - 1]
        return tuple(int(w) for w in row[row > 0])

    def edges(self) -> Iterator[tuple[int, int]]:
        """Edges by increasing source, then decreasing target."""
        for v in range(1, self.n + 1):
            for w in self.out_neighbors(v):
                yield v, w

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(self.targets))

    def encode(self) -> bytes:
        """Canonical byte encoding (n, m, sorted edge list); equal graphs, equal bytes."""
        pairs = np.array(list(self.edges()), dtype=np.int32).reshape(-1, 2)
        header = np.array([self.n, self.m], dtype=np.int32)
        return header.tobytes() + pairs.tobytes()

    @classmethod
    def decode(cls, data: bytes) -> "LabeledDag":
        """Inverse of encode()."""
        values = np.frombuffer(data, dtype=np.int32).astype(np.int64)
        if values.size < 2 or values.size % 2:
            raise GraphFormatError(f"encoded graph has {len(data)} bytes, not a valid length")
        pairs = values[2:].reshape(-1, 2)
        return cls.from_arrays(int(values[0]), int(values[1]), pairs[:, 0], pairs[:, 1])

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledDag):
            return NotImplemented
        return self.n == other.n and self.m == other.m and self.encode() == other.encode()

    def __hash__(self) -> int:
        return hash(self.encode())


def _check_vertex(g: LabeledDag, v: int) -> None:
    if not 1 <= v <= g.n:
        raise ValueError(f"vertex {v} out of range [1, {g.n}]")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate(): ok, or the list of violated invariants."""

    ok: bool
    violations: tuple[str, ...] = ()
    violation_count: int = 0

    def __bool__(self) -> bool:
        return self.ok


def validate(g: LabeledDag) -> ValidationReport:
    """Check membership in the class of increasing DAGs with out-degree m∧(v-1).

    Returns:
        ValidationReport; violations are data, never raised.
    """
    violations: list[str] = []
    total = 0

    def report(message: str) -> None:
        nonlocal total
        total += 1
        if len(violations) < _MAX_REPORTED_VIOLATIONS:
            violations.append(message)

    t = g.targets
    present = t > 0
    out_deg = present.sum(axis=1)
    expected = np.minimum(g.m, np.arange(g.n))

    for idx in np.flatnonzero(out_deg != expected):
        report(
            f"vertex {idx + 1} has out-degree {int(out_deg[idx])}, "
            f"expected {int(expected[idx])}"
        )

    labels = np.arange(1, g.n + 1)[:, None]
    for idx, col in zip(*np.nonzero(present & (t >= labels))):
        v, w = idx + 1, int(t[idx, col])
        if w == v:
            report(f"edge ({v},{w}) is a self-loop")
        else:
            report(f"edge ({v},{w}) increases")

    if t.shape[1] > 1:
        dup = present[:, 1:] & (t[:, 1:] == t[:, :-1])
        for idx, col in zip(*np.nonzero(dup)):
            report(f"vertex {idx + 1} lists out-neighbor {int(t[idx, col + 1])} more than once")

    return ValidationReport(ok=total == 0, violations=tuple(violations), violation_count=total)


# ---------------------------------------------------------------------------
# Degrees and depths
# ---------------------------------------------------------------------------

def degree_of(g: LabeledDag, v: int) -> int:
    """In-degree of v (number of w with an edge w -> v)."""
    _check_vertex(g, v)
    return int(g.in_degrees[v - 1])


def max_degree(g: LabeledDag) -> int:
    return int(g.in_degrees.max())


def degree_histogram(g: LabeledDag) -> np.ndarray:
    """h[d] = number of vertices with in-degree d, for d = 0..max degree."""
    return np.bincount(g.in_degrees)


def ungreedy_depth_walk(g: LabeledDag, v: int) -> int:
    """Length of the path from v that always steps to the highest-labeled out-neighbor.

    Raises:
        ValueError: If v is outside [n].
        MalformedGraphError: If the walk meets a non-root without out-neighbors
            or a non-decreasing step.
    """
    _check_vertex(g, v)
    first = g.targets[:, 0]
    depth = 0
    current = v
    while current != 1:
        nxt = int(first[current - 1])
        if nxt == 0:
            raise MalformedGraphError(f"vertex {current} has no out-neighbors but is not 1")
        if nxt >= current:
            raise MalformedGraphError(f"edge ({current},{nxt}) does not decrease")
        current = nxt
        depth += 1
    return depth


def ungreedy_depths(g: LabeledDag) -> np.ndarray:
    """Ungreedy depth of every vertex; entry v-1 belongs to vertex v."""
    first = g.targets[:, 0].tolist()
    depths = [0] * g.n
    for v in range(2, g.n + 1):
        parent = first[v - 1]
        if parent == 0 or parent >= v:
            raise MalformedGraphError(f"vertex {v} breaks the ungreedy walk (next={parent})")
        depths[v - 1] = depths[parent - 1] + 1
    return np.asarray(depths, dtype=np.int64)


# ---------------------------------------------------------------------------
# JSONL serialization
# ---------------------------------------------------------------------------

def serialize(g: LabeledDag) -> str:
    """One JSON object, no trailing newline: {"n":..,"m":..,"edges":[[v,w],...]}."""
    edges = [[v, w] for v, w in g.edges()]
    return json.dumps({"n": g.n, "m": g.m, "edges": edges}, separators=(",", ":"))


def deserialize(line: str, lineno: int = 1) -> LabeledDag:
    """Parse one JSONL record.

    Raises:
        GraphFormatError: With the line number and offending field.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise GraphFormatError(f"line {lineno}: invalid JSON ({e.msg} at column {e.colno})") from e
    if not isinstance(obj, dict):
        raise GraphFormatError(f"line {lineno}: expected a JSON object")

    for key in ("n", "m", "edges"):
        if key not in obj:
            raise GraphFormatError(f"line {lineno}: missing field '{key}'")
    n, m, edges = obj["n"], obj["m"], obj["edges"]
    for key, value in (("n", n), ("m", m)):
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise GraphFormatError(f"line {lineno}: field '{key}' must be a positive integer")
    if not isinstance(edges, list):
        raise GraphFormatError(f"line {lineno}: field 'edges' must be a list")

    pairs = []
    for k, edge in enumerate(edges):
        if (
            not isinstance(edge, list)
            or len(edge) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in edge)
        ):
            raise GraphFormatError(f"line {lineno}: edges[{k}] must be a pair of integers")
        if not (1 <= edge[0] <= n and 1 <= edge[1] <= n):
            raise GraphFormatError(f"line {lineno}: edges[{k}] = {edge} outside [1, {n}]")
        pairs.append((edge[0], edge[1]))
    return LabeledDag.from_edges(n, m, pairs)


def dump_jsonl(graphs: Iterable[LabeledDag], fp: IO[str]) -> int:
    """Write one graph per line; returns the number written."""
    count = 0
    for g in graphs:
        fp.write(serialize(g))
        fp.write("\n")
        count += 1
    return count


def load_jsonl(fp: IO[str]) -> list[LabeledDag]:
    """Read every graph from a JSONL stream, skipping blank lines."""
    graphs = []
    for lineno, line in enumerate(fp, start=1):
        if not line.strip():
            continue
        graphs.append(deserialize(line, lineno=lineno))
    logger.debug("Loaded %d graphs", len(graphs))
    return graphs
