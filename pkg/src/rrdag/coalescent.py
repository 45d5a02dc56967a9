"""
Kingman (m,n)-coalescent: trace sampling, replay, relabeling, selection profiles.

A run starts from n isolated roots. At step i (from n down to 2) the i current
trees are listed in lexicographic order of their increasingly sorted vertex
sets, (m+1)∧i of them are selected uniformly, and the root of one selected
tree (the loser) sends an edge to every other selected root. Renaming each
vertex by the step at which it lost (1 for the last root) yields a uniformly
random increasing DAG.

The full randomness of a run is a CoalescentTrace. Replaying it in
lexicographic order reproduces the construction exactly; replaying it against
a plain root pool is cheaper and gives the same law, which is what large
Monte Carlo runs use.
"""

import bisect
import importlib.resources
import io
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import IO, Iterable, Iterator, Literal

import numpy as np

from .graph import LabeledDag
from .sampling import Seed, as_generator, batch_distinct

logger = logging.getLogger("rrdag")

Ordering = Literal["lex", "pool"]


class TraceFormatError(ValueError):
    """A trace (in memory or in an event file) is malformed."""


def selection_size(i: int, m: int) -> int:
    """Number of trees selected at step i: (m+1)∧i."""
    return min(m + 1, i)


def _check_params(n: int, m: int) -> None:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MergeEvent:
    """One step: ascending selected tree positions and the 1-based loser index."""

    step: int
    selected: tuple[int, ...]
    loser_index: int

    @property
    def loser_position(self) -> int:
        return self.selected[self.loser_index - 1]

    def to_line(self) -> str:
        return " ".join(str(x) for x in (self.step, *self.selected, self.loser_index))


@dataclass(frozen=True, eq=False)
class CoalescentTrace:
    """All randomness of one coalescent run.

    Row r of ``selected`` belongs to step n - r and holds its selected
    positions followed by zero padding; ``losers[r]`` is the loser index.
    """

    n: int
    m: int
    selected: np.ndarray
    losers: np.ndarray

    def __post_init__(self):
        _check_params(self.n, self.m)
        selected = np.asarray(self.selected, dtype=np.int64)
        losers = np.asarray(self.losers, dtype=np.int64)
        width = self.m + 1
        if selected.shape != (self.n - 1, width) or losers.shape != (self.n - 1,):
            raise TraceFormatError(
                f"expected {self.n - 1} events of width {width}, "
                f"got selected {selected.shape} and losers {losers.shape}"
            )
        steps = np.arange(self.n, 1, -1)
        sizes = np.minimum(steps, width)
        filled = np.arange(width)[None, :] < sizes[:, None]

        bad = filled & ((selected < 1) | (selected > steps[:, None]))
        bad |= ~filled & (selected != 0)
        if width > 1:
            both = filled[:, 1:]
            bad[:, 1:] |= both & (selected[:, 1:] <= selected[:, :-1])
        bad_rows = np.flatnonzero(bad.any(axis=1) | (losers < 1) | (losers > sizes))
        if bad_rows.size:
            r = int(bad_rows[0])
            raise TraceFormatError(
                f"step {self.n - r}: selection {selected[r, : sizes[r]].tolist()} "
                f"with loser index {int(losers[r])} is not a valid event"
            )
        selected.setflags(write=False)
        losers.setflags(write=False)
        object.__setattr__(self, "selected", selected)
        object.__setattr__(self, "losers", losers)

    @classmethod
    def from_events(cls, n: int, m: int, events: Iterable[MergeEvent]) -> "CoalescentTrace":
        """Build a trace from events listed for steps n, n-1, ..., 2.

        Raises:
            TraceFormatError: On a wrong step sequence or tuple size.
        """
        _check_params(n, m)
        events = list(events)
        if len(events) != n - 1:
            raise TraceFormatError(f"expected {n - 1} events for n={n}, got {len(events)}")
        selected = np.zeros((n - 1, m + 1), dtype=np.int64)
        losers = np.zeros(n - 1, dtype=np.int64)
        for r, event in enumerate(events):
            step = n - r
            if event.step != step:
                raise TraceFormatError(f"event {r + 1} has step {event.step}, expected {step}")
            if len(event.selected) != selection_size(step, m):
                raise TraceFormatError(
                    f"step {step}: expected {selection_size(step, m)} selected trees, "
                    f"got {len(event.selected)}"
                )
            selected[r, : len(event.selected)] = event.selected
            losers[r] = event.loser_index
        return cls(n=n, m=m, selected=selected, losers=losers)

    @property
    def events(self) -> tuple[MergeEvent, ...]:
        return tuple(self.iter_events())

    def iter_events(self) -> Iterator[MergeEvent]:
        for r in range(self.n - 1):
            step = self.n - r
            k = selection_size(step, self.m)
            yield MergeEvent(
                step=step,
                selected=tuple(int(a) for a in self.selected[r, :k]),
                loser_index=int(self.losers[r]),
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, CoalescentTrace):
            return NotImplemented
        return (
            self.n == other.n
            and self.m == other.m
            and np.array_equal(self.selected, other.selected)
            and np.array_equal(self.losers, other.losers)
        )

    def __hash__(self) -> int:
        return hash((self.n, self.m, self.selected.tobytes(), self.losers.tobytes()))


def sample_trace(n: int, m: int, seed: "Seed | int | np.random.Generator | None" = None) -> CoalescentTrace:
    """Sample a Kingman (m,n)-coalescent trace.

    Each step's selection is uniform over ascending ((m+1)∧i)-tuples of [i],
    its loser index uniform and independent.

    Raises:
        ValueError: If n or m is below 1.
    """
    _check_params(n, m)
    rng = as_generator(seed)
    width = m + 1
    steps = np.arange(n, 1, -1, dtype=np.int64)
    selected = np.zeros((n - 1, width), dtype=np.int64)

    free = steps > width
    selected[free] = batch_distinct(rng, steps[free], width)
    for r in np.flatnonzero(~free):
        i = int(steps[r])
        selected[r, :i] = np.arange(1, i + 1)

    losers = rng.integers(1, np.minimum(steps, width) + 1)
    return CoalescentTrace(n=n, m=m, selected=selected, losers=losers.astype(np.int64))


def count_traces(n: int, m: int) -> int:
    """Number of equally likely traces: prod_{i=2}^{n} C(i,(m+1)∧i)·((m+1)∧i)."""
    _check_params(n, m)
    total = 1
    for i in range(2, n + 1):
        k = selection_size(i, m)
        total *= math.comb(i, k) * k
    return total


def step_choices(i: int, m: int) -> list[tuple[tuple[int, ...], int]]:
    """Every (selection, loser index) pair available at step i."""
    k = selection_size(i, m)
    return [(sel, xi) for sel in combinations(range(1, i + 1), k) for xi in range(1, k + 1)]


def iter_traces(n: int, m: int, first: "tuple[tuple[int, ...], int] | None" = None) -> Iterator[CoalescentTrace]:
    """Yield every (m,n)-coalescent trace once.

    Args:
        first: Optionally pin the step-n choice, which lets callers split the
            outcome space across workers.
    """
    _check_params(n, m)
    if n == 1:
        yield CoalescentTrace(n=1, m=m, selected=np.zeros((0, m + 1)), losers=np.zeros(0))
        return
    per_step = [step_choices(i, m) for i in range(n, 1, -1)]
    if first is not None:
        per_step[0] = [first]
    for combo in product(*per_step):
        events = [
            MergeEvent(step=n - r, selected=sel, loser_index=xi)
            for r, (sel, xi) in enumerate(combo)
        ]
        yield CoalescentTrace.from_events(n, m, events)


# ---------------------------------------------------------------------------
# Event files
# ---------------------------------------------------------------------------

def read_trace(fp: IO[str], m: int | None = None) -> CoalescentTrace:
    """Parse the text event format: one ``i a_1 ... a_k xi`` line per step.

    Lines starting with ``#`` are comments; ``# m=<int>`` fixes m. Without it
    (and without the ``m`` argument), m is read off the first event's tuple
    size, or taken as n - 1 when n <= m + 1 leaves it undetermined.

    Raises:
        TraceFormatError: With the offending line number.
    """
    events: list[MergeEvent] = []
    header_m = None
    for lineno, raw in enumerate(fp, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip().replace(" ", "")
            if body.startswith("m="):
                try:
                    header_m = int(body[2:])
                except ValueError as e:
                    raise TraceFormatError(f"line {lineno}: bad header '{line}'") from e
            continue
        try:
            values = [int(tok) for tok in line.split()]
        except ValueError as e:
            raise TraceFormatError(f"line {lineno}: non-integer token in '{line}'") from e
        if len(values) < 3:
            raise TraceFormatError(f"line {lineno}: expected 'i a_1 ... a_k xi', got '{line}'")
        step, sel, xi = values[0], tuple(values[1:-1]), values[-1]
        if any(b <= a for a, b in zip(sel, sel[1:])):
            raise TraceFormatError(f"line {lineno}: selected tuple {list(sel)} is not strictly ascending")
        if sel[0] < 1 or sel[-1] > step:
            raise TraceFormatError(f"line {lineno}: selected tuple {list(sel)} outside [1, {step}]")
        if not 1 <= xi <= len(sel):
            raise TraceFormatError(f"line {lineno}: loser index {xi} outside [1, {len(sel)}]")
        if events and step != events[-1].step - 1:
            raise TraceFormatError(f"line {lineno}: step {step} does not follow step {events[-1].step}")
        events.append(MergeEvent(step=step, selected=sel, loser_index=xi))

    if not events:
        raise TraceFormatError("trace file contains no events")
    n = events[0].step
    if events[-1].step != 2:
        raise TraceFormatError(f"trace stops at step {events[-1].step}, expected 2")

    if m is None:
        m = header_m
    if m is None:
        k = len(events[0].selected)
        m = k - 1 if k < n else n - 1
    try:
        return CoalescentTrace.from_events(n, m, events)
    except ValueError as e:
        raise TraceFormatError(f"inconsistent trace for m={m}: {e}") from e


def write_trace(trace: CoalescentTrace, fp: IO[str], header: bool = True) -> None:
    """Write the event format read by read_trace()."""
    if header:
        fp.write(f"# m={trace.m}\n")
    for event in trace.iter_events():
        fp.write(event.to_line())
        fp.write("\n")


# ---------------------------------------------------------------------------
# Forest state
# ---------------------------------------------------------------------------

class _LexKey:
    """Orders vertex bitsets lexicographically by their sorted vertex lists.

    Valid only for sets where neither contains the other, which holds for
    the trees of distinct roots.
    """

    __slots__ = ("bits",)

    def __init__(self, bits: int):
        self.bits = bits

    def __lt__(self, other: "_LexKey") -> bool:
        diff = self.bits ^ other.bits
        return bool(diff & -diff & self.bits)


class ForestState:
    """Current roots of a coalescent run, in lexicographic tree order.

    ``trees[r]`` is a bitset (bit v set for vertex v) of every vertex that
    reaches root r. Trees of different roots may share vertices when m >= 2.
    """

    def __init__(self, n: int):
        self.n = n
        self.roots: list[int] = list(range(1, n + 1))
        self.trees: dict[int, int] = {v: 1 << v for v in self.roots}

    def __len__(self) -> int:
        return len(self.roots)

    def _key(self, root: int) -> _LexKey:
        return _LexKey(self.trees[root])

    def position_of(self, root: int) -> int:
        """1-based position of root's tree."""
        return self.roots.index(root) + 1

    def first_tree_of(self, v: int) -> int:
        """Root of the lexicographically first tree containing v."""
        for r in self.roots:
            if self.trees[r] >> v & 1:
                return r
        raise KeyError(f"vertex {v} is not in any tree")

    def merge(self, positions: tuple[int, ...], loser_index: int) -> tuple[int, list[int]]:
        """Apply one step; returns (loser root, winner roots in selection order)."""
        chosen = [self.roots[p - 1] for p in positions]
        loser = chosen.pop(loser_index - 1)
        loser_tree = self.trees.pop(loser)
        for p in sorted(positions, reverse=True):
            del self.roots[p - 1]
        for w in chosen:
            self.trees[w] |= loser_tree
            bisect.insort(self.roots, w, key=self._key)
        return loser, chosen


class _RootPool:
    """Roots in an arbitrary deterministic order with O(1) removal."""

    def __init__(self, n: int):
        self.roots = list(range(1, n + 1))

    def __len__(self) -> int:
        return len(self.roots)

    def merge(self, positions: tuple[int, ...], loser_index: int) -> tuple[int, list[int]]:
        chosen = [self.roots[p - 1] for p in positions]
        slot = positions[loser_index - 1] - 1
        loser = chosen.pop(loser_index - 1)
        last = self.roots.pop()
        if slot < len(self.roots):
            self.roots[slot] = last
        return loser, chosen


# ---------------------------------------------------------------------------
# Replay and relabeling
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReplayResult:
    """Final forest F_1 of a replay, in coalescent vertex names.

    ``loss_step[v - 1]`` is the step at which v lost (1 for the final root);
    it is the relabeling L_C.
    """

    n: int
    m: int
    sources: np.ndarray
    targets: np.ndarray
    loss_step: np.ndarray
    final_root: int
    ordering: str = "lex"
    win_counts: np.ndarray = field(default=None, repr=False)

    @property
    def labels(self) -> np.ndarray:
        return self.loss_step

    @property
    def edge_steps(self) -> np.ndarray:
        """Step at which each edge was added (the source's loss step)."""
        return self.loss_step[self.sources - 1]

    def label_of(self, v: int) -> int:
        return int(self.loss_step[v - 1])

    def renamed(self, perm: np.ndarray) -> "ReplayResult":
        """Same forest with coalescent vertex v renamed to perm[v - 1]."""
        perm = np.asarray(perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(1, self.n + 1)):
            raise ValueError("perm must be a permutation of 1..n")
        loss = self._permuted(self.loss_step, perm)
        return ReplayResult(
            n=self.n,
            m=self.m,
            sources=perm[self.sources - 1],
            targets=perm[self.targets - 1],
            loss_step=loss,
            final_root=int(perm[self.final_root - 1]),
            ordering=self.ordering,
            win_counts=None if self.win_counts is None else self._permuted(self.win_counts, perm),
        )

    @staticmethod
    def _permuted(values: np.ndarray, perm: np.ndarray) -> np.ndarray:
        out = np.empty_like(values)
        out[perm - 1] = values
        return out


def replay_trace(trace: CoalescentTrace, ordering: Ordering = "lex") -> ReplayResult:
    """Replay a trace to its final forest and the relabel map L_C.

    Args:
        trace: A well-formed trace.
        ordering: "lex" interprets positions against the lexicographic tree
            order (the exact construction); "pool" against a swap-remove root
            pool, which has the same law and costs O(m) per step.

    Returns:
        ReplayResult with every edge (loser -> winner) and loss steps.
    """
    if ordering == "lex":
        state: "ForestState | _RootPool" = ForestState(trace.n)
    elif ordering == "pool":
        state = _RootPool(trace.n)
    else:
        raise ValueError(f"unknown ordering '{ordering}', expected 'lex' or 'pool'")

    n, m = trace.n, trace.m
    total_edges = sum(min(m, i - 1) for i in range(2, n + 1))
    sources = np.empty(total_edges, dtype=np.int64)
    targets = np.empty(total_edges, dtype=np.int64)
    loss_step = np.ones(n, dtype=np.int64)
    wins = np.zeros(n, dtype=np.int64)

    pos = 0
    selected = trace.selected.tolist()
    losers = trace.losers.tolist()
    for r in range(n - 1):
        step = n - r
        k = selection_size(step, m)
        loser, winners = state.merge(tuple(selected[r][:k]), losers[r])
        loss_step[loser - 1] = step
        for w in winners:
            sources[pos] = loser
            targets[pos] = w
            wins[w - 1] += 1
            pos += 1

    final_root = state.roots[0]
    return ReplayResult(
        n=n,
        m=m,
        sources=sources,
        targets=targets,
        loss_step=loss_step,
        final_root=final_root,
        ordering=ordering,
        win_counts=wins,
    )


def relabel(result: ReplayResult) -> LabeledDag:
    """F_1 with every vertex renamed by its loss step."""
    labels = result.loss_step
    return LabeledDag.from_arrays(
        result.n, result.m, labels[result.sources - 1], labels[result.targets - 1]
    )


def to_labeled_dag(trace: CoalescentTrace, ordering: Ordering = "lex") -> LabeledDag:
    """The increasing DAG produced by a trace."""
    return relabel(replay_trace(trace, ordering=ordering))


def generate_coalescent(n: int, m: int, seed: "Seed | int | np.random.Generator | None" = None,
                        ordering: Ordering = "pool") -> LabeledDag:
    """Sample an RRDAG through the coalescent."""
    return to_labeled_dag(sample_trace(n, m, seed), ordering=ordering)


def in_degrees_by_label(result: ReplayResult) -> np.ndarray:
    """In-degree of every relabeled vertex, read off the win counts without building the graph."""
    degrees = np.zeros(result.n, dtype=np.int64)
    degrees[result.loss_step - 1] = result.win_counts
    return degrees


# ---------------------------------------------------------------------------
# Selection profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectionProfile:
    """Selection record of one coalescent vertex, aligned with steps n, ..., 2.

    ``s[r]`` says whether the first tree containing the vertex was selected at
    step n - r, ``h[r]`` whether that tree's root lost. ``connection_sets[r]``
    is the connection set at entry to that step and ``connection_hits[r]``
    whether the step's loser belonged to it.
    """

    vertex: int
    n: int
    m: int
    s: tuple[bool, ...]
    h: tuple[bool, ...]
    connection_sets: tuple[frozenset[int], ...]
    connection_hits: tuple[bool, ...]

    @property
    def steps(self) -> tuple[int, ...]:
        return tuple(range(self.n, 1, -1))

    @property
    def selection_set(self) -> tuple[int, ...]:
        """Steps at which the vertex's tree was selected, descending."""
        return tuple(step for step, sel in zip(self.steps, self.s) if sel)


def selection_profiles(trace: CoalescentTrace, vertices: Iterable[int]) -> dict[int, SelectionProfile]:
    """Selection profiles of several tracked vertices in one lexicographic replay.

    First trees are read from a root-by-vertex membership matrix, so a step
    costs one vectorized scan over the current roots.

    Raises:
        ValueError: If a vertex is outside [n].
    """
    tracked = list(dict.fromkeys(vertices))
    for v in tracked:
        if not 1 <= v <= trace.n:
            raise ValueError(f"vertex {v} out of range [1, {trace.n}]")

    n, m = trace.n, trace.m
    steps = n - 1
    cols = np.array(tracked, dtype=np.int64)
    member = np.eye(n + 1, dtype=bool)
    s = np.zeros((steps, len(tracked)), dtype=bool)
    h = np.zeros((steps, len(tracked)), dtype=bool)
    hits = np.zeros((steps, len(tracked)), dtype=bool)
    conn = [frozenset({v}) for v in tracked]
    conn_log: list[list[frozenset[int]]] = [[] for _ in tracked]

    is_chosen = np.zeros(n + 1, dtype=bool)
    state = ForestState(n)
    for r, event in enumerate(trace.iter_events()):
        order = np.array(state.roots, dtype=np.int64)
        first = order[member[np.ix_(order, cols)].argmax(axis=0)]
        chosen = order[np.asarray(event.selected, dtype=np.int64) - 1]
        loser_root = int(order[event.loser_position - 1])
        is_chosen[chosen] = True
        s[r] = is_chosen[first]
        is_chosen[chosen] = False
        h[r] = s[r] & (first == loser_root)
        for j, c in enumerate(conn):
            conn_log[j].append(c)
            hits[r, j] = loser_root in c
        loser, winners = state.merge(event.selected, event.loser_index)
        member[winners] |= member[loser]
        if hits[r].any():
            won = frozenset(winners)
            for j in np.flatnonzero(hits[r]):
                conn[j] = won

    profiles = {}
    for j, v in enumerate(tracked):
        profiles[v] = SelectionProfile(
            vertex=v,
            n=n,
            m=m,
            s=tuple(s[:, j].tolist()),
            h=tuple(h[:, j].tolist()),
            connection_sets=tuple(conn_log[j]),
            connection_hits=tuple(hits[:, j].tolist()),
        )
    return profiles


def selection_profile(trace: CoalescentTrace, v: int) -> SelectionProfile:
    """Selection profile of coalescent vertex v."""
    return selection_profiles(trace, [v])[v]


def degree_from_streak(p: SelectionProfile) -> int:
    """Length of the first winning streak: selections before the first loss."""
    streak = 0
    for sel, lost in zip(p.s, p.h):
        if not sel:
            continue
        if lost:
            break
        streak += 1
    return streak


def label_from_last_loss(p: SelectionProfile) -> int:
    """Largest step with h = 1, or 1 if the vertex's tree never lost."""
    for step, lost in zip(p.steps, p.h):
        if lost:
            return step
    return 1


def ungreedy_from_connection_sets(p: SelectionProfile) -> int:
    """Number of steps whose loser lay in the connection set."""
    return sum(p.connection_hits)


# ---------------------------------------------------------------------------
# Simultaneous selection
# ---------------------------------------------------------------------------

def tau_k(trace: CoalescentTrace, k: int, ordering: Ordering = "lex") -> int:
    """Largest step at which the first trees of two of the vertices 1..k are both selected.

    A vertex's first tree is the lexicographically smallest tree containing
    it. Two tracked vertices sharing a selected first tree count twice.
    The last step selects every remaining tree, so a result of 0 is never
    returned for a valid k.

    Args:
        trace: A well-formed trace.
        k: Number of tracked vertices, 2 <= k <= n.
        ordering: Positions read against the lexicographic order ("lex") or
            the swap-remove root pool ("pool"); both give the same law.

    Raises:
        ValueError: If k < 2, k > n, or the ordering is unknown.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > trace.n:
        raise ValueError(f"k={k} exceeds n={trace.n}")
    if ordering == "lex":
        state: "ForestState | _RootPool" = ForestState(trace.n)
    elif ordering == "pool":
        state = _RootPool(trace.n)
    else:
        raise ValueError(f"unknown ordering '{ordering}', expected 'lex' or 'pool'")

    tracked = range(1, k + 1)
    trees: dict[int, int] = {}
    containing = {v: {v} for v in tracked}

    def first_tree(v: int) -> int:
        return min(containing[v], key=lambda r: _LexKey(trees.get(r, 1 << r)))

    for event in trace.iter_events():
        chosen = {state.roots[p - 1] for p in event.selected}
        touched = [v for v in tracked if not containing[v].isdisjoint(chosen)]
        if len(touched) >= 2 and sum(first_tree(v) in chosen for v in touched) >= 2:
            return event.step
        loser, winners = state.merge(event.selected, event.loser_index)
        loser_tree = trees.pop(loser, 1 << loser)
        for w in winners:
            trees[w] = trees.get(w, 1 << w) | loser_tree
        for v in tracked:
            if loser in containing[v]:
                containing[v].discard(loser)
                containing[v].update(winners)
    return 0


# ---------------------------------------------------------------------------
# Shipped fixtures
# ---------------------------------------------------------------------------

FIGURE_TRACE = "coalescent_2_5.events"
FIGURE_GRAPH = "coalescent_2_5_relabeled.jsonl"


def load_fixture_trace(name: str = FIGURE_TRACE) -> CoalescentTrace:
    """Read an event file shipped in rrdag.fixtures."""
    ref = importlib.resources.files("rrdag.fixtures").joinpath(name)
    return read_trace(io.StringIO(ref.read_text(encoding="utf-8")))
