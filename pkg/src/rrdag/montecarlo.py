"""
Deterministic, parallel Monte Carlo experiments on random recursive DAGs.

An ExperimentConfig names the experiment kind, (m, n), the trial count and a
master seed. Trial t draws from its own Philox stream keyed by
(master_seed, t), so an Aggregate depends only on the config and never on
the worker count: trials are split into contiguous chunks, run in a process
pool, and reassembled in trial order.

Kinds:
    degree       degrees of tracked uniform vertices, degree counts around
                 ⌊log_{(m+1)/m} n⌋, the maximum degree
    depth_label  (ungreedy depth, label) of a uniform vertex given d_n >= d
    multi_label  labels of k uniform vertices given all degrees exceed thresholds
    tau          τ_k, the last step selecting two of k tracked trees together

Configuration:
    RRDAG_THREADS   worker processes when none are given (default: CPU count)
"""

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Sequence

import numpy as np
import pandas as pd
from scipy.special import perm

from . import stats, theory
from .coalescent import in_degrees_by_label, replay_trace, sample_trace, tau_k, to_labeled_dag
from .graph import LabeledDag, ungreedy_depth_walk, ungreedy_depths
from .recursive import generate_recursive
from .sampling import make_rng

logger = logging.getLogger("rrdag")

SCHEMA_VERSION = 1
KINDS = ("degree", "depth_label", "multi_label", "tau")
CONSTRUCTIONS = ("recursive", "coalescent")
MODES = ("faithful", "harvest")

_DEFAULT_CONSTRUCTION = {
    "degree": "recursive",
    "depth_label": "recursive",
    "multi_label": "recursive",
    "tau": "coalescent",
}

TOLERANCE_NOTE = (
    "finite-n bias of the limit laws is not quantified; tolerances and alpha "
    "levels are engineering judgments"
)
HARVEST_NOTE = (
    "approximate: harvest mode collects every qualifying vertex of a graph, "
    "so samples from one trial are dependent"
)
FINITE_N_NOTE = (
    "standardized labels carry a finite-n bias at moderate n (at m=2, n=1e5 the "
    "label margin has mean near -0.7 and sd near 1.2); label KS and quadrant "
    "checks against the limit law are expected to fail at that scale"
)
CORRELATION_HALF_WIDTH = 0.05


class ConfigError(ValueError):
    """An experiment config violates the schema; ``path`` locates the field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ExperimentError(RuntimeError):
    """An experiment ran but cannot produce the requested result."""


def resolve_workers(threads: int | None = None) -> int:
    """Worker count: explicit value, else RRDAG_THREADS, else the CPU count."""
    if threads is None:
        raw = os.environ.get("RRDAG_THREADS")
        if raw:
            try:
                threads = int(raw)
            except ValueError as e:
                raise ValueError(f"RRDAG_THREADS must be an integer, got '{raw}'") from e
        else:
            threads = os.cpu_count() or 1
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return threads


# ---------------------------------------------------------------------------
# Config
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Reproducible description of one experiment.

    Fields beyond kind/m/n/trials apply to the kinds that read them:
    ``tracked`` (k vertices; degree, multi_label, tau), ``thresholds`` or
    ``threshold_ratio`` (degree threshold d = ⌊ratio·ln n⌋; depth_label,
    multi_label), ``mode`` (faithful or harvest conditioning),
    ``max_threshold`` (largest d in degree tail tables), ``window`` (offsets
    i of X_i around the base degree), ``t_grid`` (τ_k tail steps).
    """

    kind: str
    m: int
    n: int
    trials: int
    master_seed: int = 0
    construction: str | None = None
    tracked: int = 1
    thresholds: tuple[int, ...] = ()
    threshold_ratio: float | None = None
    mode: str = "faithful"
    max_threshold: int = 15
    window: tuple[int, int] = (-10, 5)
    clt_offset: int = -8
    max_degree_offsets: tuple[int, ...] = (-2, -1, 0, 1, 2, 3)
    max_degree_tolerance: float = 0.04
    t_grid: tuple[int, ...] = (50, 100, 200, 500)
    min_acceptance: float = 0.0
    alpha: float = stats.DEFAULT_ALPHA
    sigmas: float = stats.DEFAULT_SIGMAS
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self._validate()

    @property
    def resolved_construction(self) -> str:
        return self.construction or _DEFAULT_CONSTRUCTION[self.kind]

    def degree_thresholds(self) -> tuple[int, ...]:
        """Conditioning thresholds, one per conditioned vertex."""
        count = 1 if self.kind == "depth_label" else self.tracked
        if self.thresholds:
            return tuple(self.thresholds)
        if self.threshold_ratio is not None:
            return (math.floor(self.threshold_ratio * math.log(self.n)),) * count
        return (0,) * count

    def _validate(self) -> None:
        def fail(name: str, message: str) -> None:
            raise ConfigError(f"$.{name}", message)

        if self.schema_version != SCHEMA_VERSION:
            fail("schema_version", f"unsupported version {self.schema_version}, expected {SCHEMA_VERSION}")
        if self.kind not in KINDS:
            fail("kind", f"unknown kind '{self.kind}', expected one of {', '.join(KINDS)}")
        for name in ("m", "n", "trials", "tracked"):
            if getattr(self, name) < 1:
                fail(name, f"must be >= 1, got {getattr(self, name)}")
        if not 0 <= self.master_seed < 2**64:
            fail("master_seed", "must fit in 64 unsigned bits")
        if self.construction is not None and self.construction not in CONSTRUCTIONS:
            fail("construction", f"unknown construction '{self.construction}'")
        if self.kind == "tau" and self.construction == "recursive":
            fail("construction", "tau experiments need the coalescent construction")
        if self.tracked > self.n:
            fail("tracked", f"cannot track {self.tracked} vertices of n={self.n}")
        if self.kind == "tau" and self.tracked < 2:
            fail("tracked", "tau experiments need at least 2 tracked vertices")
        if self.mode not in MODES:
            fail("mode", f"unknown mode '{self.mode}', expected faithful or harvest")
        for j, d in enumerate(self.thresholds):
            if d < 0:
                fail(f"thresholds[{j}]", f"must be >= 0, got {d}")
        if self.threshold_ratio is not None and not 0 <= self.threshold_ratio < self.m + 1:
            fail("threshold_ratio", f"must lie in [0, {self.m + 1}), got {self.threshold_ratio}")
        if self.kind == "depth_label" and len(self.thresholds) > 1:
            fail("thresholds", "depth_label takes a single threshold")
        if self.kind == "multi_label" and self.thresholds and len(self.thresholds) != self.tracked:
            fail("thresholds", f"expected {self.tracked} thresholds, got {len(self.thresholds)}")
        if self.max_threshold < 0:
            fail("max_threshold", f"must be >= 0, got {self.max_threshold}")
        if len(self.window) != 2 or self.window[0] > self.window[1]:
            fail("window", f"must be [lo, hi] with lo <= hi, got {list(self.window)}")
        for j, t in enumerate(self.t_grid):
            if t <= self.m + 1:
                fail(f"t_grid[{j}]", f"must exceed m+1={self.m + 1}, got {t}")
        if not 0.0 <= self.min_acceptance <= 1.0:
            fail("min_acceptance", f"must lie in [0, 1], got {self.min_acceptance}")
        if not 0.0 < self.alpha < 1.0:
            fail("alpha", f"must lie in (0, 1), got {self.alpha}")
        if self.sigmas <= 0:
            fail("sigmas", f"must be positive, got {self.sigmas}")

    # ------------------------------------------------------------------
    # JSON
    # ------------------------------------------------------------------

    def to_dict(self) -> dict:
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out

    @classmethod
    def from_dict(cls, obj: Any) -> "ExperimentConfig":
        """Parse a JSON object, rejecting unknown fields.

        Raises:
            ConfigError: With the JSON path of the first offending field.
        """
        if not isinstance(obj, dict):
            raise ConfigError("$", "config must be a JSON object")
        known = {f.name: f for f in fields(cls)}
        for key in obj:
            if key not in known:
                raise ConfigError(f"$.{key}", "unknown field")
        for key in ("kind", "m", "n", "trials"):
            if key not in obj:
                raise ConfigError(f"$.{key}", "required field missing")

        kwargs = {}
        for key, value in obj.items():
            kwargs[key] = _coerce(key, value)
        return cls(**kwargs)


_INT_FIELDS = {"m", "n", "trials", "master_seed", "tracked", "max_threshold", "clt_offset", "schema_version"}
_FLOAT_FIELDS = {"threshold_ratio", "min_acceptance", "alpha", "sigmas", "max_degree_tolerance"}
_STR_FIELDS = {"kind", "construction", "mode"}
_INT_LIST_FIELDS = {"thresholds", "window", "t_grid", "max_degree_offsets"}


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _coerce(key: str, value: Any) -> Any:
    path = f"$.{key}"
    if key in _INT_FIELDS:
        if not _is_int(value):
            raise ConfigError(path, f"expected an integer, got {json.dumps(value)}")
        return value
    if key in _FLOAT_FIELDS:
        if value is None and key == "threshold_ratio":
            return None
        if not (_is_int(value) or isinstance(value, float)):
            raise ConfigError(path, f"expected a number, got {json.dumps(value)}")
        return float(value)
    if key in _STR_FIELDS:
        if value is None and key == "construction":
            return None
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {json.dumps(value)}")
        return value
    if key in _INT_LIST_FIELDS:
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list of integers, got {json.dumps(value)}")
        for j, item in enumerate(value):
            if not _is_int(item):
                raise ConfigError(f"{path}[{j}]", f"expected an integer, got {json.dumps(item)}")
        return tuple(value)
    raise ConfigError(path, "unknown field")


def load_config(text: str) -> ExperimentConfig:
    """Parse a JSON config document."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("$", f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    return ExperimentConfig.from_dict(obj)


# ---------------------------------------------------------------------------
# Aggregate
# ---------------------------------------------------------------------------

@dataclass
class Aggregate:
    """Per-trial records and exact integer sums of one experiment.

    Row t of every per-trial array belongs to trial t. ``samples`` holds raw
    conditional samples in trial order: (ungreedy depth, label) rows for
    depth_label, label vectors for multi_label.
    """

    config: ExperimentConfig
    base: int
    eps_n: float
    degree_totals: np.ndarray
    tracked_degrees: np.ndarray
    counts: np.ndarray
    tail_counts: np.ndarray
    max_degree: np.ndarray
    samples: np.ndarray
    attempts: int
    accepted: int
    tau: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def offsets(self) -> list[int]:
        lo, hi = self.config.window
        return list(range(lo, hi + 1))

    def offset_column(self, i: int) -> int:
        lo, hi = self.config.window
        if not lo <= i <= hi:
            raise ValueError(f"offset {i} outside the recorded window [{lo}, {hi}]")
        return i - lo

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "base": self.base,
            "eps_n": self.eps_n,
            "degree_totals": self.degree_totals.tolist(),
            "tracked_degrees": self.tracked_degrees.tolist(),
            "counts": self.counts.tolist(),
            "tail_counts": self.tail_counts.tolist(),
            "max_degree": self.max_degree.tolist(),
            "samples": self.samples.tolist(),
            "attempts": self.attempts,
            "accepted": self.accepted,
            "tau": self.tau.tolist(),
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------

def _graph(cfg: ExperimentConfig, rng: np.random.Generator) -> LabeledDag:
    if cfg.resolved_construction == "coalescent":
        return to_labeled_dag(sample_trace(cfg.n, cfg.m, rng), ordering="pool")
    return generate_recursive(cfg.n, cfg.m, rng)


def _in_degrees(cfg: ExperimentConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.resolved_construction == "coalescent":
        return in_degrees_by_label(replay_trace(sample_trace(cfg.n, cfg.m, rng), ordering="pool"))
    return generate_recursive(cfg.n, cfg.m, rng).in_degrees


def _window_counts(degrees: np.ndarray, base: int, offsets: Sequence[int]) -> tuple[list[int], list[int]]:
    hist = np.bincount(degrees)
    tail = np.concatenate([np.cumsum(hist[::-1])[::-1], [0]])
    exact, at_least = [], []
    for i in offsets:
        thr = base + i
        if thr < 0:
            exact.append(0)
            at_least.append(int(degrees.size))
        elif thr >= hist.size:
            exact.append(0)
            at_least.append(0)
        else:
            exact.append(int(hist[thr]))
            at_least.append(int(tail[thr]))
    return exact, at_least


@dataclass
class _Chunk:
    degree_totals: np.ndarray
    tracked: list = field(default_factory=list)
    counts: list = field(default_factory=list)
    tails: list = field(default_factory=list)
    max_degree: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    tau: list = field(default_factory=list)
    attempts: int = 0
    accepted: int = 0


def _run_chunk(cfg: ExperimentConfig, start: int, stop: int) -> _Chunk:
    """Run trials [start, stop)."""
    n, m = cfg.n, cfg.m
    base = theory.floor_log(n, m)
    offsets = list(range(cfg.window[0], cfg.window[1] + 1))
    thresholds = np.asarray(cfg.degree_thresholds(), dtype=np.int64)
    chunk = _Chunk(degree_totals=np.zeros(n, dtype=np.int64))

    for t in range(start, stop):
        rng = make_rng(cfg.master_seed, t)

        if cfg.kind == "tau":
            chunk.tau.append(tau_k(sample_trace(n, m, rng), cfg.tracked, ordering="pool"))
            continue

        if cfg.kind == "degree":
            degrees = _in_degrees(cfg, rng)
            chunk.degree_totals += np.bincount(degrees, minlength=n)[:n]
            chunk.tracked.append(degrees[rng.choice(n, size=cfg.tracked, replace=False)].tolist())
            exact, at_least = _window_counts(degrees, base, offsets)
            chunk.counts.append(exact)
            chunk.tails.append(at_least)
            chunk.max_degree.append(int(degrees.max()))
            continue

        g = _graph(cfg, rng)
        degrees = g.in_degrees
        if cfg.kind == "depth_label":
            d = int(thresholds[0])
            if cfg.mode == "faithful":
                v = int(rng.integers(1, n + 1))
                chunk.attempts += 1
                if degrees[v - 1] >= d:
                    chunk.accepted += 1
                    chunk.samples.append([ungreedy_depth_walk(g, v), v])
            else:
                qualifying = np.flatnonzero(degrees >= d) + 1
                chunk.attempts += n
                chunk.accepted += int(qualifying.size)
                if qualifying.size:
                    depths = ungreedy_depths(g)
                    chunk.samples.extend(np.column_stack([depths[qualifying - 1], qualifying]).tolist())
        else:
            k = cfg.tracked
            if cfg.mode == "faithful":
                vs = rng.choice(n, size=k, replace=False) + 1
                chunk.attempts += 1
                if np.all(degrees[vs - 1] >= thresholds):
                    chunk.accepted += 1
                    chunk.samples.append(vs.tolist())
            else:
                qualifying = np.flatnonzero(degrees >= thresholds.max()) + 1
                groups = qualifying.size // k
                chunk.attempts += n // k
                chunk.accepted += groups
                if groups:
                    picked = rng.permutation(qualifying)[: groups * k].reshape(groups, k)
                    chunk.samples.extend(picked.tolist())
    return chunk


def _chunks(trials: int, workers: int) -> list[tuple[int, int]]:
    pieces = min(trials, max(1, workers * 4))
    bounds = np.linspace(0, trials, pieces + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> Aggregate:
    """Run every trial of cfg and aggregate in trial order.

    Args:
        cfg: Validated experiment config.
        workers: Process count (see resolve_workers); 1 runs in-process.
            The result is identical for every value.

    Raises:
        ExperimentError: If the acceptance rate of a conditional experiment
            falls below cfg.min_acceptance.
    """
    workers = resolve_workers(workers)
    spans = _chunks(cfg.trials, workers)
    logger.info("Running %s experiment: m=%d n=%d trials=%d construction=%s workers=%d",
                cfg.kind, cfg.m, cfg.n, cfg.trials, cfg.resolved_construction, workers)
    started = time.monotonic()

    if workers == 1 or len(spans) == 1:
        parts = [_run_chunk(cfg, a, b) for a, b in spans]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [cfg] * len(spans), [a for a, _ in spans], [b for _, b in spans]))

    agg = _combine(cfg, parts)
    logger.info("Finished %d trials in %.1fs", cfg.trials, time.monotonic() - started)

    if cfg.kind in ("depth_label", "multi_label"):
        rate = agg.accepted / agg.attempts if agg.attempts else 0.0
        logger.info("Accepted %d of %d (rate %.3g)", agg.accepted, agg.attempts, rate)
        if rate < cfg.min_acceptance:
            raise ExperimentError(
                f"acceptance rate {rate:.3g} is below the floor {cfg.min_acceptance}; "
                f"increase trials or switch to harvest mode"
            )
    return agg


def _combine(cfg: ExperimentConfig, parts: list[_Chunk]) -> Aggregate:
    width = cfg.window[1] - cfg.window[0] + 1
    sample_width = 2 if cfg.kind == "depth_label" else cfg.tracked

    def stack(name: str, cols: int, dtype=np.int64) -> np.ndarray:
        rows = [row for part in parts for row in getattr(part, name)]
        return np.asarray(rows, dtype=dtype).reshape(-1, cols)

    metadata = {
        "construction": cfg.resolved_construction,
        "mode": cfg.mode,
        "tolerances": TOLERANCE_NOTE,
        "version": _version(),
    }
    if cfg.resolved_construction == "coalescent":
        metadata["ordering"] = "pool"
    if cfg.mode == "harvest" and cfg.kind in ("depth_label", "multi_label"):
        metadata["harvest"] = HARVEST_NOTE
    if cfg.kind in ("depth_label", "multi_label"):
        metadata["finite_n"] = FINITE_N_NOTE

    totals = np.zeros(cfg.n, dtype=np.int64)
    for part in parts:
        totals += part.degree_totals
    last = int(np.flatnonzero(totals)[-1]) + 1 if totals.any() else 0

    return Aggregate(
        config=cfg,
        base=theory.floor_log(cfg.n, cfg.m),
        eps_n=theory.epsilon_n(cfg.n, cfg.m),
        degree_totals=totals[:last],
        tracked_degrees=stack("tracked", cfg.tracked),
        counts=stack("counts", width),
        tail_counts=stack("tails", width),
        max_degree=np.asarray([x for p in parts for x in p.max_degree], dtype=np.int64),
        samples=stack("samples", sample_width),
        attempts=sum(p.attempts for p in parts),
        accepted=sum(p.accepted for p in parts),
        tau=np.asarray([x for p in parts for x in p.tau], dtype=np.int64),
        metadata=metadata,
    )


def _version() -> str:
    from . import __version__

    return __version__


# ---------------------------------------------------------------------------
# Estimates
# ---------------------------------------------------------------------------

def _require(agg: Aggregate, kind: str) -> None:
    if agg.config.kind != kind:
        raise ValueError(f"needs a '{kind}' experiment, got '{agg.config.kind}'")


def joint_tail(agg: Aggregate, dvec: Sequence[int]) -> tuple[int, int]:
    """(trials with d_n(V_j) >= dvec[j] for all j, trials)."""
    _require(agg, "degree")
    dvec = np.asarray(dvec, dtype=np.int64)
    if dvec.size != agg.tracked_degrees.shape[1]:
        raise ValueError(f"expected {agg.tracked_degrees.shape[1]} thresholds, got {dvec.size}")
    hits = int(np.all(agg.tracked_degrees >= dvec, axis=1).sum())
    return hits, int(agg.tracked_degrees.shape[0])


def degree_tail_estimate(agg: Aggregate, sigmas: float | None = None) -> pd.DataFrame:
    """Empirical P(d_n(V_j) >= d, j in [k]) for d = 0..max_threshold.

    Columns: d, successes, trials, empirical, reference, ci_lo, ci_hi, where
    reference is the geometric limit and the interval is the Wilson band.
    """
    cfg = agg.config
    z = sigmas if sigmas is not None else cfg.sigmas
    rows = []
    for d in range(cfg.max_threshold + 1):
        dvec = (d,) * cfg.tracked
        hits, trials = joint_tail(agg, dvec)
        lo, hi = stats.wilson_interval(hits, trials, z=z)
        rows.append({
            "d": d,
            "successes": hits,
            "trials": trials,
            "empirical": hits / trials,
            "reference": theory.geometric_tail(cfg.m, dvec),
            "ci_lo": lo,
            "ci_hi": hi,
        })
    return pd.DataFrame(rows)


def count_profile(agg: Aggregate) -> pd.DataFrame:
    """One row per trial: X_i and X_ge_i for every window offset i, and the maximum degree."""
    _require(agg, "degree")
    table = {"trial": np.arange(agg.counts.shape[0])}
    for col, i in enumerate(agg.offsets):
        table[f"X_{i}"] = agg.counts[:, col]
    for col, i in enumerate(agg.offsets):
        table[f"X_ge_{i}"] = agg.tail_counts[:, col]
    table["max_degree"] = agg.max_degree
    return pd.DataFrame(table)


def factorial_moment_estimate(agg: Aggregate, orders: dict[int, int],
                              tail: tuple[int, int] | None = None) -> tuple[float, float]:
    """Sample mean and standard error of (X_{>=i'})_{a'} prod_j (X_j)_{a_j}.

    Raises:
        ValueError: If the orders sum past 4 or an offset lies outside the window.
    """
    _require(agg, "degree")
    total_order = sum(orders.values()) + (tail[1] if tail else 0)
    if total_order > 4:
        raise ValueError(f"factorial orders sum to {total_order}, at most 4 supported")
    product = np.ones(agg.counts.shape[0])
    for i, a in orders.items():
        product *= perm(agg.counts[:, agg.offset_column(i)], a)
    if tail is not None:
        i_prime, a = tail
        product *= perm(agg.tail_counts[:, agg.offset_column(i_prime)], a)
    mean = float(product.mean())
    stderr = float(product.std(ddof=1) / math.sqrt(product.size)) if product.size > 1 else 0.0
    return mean, stderr


def max_degree_table(agg: Aggregate, offsets: Sequence[int] | None = None) -> pd.DataFrame:
    """Empirical P(Δ_n >= base + i) against 1 - exp(-q^{i - eps_n}).

    Columns: i, threshold, successes, trials, empirical, reference.
    """
    _require(agg, "degree")
    cfg = agg.config
    offsets = offsets if offsets is not None else cfg.max_degree_offsets
    trials = int(agg.max_degree.size)
    rows = []
    for i in offsets:
        threshold = agg.base + i
        hits = int((agg.max_degree >= threshold).sum())
        rows.append({
            "i": i,
            "threshold": threshold,
            "successes": hits,
            "trials": trials,
            "empirical": hits / trials,
            "reference": theory.max_degree_tail_limit(cfg.m, i - agg.eps_n),
        })
    return pd.DataFrame(rows)


def count_clt_sample(agg: Aggregate, i: int | None = None) -> np.ndarray:
    """(X_i - mean) / sd per trial, with the limit mean and sd at offset i."""
    _require(agg, "degree")
    i = agg.config.clt_offset if i is None else i
    mean, sd = theory.xin_normal_params(agg.config.m, i, agg.eps_n)
    return (agg.counts[:, agg.offset_column(i)] - mean) / sd


def _as_aggregate(source: "ExperimentConfig | Aggregate", kind: str, workers: int | None) -> Aggregate:
    agg = run_experiment(source, workers=workers) if isinstance(source, ExperimentConfig) else source
    _require(agg, kind)
    return agg


def conditional_depth_label_sample(source: "ExperimentConfig | Aggregate",
                                   workers: int | None = None) -> pd.DataFrame:
    """Standardized (u_n, log ℓ_n) pairs of vertices with d_n >= d.

    Columns: u_std, log_label_std.

    Raises:
        ExperimentError: If d = 0 (the label scale vanishes) or the depth
            variance is not positive.
    """
    agg = _as_aggregate(source, "depth_label", workers)
    cfg = agg.config
    d = cfg.degree_thresholds()[0]
    u = agg.samples[:, 0].astype(float)
    labels = agg.samples[:, 1].astype(float)
    try:
        return pd.DataFrame({
            "u_std": theory.standardize_depth(cfg.m, cfg.n, d, u),
            "log_label_std": theory.standardize_label(cfg.m, cfg.n, d, labels),
        })
    except ValueError as e:
        raise ExperimentError(f"cannot standardize at d={d}: {e}") from e


def multi_label_sample(source: "ExperimentConfig | Aggregate", workers: int | None = None) -> pd.DataFrame:
    """Standardized log labels of k vertices whose degrees all exceed their thresholds.

    Columns: label_std_1 .. label_std_k.
    """
    agg = _as_aggregate(source, "multi_label", workers)
    cfg = agg.config
    columns = {}
    for j, d in enumerate(cfg.degree_thresholds()):
        try:
            columns[f"label_std_{j + 1}"] = theory.standardize_label(
                cfg.m, cfg.n, d, agg.samples[:, j].astype(float)
            )
        except ValueError as e:
            raise ExperimentError(f"cannot standardize vertex {j + 1} at d={d}: {e}") from e
    return pd.DataFrame(columns)


def tau_k_sample(source: "ExperimentConfig | Aggregate", workers: int | None = None) -> np.ndarray:
    """Histogram of τ_k: entry t counts trials with τ_k = t."""
    agg = _as_aggregate(source, "tau", workers)
    return np.bincount(agg.tau, minlength=agg.config.n + 1)


def tau_tail_table(agg: Aggregate, t_grid: Sequence[int] | None = None,
                   sigmas: float = 3.0) -> pd.DataFrame:
    """Empirical P(τ_k >= t) against the tail bound.

    Columns: t, successes, trials, empirical, bound, ci_lo, ci_hi.
    """
    _require(agg, "tau")
    cfg = agg.config
    grid = t_grid if t_grid is not None else cfg.t_grid
    trials = int(agg.tau.size)
    rows = []
    for t in grid:
        hits = int((agg.tau >= t).sum())
        lo, hi = stats.wilson_interval(hits, trials, z=sigmas)
        rows.append({
            "t": t,
            "successes": hits,
            "trials": trials,
            "empirical": hits / trials,
            "bound": theory.tau_tail_bound(cfg.m, cfg.tracked, t),
            "ci_lo": lo,
            "ci_hi": hi,
        })
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

def _band_report(name: str, value: float, reference: float, tolerance: float,
                 sample_size: int, **params) -> stats.GofReport:
    diff = value - reference
    return stats.GofReport(
        test=name,
        statistic=diff,
        p_value=float("nan"),
        passed=abs(diff) <= tolerance,
        sample_size=sample_size,
        params={"estimate": value, "reference": reference, "tolerance": tolerance, **params},
    )


def _histogram(values: np.ndarray) -> np.ndarray:
    return np.bincount(np.asarray(values, dtype=np.int64))


def evaluate(agg: Aggregate) -> list[stats.GofReport]:
    """Run every check that applies to the experiment kind.

    Checks without enough data for their test are skipped and logged.
    """
    cfg = agg.config
    reports: list[stats.GofReport] = []

    def attempt(label: str, fn) -> None:
        try:
            reports.append(fn())
        except ValueError as e:
            logger.info("Skipping %s: %s", label, e)

    if cfg.kind == "degree":
        tails = degree_tail_estimate(agg)
        for row in tails.itertuples():
            attempt(f"tail d={row.d}", lambda row=row: _named(
                stats.proportion_test(row.successes, row.trials, row.reference, sigmas=cfg.sigmas),
                d=row.d,
            ))
        for i in (0, 1):
            if cfg.window[0] <= i <= cfg.window[1]:
                mean = theory.poisson_param(cfg.m, i, agg.eps_n)
                attempt(f"X_{i} chi-square", lambda i=i, mean=mean: _named(
                    stats.chisq_vs_poisson(_histogram(agg.counts[:, agg.offset_column(i)]), mean, alpha=cfg.alpha),
                    offset=i,
                ))
        if cfg.window[0] <= 1 <= cfg.window[1]:
            tail_mean = theory.count_vector_params(cfg.m, agg.eps_n, 1, 1)[-1]
            x = agg.tail_counts[:, agg.offset_column(1)].astype(float)
            if x.size > 1:
                reports.append(stats.moment_check(
                    float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), tail_mean,
                    sigmas=cfg.sigmas, sample_size=int(x.size), name="mean_X_ge_1",
                ))
        if cfg.window[0] <= 0 <= cfg.window[1] and agg.counts.shape[0] > 1:
            mean, stderr = factorial_moment_estimate(agg, {0: 2})
            reports.append(stats.moment_check(
                mean, stderr, theory.factorial_moment_limit(cfg.m, agg.eps_n, {0: 2}),
                sigmas=cfg.sigmas, sample_size=int(agg.counts.shape[0]), name="factorial_moment_X_0_2",
            ))
        for row in max_degree_table(agg).itertuples():
            reports.append(_band_report(
                "max_degree_band", row.empirical, row.reference, cfg.max_degree_tolerance,
                row.trials, i=row.i, threshold=row.threshold,
            ))
        if cfg.window[0] <= cfg.clt_offset <= cfg.window[1]:
            attempt("count CLT", lambda: _named(
                stats.ks_normal(count_clt_sample(agg), alpha=cfg.alpha), offset=cfg.clt_offset
            ))

    elif cfg.kind == "depth_label":
        try:
            pairs = conditional_depth_label_sample(agg)
        except ExperimentError as e:
            logger.info("Skipping depth/label checks: %s", e)
            return reports
        attempt("depth KS", lambda: _named(stats.ks_normal(pairs["u_std"], alpha=cfg.alpha), margin="depth"))
        attempt("label KS", lambda: _named(stats.ks_normal(pairs["log_label_std"], alpha=cfg.alpha), margin="label"))
        d = cfg.degree_thresholds()[0]
        a = d / math.log(cfg.n)
        if a < cfg.m + 1:
            rho = theory.correlation_limit(cfg.m, a)
            attempt("correlation", lambda: _correlation_report(pairs["u_std"], pairs["log_label_std"], rho))

    elif cfg.kind == "multi_label":
        try:
            labels = multi_label_sample(agg)
        except ExperimentError as e:
            logger.info("Skipping label checks: %s", e)
            return reports
        cols = list(labels.columns)
        for col in cols:
            attempt(f"{col} KS", lambda col=col: _named(stats.ks_normal(labels[col], alpha=cfg.alpha), margin=col))
        for a_idx in range(len(cols)):
            for b_idx in range(a_idx + 1, len(cols)):
                x, y = labels[cols[a_idx]], labels[cols[b_idx]]
                if len(x) >= 2 and x.std() > 0 and y.std() > 0:
                    r = float(np.corrcoef(x, y)[0, 1])
                    reports.append(_band_report("label_cross_correlation", r, 0.0, 0.1, len(x),
                                                pair=[cols[a_idx], cols[b_idx]]))
        if len(labels):
            hits = int((labels > 0).all(axis=1).sum())
            reference = theory.multi_label_limit([0.0] * len(cols))
            attempt("quadrant", lambda: _named(
                stats.proportion_test(hits, len(labels), reference, sigmas=cfg.sigmas), quadrant="upper"
            ))

    elif cfg.kind == "tau":
        for row in tau_tail_table(agg).itertuples():
            reports.append(_named(stats.upper_bound_check(row.successes, row.trials, row.bound), t=row.t))

    return reports


def _named(report: stats.GofReport, **extra) -> stats.GofReport:
    return stats.GofReport(
        test=report.test,
        statistic=report.statistic,
        p_value=report.p_value,
        passed=report.passed,
        sample_size=report.sample_size,
        params={**report.params, **extra},
        alpha=report.alpha,
        sigmas=report.sigmas,
    )


def _correlation_report(x, y, rho: float, max_half_width: float = CORRELATION_HALF_WIDTH) -> stats.GofReport:
    """Passes when the CI covers rho and is no wider than 2·max_half_width."""
    r, (lo, hi) = stats.correlation_ci(x, y)
    half_width = (hi - lo) / 2
    return stats.GofReport(
        test="correlation_ci",
        statistic=r,
        p_value=float("nan"),
        passed=lo <= rho <= hi and half_width <= max_half_width,
        sample_size=len(x),
        params={"reference": rho, "ci_lo": lo, "ci_hi": hi, "half_width": half_width},
    )
