"""
Command-line front end: ``rrdag generate|oracle|experiment|replay``.

Exit codes: 0 success, 1 runtime error or failed check, 2 usage, config or
input-format error.
"""

import argparse
import json
import logging
import sys
import time
from fractions import Fraction
from itertools import product
from pathlib import Path
from typing import IO, Sequence

import pandas as pd

from . import __version__
from .coalescent import TraceFormatError, generate_coalescent, load_fixture_trace, read_trace, to_labeled_dag
from .graph import GraphFormatError, MalformedGraphError, dump_jsonl, serialize, validate
from .montecarlo import (
    ConfigError,
    ExperimentError,
    count_profile,
    conditional_depth_label_sample,
    degree_tail_estimate,
    evaluate,
    load_config,
    max_degree_table,
    multi_label_sample,
    resolve_workers,
    run_experiment,
    tau_tail_table,
)
from .oracle import (
    CapExceededError,
    count_increasing_dags,
    exact_degree_law,
    exact_degree_pmf,
    exhaust_coalescent,
    verify_inclusion_exclusion,
)
from .recursive import generate_recursive
from .sampling import Seed

logger = logging.getLogger("rrdag")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

DEFAULT_OUT = "rrdag-run"

# Columns written per CSV; extra DataFrame columns stay in result.json.
CSV_COLUMNS = {
    "degree_tail.csv": ["d", "empirical", "reference", "ci_lo", "ci_hi"],
    "max_degree.csv": ["i", "threshold", "empirical", "reference"],
    "tau_tail.csv": ["t", "empirical", "bound", "ci_lo", "ci_hi"],
}


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rrdag",
        description="Random recursive DAGs: generation, exact oracle and Monte Carlo checks",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable verbose logging")
    parser.add_argument("--threads", type=_positive_int, default=None,
                        help="Worker processes (default: RRDAG_THREADS, else CPU count)")
    parser.add_argument("--version", action="version", version=f"rrdag {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="Sample graphs as JSONL")
    gen.add_argument("--n", type=_positive_int, required=True, help="Number of vertices")
    gen.add_argument("--m", type=_positive_int, required=True, help="Out-degree bound")
    gen.add_argument("--seed", type=_seed, default=0, help="Master seed (default: 0)")
    gen.add_argument("--construction", choices=["recursive", "coalescent"], default="recursive")
    gen.add_argument("--count", type=_positive_int, default=1, help="Graphs to sample (default: 1)")
    gen.add_argument("--out", type=Path, default=None, help="Output JSONL file (default: stdout)")

    orc = sub.add_parser("oracle", help="Exhaust the coalescent and check uniformity")
    orc.add_argument("--n", type=_positive_int, required=True)
    orc.add_argument("--m", type=_positive_int, required=True)
    orc.add_argument("--fixture", type=Path, default=None, help="Write the exact distribution as JSON")
    orc.add_argument("--k", type=_positive_int, default=2,
                     help="Tracked vertices for the inclusion-exclusion check (default: 2)")

    exp = sub.add_parser("experiment", help="Run a Monte Carlo experiment from a JSON config")
    exp.add_argument("config", type=Path, help="Experiment config file")
    exp.add_argument("--out", type=Path, default=Path(DEFAULT_OUT),
                     help=f"Output directory (default: ./{DEFAULT_OUT})")
    exp.add_argument("--dry-run", action="store_true", help="Validate and print the plan only")

    rep = sub.add_parser("replay", help="Replay a coalescent event file into its relabeled graph")
    src = rep.add_mutually_exclusive_group(required=True)
    src.add_argument("events", type=Path, nargs="?", help="Event file")
    src.add_argument("--builtin", action="store_true", help="Replay the shipped (2,5) example trace")
    rep.add_argument("--m", type=_positive_int, default=None, help="Override the inferred m")
    rep.add_argument("--ordering", choices=["lex", "pool"], default="lex")
    rep.add_argument("--out", type=Path, default=None, help="Output JSONL file (default: stdout)")

    return parser


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _open_out(path: Path | None) -> IO[str]:
    if path is None:
        return sys.stdout
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="\n")


def _write_manifest(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def cmd_generate(args: argparse.Namespace) -> int:
    started = time.monotonic()
    graphs = []
    for index in range(args.count):
        rng = Seed(args.seed, index).generator()
        if args.construction == "coalescent":
            g = generate_coalescent(args.n, args.m, rng)
        else:
            g = generate_recursive(args.n, args.m, rng)
        report = validate(g)
        if not report:
            raise MalformedGraphError(f"graph {index} failed validation: {report.violations[0]}")
        graphs.append(g)

    out = _open_out(args.out)
    try:
        written = dump_jsonl(graphs, out)
    finally:
        if out is not sys.stdout:
            out.close()
    logger.info("Wrote %d graphs", written)

    if args.out is not None:
        _write_manifest(args.out.with_name(args.out.name + ".manifest.json"), {
            "version": __version__,
            "command": "generate",
            "config": {"n": args.n, "m": args.m, "seed": args.seed,
                       "construction": args.construction, "count": args.count},
            "master_seed": args.seed,
            "wall_time": round(time.monotonic() - started, 3),
            "outputs": [str(args.out)],
        })
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    n, m = args.n, args.m
    dist = exhaust_coalescent(n, m, workers=resolve_workers(args.threads))
    expected = count_increasing_dags(n, m)
    mults = sorted(dist.multiplicities())
    noun = "graph" if dist.distinct == 1 else "graphs"
    each = f"{mults[0]} each" if dist.distinct > 1 and len(mults) == 1 else ", ".join(map(str, mults))
    uniform = dist.is_uniform()
    print(f"{dist.distinct} {noun} × {each}; uniform: {'yes' if uniform else 'no'}")
    print(f"expected {expected} graphs of multiplicity {dist.total // expected if expected else 0}")

    k = min(args.k, n)
    pmf = exact_degree_pmf(dist, k)
    tails = exact_degree_law(dist, k)
    worst = Fraction(0)
    for dvec in product(range(n), repeat=k):
        worst = max(worst, abs(verify_inclusion_exclusion(dist, k, dvec, pmf=pmf, tails=tails)))
    print(f"inclusion-exclusion residual (k={k}): {worst}")

    if args.fixture is not None:
        dist.write_fixture(args.fixture)
        print(f"wrote {args.fixture}")
    return EXIT_OK if uniform and worst == 0 else EXIT_FAILURE


def _write_csv(df: pd.DataFrame, path: Path, columns: Sequence[str] | None = None) -> None:
    if columns is not None:
        df = df[list(columns)]
    df.to_csv(path, index=False, lineterminator="\n")


def cmd_experiment(args: argparse.Namespace) -> int:
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError("$", f"cannot read {args.config}: {e.strerror}") from e
    cfg = load_config(text)
    workers = resolve_workers(args.threads)

    if args.dry_run:
        print(json.dumps({
            "config": cfg.to_dict(),
            "construction": cfg.resolved_construction,
            "thresholds": list(cfg.degree_thresholds()),
            "workers": workers,
            "out": str(args.out),
        }, sort_keys=True, indent=2))
        return EXIT_OK

    started = time.monotonic()
    agg = run_experiment(cfg, workers=workers)
    reports = evaluate(agg)

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name: str, df: pd.DataFrame) -> None:
        _write_csv(df, out / name, CSV_COLUMNS.get(name))
        written.append(str(out / name))

    if cfg.kind == "degree":
        emit("degree_tail.csv", degree_tail_estimate(agg))
        emit("max_degree.csv", max_degree_table(agg))
        emit("counts.csv", count_profile(agg))
    elif cfg.kind == "depth_label":
        emit("samples.csv", conditional_depth_label_sample(agg))
    elif cfg.kind == "multi_label":
        emit("samples.csv", multi_label_sample(agg))
    else:
        emit("tau_tail.csv", tau_tail_table(agg))

    result_path = out / "result.json"
    result = {"aggregate": agg.to_dict(), "reports": [r.to_dict() for r in reports]}
    result_path.write_text(json.dumps(result, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    written.insert(0, str(result_path))

    failed = [r for r in reports if not r.passed]
    _write_manifest(out / "manifest.json", {
        "version": __version__,
        "command": "experiment",
        "config": cfg.to_dict(),
        "master_seed": cfg.master_seed,
        "wall_time": round(time.monotonic() - started, 3),
        "reports": [r.to_dict() for r in reports],
        "outputs": written,
    })

    print(f"{len(reports) - len(failed)}/{len(reports)} checks passed; results in {out}")
    for r in failed:
        print(f"  FAILED {r.test}: statistic={r.statistic:.4g} params={r.params}")
    return EXIT_FAILURE if failed else EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    if args.builtin:
        trace = load_fixture_trace()
    else:
        try:
            with open(args.events, encoding="utf-8") as fp:
                trace = read_trace(fp, m=args.m)
        except OSError as e:
            raise TraceFormatError(f"cannot read {args.events}: {e.strerror}") from e
    g = to_labeled_dag(trace, ordering=args.ordering)
    out = _open_out(args.out)
    try:
        out.write(serialize(g) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "oracle": cmd_oracle,
    "experiment": cmd_experiment,
    "replay": cmd_replay,
}


def main(argv: Sequence[str] | None = None) -> int:
    """CLI entrypoint; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    if args.verbose:
        logging.basicConfig(level=logging.DEBUG, stream=sys.stderr)
    else:
        logging.basicConfig(level=logging.WARNING, stream=sys.stderr)

    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, GraphFormatError, TraceFormatError) as e:
        print(f"rrdag {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (CapExceededError, ExperimentError, MalformedGraphError, ValueError, OSError) as e:
        print(f"rrdag {args.command}: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
