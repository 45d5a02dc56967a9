#!/usr/bin/env python3
"""Build the exact-distribution fixtures shipped in rrdag.fixtures.

Developer-only script — not part of the installed package.

Each fixture lists every increasing DAG of the (m,n)-coalescent with the
number of traces producing it, for tests that compare against exact laws.

Usage:
    python scripts/build_oracle_fixtures.py            # the shipped (2,5) fixture
    python scripts/build_oracle_fixtures.py 2,5 1,6
    python scripts/build_oracle_fixtures.py 3,6 --workers 4
"""

import argparse
import sys
from pathlib import Path

from rrdag.coalescent import count_traces
from rrdag.oracle import exhaust_coalescent

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "src" / "rrdag" / "fixtures"

DEFAULT_PAIRS = ["2,5"]


def parse_pair(text: str) -> tuple[int, int]:
    try:
        m, n = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'm,n', got '{text}'")
    if m < 1 or n < 1:
        raise argparse.ArgumentTypeError(f"m and n must be >= 1, got '{text}'")
    return m, n


def build_fixture(m: int, n: int, workers: int, out_dir: Path) -> bool:
    """Exhaust one (m,n) pair and write oracle_<m>_<n>.json. Returns uniformity."""
    print(f"\n=== (m,n) = ({m},{n}): {count_traces(n, m):,} traces ===")
    dist = exhaust_coalescent(n, m, workers=workers)
    path = dist.write_fixture(out_dir / f"oracle_{m}_{n}.json")
    uniform = dist.is_uniform()
    print(f"  {dist.distinct} graphs, multiplicities {sorted(dist.multiplicities())}")
    print(f"  Uniform: {'yes' if uniform else 'NO'}")
    print(f"  Wrote {path}")
    return uniform


def main():
    parser = argparse.ArgumentParser(description="Build exact oracle fixtures")
    parser.add_argument("pairs", nargs="*", type=parse_pair,
                        default=[parse_pair(p) for p in DEFAULT_PAIRS],
                        help="(m,n) pairs as 'm,n' (default: 2,5)")
    parser.add_argument("--workers", type=int, default=1, help="Worker processes (default: 1)")
    parser.add_argument("--out-dir", type=Path, default=FIXTURE_DIR,
                        help=f"Output directory (default: {FIXTURE_DIR})")
    args = parser.parse_args()

    failed = [(m, n) for m, n in args.pairs if not build_fixture(m, n, args.workers, args.out_dir)]
    if failed:
        print(f"\nNon-uniform: {failed}")
        sys.exit(1)
    print("\nDone.")


if __name__ == "__main__":
    main()
