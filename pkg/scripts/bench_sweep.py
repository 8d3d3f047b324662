#!/usr/bin/env python
"""Write-throughput sweep over a scratch volume.

Runs the full file-size x record-size grid and prints the CSV; pass
--fake-clock-step-ms for a deterministic timing model (useful when
comparing accounting rather than hardware).
"""

from __future__ import annotations

import argparse
import sys
import tempfile
from pathlib import Path

from fleetchain.bench import (
    BenchGrid,
    DEFAULT_FILE_SIZES_KB,
    DEFAULT_RECORD_SIZES_KB,
    DEFAULT_REPETITIONS,
    bench_csv,
    run_bench,
)
from fleetchain.clock import MONOTONIC, FakeClock
from fleetchain.store import create_volume, profile_text


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--bricks", type=int, default=3)
    ap.add_argument("--replica", type=int, default=2)
    ap.add_argument("--reps", type=int, default=DEFAULT_REPETITIONS)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--fake-clock-step-ms", type=float, default=None)
    ap.add_argument("--profile", action="store_true",
                    help="also print the per-brick latency table")
    args = ap.parse_args()

    clock = MONOTONIC
    if args.fake_clock_step_ms is not None:
        clock = FakeClock(step=args.fake_clock_step_ms / 1000.0)

    grid = BenchGrid(
        file_sizes_kb=DEFAULT_FILE_SIZES_KB,
        record_sizes_kb=DEFAULT_RECORD_SIZES_KB,
        repetitions=args.reps,
    )
    with tempfile.TemporaryDirectory(prefix="fleetchain-bench-") as tmp:
        volume = create_volume(
            Path(tmp), n_bricks=args.bricks, replica_count=args.replica, clock=clock
        )
        result = run_bench(volume, grid, seed=args.seed, clock=clock, threads=args.threads)
        sys.stdout.write(bench_csv(result))
        if args.profile:
            sys.stdout.write("\n")
            sys.stdout.write(profile_text(volume.profile()))
    if result.aborted:
        print("sweep aborted early: store unavailable", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
