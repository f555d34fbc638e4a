#!/usr/bin/env python3
"""Measure scan throughput on a corpus directory.

Usage:
    python scripts/bench_scan.py CORPUS_DIR [WORKERS]

Pair with make_synthetic_corpus.py to check the single-worker target of
10,000 small configs in under a minute.
"""

import sys
import time

from tdmscan.analyzer import AnalysisOptions, scan_entries
from tdmscan.cli import _entries_from_directory
from tdmscan.registry import shipped_registry


def main() -> int:
    if len(sys.argv) < 2:
        print(__doc__)
        return 2
    corpus_dir = sys.argv[1]
    workers = int(sys.argv[2]) if len(sys.argv) > 2 else 1

    registry = shipped_registry()
    entries = _entries_from_directory(corpus_dir)
    start = time.monotonic()
    result = scan_entries(entries, registry, AnalysisOptions(), workers=workers)
    elapsed = time.monotonic() - start

    totals = result.report.totals
    rate = totals["pipelines"] / elapsed if elapsed else float("inf")
    print(f"pipelines: {totals['pipelines']}")
    print(f"with tools: {totals['pipelines_with_tools']}")
    print(f"workers: {workers}")
    print(f"elapsed: {elapsed:.2f} s ({rate:.0f} pipelines/s)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
