#!/usr/bin/env python3
"""Regenerate the bundled fixture set (deterministic, byte-for-byte)."""

import argparse
import time
from datetime import date
from pathlib import Path

from shutdownscope.fixtures import write_bundle


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", nargs="?", default=str(Path(__file__).resolve().parents[1] / "fixtures"))
    ap.add_argument("--rib-date", action="append", type=date.fromisoformat,
                    help="only write bviews for these dates (repeatable)")
    args = ap.parse_args()
    t0 = time.perf_counter()
    root = write_bundle(args.out, rib_dates=args.rib_date)
    files = sorted(p for p in root.rglob("*") if p.is_file())
    size = sum(p.stat().st_size for p in files)
    print(f"wrote {len(files)} files ({size / 1e6:.1f} MB) to {root} in {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
