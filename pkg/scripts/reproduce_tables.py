#!/usr/bin/env python3
"""Run the full report over the fixture bundle and print the headline numbers.

    python scripts/reproduce_tables.py [--bundle fixtures] [--out out/report]
"""

import argparse
import json
import sys
from pathlib import Path

from shutdownscope.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bundle", default=str(ROOT / "fixtures"))
    ap.add_argument("--out", default=str(ROOT / "out" / "report"))
    args = ap.parse_args()
    code = cli_main(["report", "--bundle", args.bundle, "--out", args.out])
    if code:
        sys.exit(code)
    print((Path(args.out) / "report.md").read_text())
    summary = json.loads((Path(args.out) / "report.json").read_text())
    cov = summary["coverage"]
    print("2022 within-event variation (pp):", cov["22"]["within_event_variation_pp"])
    print("withdrawal pairs:", {k: v["withdrawal_pairs"] for k, v in cov.items() if v["withdrawal_pairs"]})


if __name__ == "__main__":
    main()
