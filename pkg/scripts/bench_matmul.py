#!/usr/bin/env python3
"""Reproduce the matmul rearrangement tables: time every spine permutation
of the naive program and of the block-subdivided one, print them sorted.

Usage:
    python3 scripts/bench_matmul.py [--size 512] [--block 16] [--repeats 5]

Roughly two minutes at the default size; results land in bench_6.csv and
bench_12.csv next to the working directory.
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from hofforge.cli import main  # noqa: E402


def run(args):
    prog = pathlib.Path(__file__).resolve().parents[1] / "programs" / "matmul.sexp"
    common = [
        "bench", str(prog),
        "--size", str(args.size),
        "--block", str(args.block),
        "--repeats", str(args.repeats),
        "--no-sim",
    ]
    print(f"== {args.size}x{args.size} matmul, 6 spine permutations ==")
    rc = main(common + ["--csv", "bench_6.csv"])
    if rc:
        return rc
    print(f"\n== reduction subdivided by {args.block}: 12 permutations ==")
    return main(common + ["--subdiv", "rnz", "--csv", "bench_12.csv"])


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--block", type=int, default=16)
    ap.add_argument("--repeats", type=int, default=5)
    sys.exit(run(ap.parse_args()))
