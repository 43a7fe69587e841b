#!/usr/bin/env python3
"""Deterministic locality study: simulated L1 miss counts for every spine
permutation of the naive matmul, no wall clock involved.

Usage:
    python3 scripts/locality_study.py [--size 512] [--cache-kib 32]

Expect the row-walking permutation (mapA rnz mapB) to miss roughly once per
cache line and the column-walking ones to miss on nearly every reduction
step.  A few minutes at size 512.
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from hofforge import jit, lower, programs  # noqa: E402
from hofforge.cachesim import CacheConfig  # noqa: E402
from hofforge.variants import canonicalize, enumerate_all  # noqa: E402


def run(args):
    env = programs.matmul_types(args.size, args.size, args.size)
    cfg = CacheConfig(capacity_bytes=args.cache_kib * 1024)
    e = canonicalize(programs.matmul_program())
    rows = []
    for v in enumerate_all(e, env).variants:
        nest = lower.lower(v.expr, env)
        st = jit.simulate_jit(nest, cfg)
        rows.append((st.misses, st.hits, v.spine_str))
        print(f"{v.spine_str:24s} misses={st.misses:>12,} hits={st.hits:>12,}")
    rows.sort()
    print("\nbest to worst:")
    for misses, _, spine in rows:
        print(f"  {spine:24s} {misses:>12,}")
    return 0


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--cache-kib", type=int, default=32)
    sys.exit(run(ap.parse_args()))
