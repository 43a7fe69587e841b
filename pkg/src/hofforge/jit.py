"""Per-nest compiled kernels, generated uniformly from the loop-nest IR.

One code generator emits every variant, so no spine gets hand-tuned
treatment; the compiler then treats each variant the way ahead-of-time
compilation would, and wall-clock differences reflect the memory behavior
of the loop order.  Scalar accumulators become locals; everything else is
indexed loads/stores on flat numpy buffers.

The traced flavor threads a set-associative LRU model through every memory
access (same placement and policy as ``cachesim.simulate``), counting hits
and misses per array without materializing the trace.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .cachesim import CacheConfig, CacheStats, placement
from .lower import AccumOp, Affine, BinOp, ConstOp, LoadOp, Loop, LoopNest, StoreOp

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*a, **k):
        def wrap(f):
            return f

        return wrap if not (len(a) == 1 and callable(a[0])) else a[0]


@njit(cache=False, inline="always")
def _touch(tags, stamps, meta, stats, aidx, addr, line_bytes, sets, ways):
    line = addr // line_bytes
    base = (line % sets) * ways
    meta[0] += 1
    clock = meta[0]
    for w in range(ways):
        if tags[base + w] == line:
            stamps[base + w] = clock
            stats[2 * aidx] += 1
            return
    stats[2 * aidx + 1] += 1
    lru = base
    for w in range(1, ways):
        if stamps[base + w] < stamps[lru]:
            lru = base + w
    tags[lru] = line
    stamps[lru] = clock


def _expr_of(addr: Affine) -> str:
    parts = [f"v{v}*{s}" if s != 1 else f"v{v}" for v, s in addr.terms]
    if addr.base or not parts:
        parts.append(str(addr.base))
    return "+".join(parts)


_BINFMT = {
    "add": "({a}+{b})",
    "mul": "({a}*{b})",
    "sub": "({a}-{b})",
    "div": "({a}/{b})",
    "min": "min({a},{b})",
    "max": "max({a},{b})",
}


class _Gen:
    def __init__(self, nest: LoopNest, traced: bool, cfg: CacheConfig | None,
                 parallel: bool = False):
        self.nest = nest
        self.traced = traced
        self.cfg = cfg or CacheConfig()
        self.parallel = parallel and nest.parallel_outer and not traced
        self.lines: list[str] = []
        self.scalar_accs = {a.name for a in nest.accumulators if not a.traced}
        regions = nest.buffers()
        self.bases = placement(regions, self.cfg)
        self.aidx = {name: i for i, (name, _) in enumerate(regions)}
        self.names = [name for name, _ in regions]

    def emit(self, ind: int, text: str):
        self.lines.append("    " * ind + text)

    def touch(self, ind: int, array: str, addrexpr: str):
        if not self.traced or array in self.scalar_accs:
            return
        c = self.cfg
        base = self.bases[array]
        self.emit(
            ind,
            f"_touch(tags, stamps, meta, stats, {self.aidx[array]}, "
            f"{base}+({addrexpr})*{c.element_bytes}, "
            f"{c.line_bytes}, {c.sets}, {c.associativity})",
        )

    def gen_block(self, ops, ind: int):
        for op in ops:
            if isinstance(op, LoadOp):
                a = _expr_of(op.addr)
                if op.array in self.scalar_accs:
                    self.emit(ind, f"r{op.dst} = {op.array}")
                else:
                    self.touch(ind, op.array, a)
                    self.emit(ind, f"r{op.dst} = {op.array}[{a}]")
            elif isinstance(op, ConstOp):
                self.emit(ind, f"r{op.dst} = {op.value!r}")
            elif isinstance(op, BinOp):
                self.emit(
                    ind,
                    f"r{op.dst} = "
                    + _BINFMT[op.op].format(a=f"r{op.a}", b=f"r{op.b}"),
                )
            elif isinstance(op, AccumOp):
                a = _expr_of(op.addr)
                comb = _BINFMT[op.op]
                if op.acc in self.scalar_accs:
                    cur = op.acc
                    self.emit(ind, f"if v{op.peel_var} == 0:")
                    self.emit(ind + 1, f"{op.acc} = r{op.src}")
                    self.emit(ind, "else:")
                    self.emit(
                        ind + 1, f"{op.acc} = " + comb.format(a=cur, b=f"r{op.src}")
                    )
                else:
                    self.emit(ind, f"if v{op.peel_var} == 0:")
                    self.touch(ind + 1, op.acc, a)
                    self.emit(ind + 1, f"{op.acc}[{a}] = r{op.src}")
                    self.emit(ind, "else:")
                    self.touch(ind + 1, op.acc, a)
                    self.touch(ind + 1, op.acc, a)
                    self.emit(
                        ind + 1,
                        f"{op.acc}[{a}] = "
                        + comb.format(a=f"{op.acc}[{a}]", b=f"r{op.src}"),
                    )
            elif isinstance(op, StoreOp):
                a = _expr_of(op.addr)
                self.touch(ind, op.array, a)
                self.emit(ind, f"{op.array}[{a}] = r{op.src}")
            else:
                raise TypeError(op)

    def gen_stmts(self, stmts, ind: int, outer: bool = False):
        for s in stmts:
            if isinstance(s, Loop):
                ranger = "prange" if (outer and self.parallel) else "range"
                self.emit(ind, f"for v{s.var} in {ranger}({s.extent}):")
                if outer and self.parallel:
                    # scalar accumulators become loop-private locals
                    zero = "0" if self.nest.kind == "int" else "0.0"
                    for name in sorted(self.scalar_accs):
                        self.emit(ind + 1, f"{name} = {zero}")
                self.gen_stmts(s.body, ind + 1)
            else:
                self.gen_block(s.ops, ind)

    def source(self) -> str:
        nest = self.nest
        args = list(nest.input_order) + ["out"]
        args += [a.name for a in nest.accumulators if a.traced]
        if self.traced:
            args += ["tags", "stamps", "meta", "stats"]
        self.emit(0, f"def kernel({', '.join(args)}):")
        zero = "0" if nest.kind == "int" else "0.0"
        if not self.parallel:
            for name in sorted(self.scalar_accs):
                self.emit(1, f"{name} = {zero}")
        self.gen_stmts(nest.stmts, 1, outer=True)
        self.emit(1, "return out")
        return "\n".join(self.lines) + "\n"


def build(nest: LoopNest, traced: bool = False, cfg: CacheConfig | None = None,
          parallel: bool = False):
    """Compile a nest; returns (callable, source).

    ``parallel`` splits the outermost loop across threads when the nest
    declares it safe (an outermost map: independent writes); scalar
    accumulators become per-iteration locals, so no state is shared.
    """
    gen = _Gen(nest, traced, cfg, parallel)
    src = gen.source()
    ns = {"_touch": _touch, "min": min, "max": max, "range": range}
    if gen.parallel:
        from numba import prange

        ns["prange"] = prange
    exec(compile(src, "<hofforge-kernel>", "exec"), ns)
    fn = ns["kernel"]
    if HAVE_NUMBA:
        fn = njit(cache=False, parallel=gen.parallel)(fn)
    return fn, src


def prepare(nest: LoopNest, inputs: Mapping[str, np.ndarray], traced=False,
            cfg: CacheConfig | None = None, parallel: bool = False):
    """Compile and assemble the argument tuple for a nest."""
    cfg = cfg or CacheConfig()
    fn, _ = build(nest, traced, cfg, parallel)
    dtype = np.int64 if nest.kind == "int" else np.float64
    bufs = [np.ascontiguousarray(inputs[n], dtype=dtype) for n in nest.input_order]
    bufs.append(np.zeros(max(1, nest.out_size), dtype=dtype))
    for a in nest.accumulators:
        if a.traced:
            bufs.append(np.zeros(a.elems, dtype=dtype))
    if traced:
        n = cfg.sets * cfg.associativity
        narr = len(nest.buffers())
        bufs += [
            np.full(n, -1, dtype=np.int64),
            np.zeros(n, dtype=np.int64),
            np.zeros(1, dtype=np.int64),
            np.zeros(2 * narr, dtype=np.int64),
        ]
    return fn, bufs


def run_jit(nest: LoopNest, inputs: Mapping[str, np.ndarray]) -> np.ndarray:
    fn, bufs = prepare(nest, inputs)
    return fn(*bufs)


def simulate_jit(
    nest: LoopNest, cfg: CacheConfig | None = None
) -> CacheStats:
    """Cache statistics for a full run, LRU model inlined into the kernel
    (no materialized trace); agrees with simulate(trace_accesses(nest))."""
    cfg = cfg or CacheConfig()
    from .runtime import make_inputs

    inputs = make_inputs(nest, nest.kind)
    fn, bufs = prepare(nest, inputs, traced=True, cfg=cfg)
    fn(*bufs)
    stats_arr = bufs[-1]
    stats = CacheStats()
    gen = _Gen(nest, True, cfg)
    for name in gen.names:
        i = gen.aidx[name]
        h, m = int(stats_arr[2 * i]), int(stats_arr[2 * i + 1])
        if h or m:
            stats.per_array[name] = [h, m]
        stats.hits += h
        stats.misses += m
    return stats
