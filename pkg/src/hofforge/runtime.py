"""Execution of loop nests: a reference register VM, access tracing, and
wall-clock measurement through uniformly generated jitted kernels.

The reference executor is the semantic anchor (exact on Python ints);
timing goes through ``hofforge.jit`` so every variant pays the same,
compiler-generated cost per operation and the differences left are memory
behavior.
"""

from __future__ import annotations

import os
import time
from typing import Iterator, Mapping

import numpy as np

from .errors import ShapeError
from .lower import (
    AccumOp, Affine, BinOp, ConstOp, LoadOp, Loop, LoopNest, StoreOp,
)

DEFAULT_SEED = 451


def fill_seed() -> int:
    env = os.environ.get("HOFFORGE_SEED")
    return int(env) if env else DEFAULT_SEED


def make_inputs(nest: LoopNest, kind: str, seed: int | None = None):
    """Deterministic pseudo-random input buffers: small integers for exact
    semantic checks, uniform floats for timing."""
    rng = np.random.default_rng(fill_seed() if seed is None else seed)
    out = {}
    for name in nest.input_order:
        n = nest.inputs[name].max_linear_index() + 1
        if kind == "int":
            out[name] = rng.integers(-8, 9, size=n).astype(np.int64)
        else:
            out[name] = rng.random(n)
    return out


def _prim(op, a, b):
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    if op == "sub":
        return a - b
    if op == "div":
        return a / b
    if op == "min":
        return a if a <= b else b
    return a if a >= b else b


def run(nest: LoopNest, inputs: Mapping[str, object]):
    """Reference execution; returns the output buffer as a Python list.

    Buffers may be Python lists or numpy arrays; scalar accumulators live in
    VM registers, array accumulators in plain buffers.
    """
    for name in nest.input_order:
        if name not in inputs:
            raise ShapeError(f"missing input buffer {name!r}")
        need = nest.inputs[name].max_linear_index() + 1
        if len(inputs[name]) < need:
            raise ShapeError(
                f"buffer {name!r} too small: {len(inputs[name])} < {need}"
            )
    zero = 0 if nest.kind == "int" else 0.0
    bufs: dict[str, object] = {n: inputs[n] for n in nest.input_order}
    bufs["out"] = [zero] * max(1, nest.out_size)
    for a in nest.accumulators:
        bufs[a.name] = [zero] * a.elems

    idx = [0] * 64
    regs = [zero] * 64

    def addr(a: Affine) -> int:
        return a.base + sum(idx[v] * s for v, s in a.terms)

    def exec_block(ops):
        for op in ops:
            if isinstance(op, LoadOp):
                regs[op.dst] = bufs[op.array][addr(op.addr)]
            elif isinstance(op, ConstOp):
                regs[op.dst] = op.value
            elif isinstance(op, BinOp):
                regs[op.dst] = _prim(op.op, regs[op.a], regs[op.b])
            elif isinstance(op, AccumOp):
                buf = bufs[op.acc]
                a = addr(op.addr)
                if idx[op.peel_var] == 0:
                    buf[a] = regs[op.src]
                else:
                    buf[a] = _prim(op.op, buf[a], regs[op.src])
            elif isinstance(op, StoreOp):
                bufs[op.array][addr(op.addr)] = regs[op.src]
            else:
                raise TypeError(op)

    def exec_stmts(stmts):
        for s in stmts:
            if isinstance(s, Loop):
                for i in range(s.extent):
                    idx[s.var] = i
                    exec_stmts(s.body)
            else:
                exec_block(s.ops)

    exec_stmts(nest.stmts)
    return bufs["out"]


def trace_accesses(nest: LoopNest) -> Iterator[tuple[str, int, str]]:
    """Deterministic (array, element offset, 'r'|'w') stream in execution
    order.  Register traffic and scalar accumulators do not touch memory;
    array accumulators do, including their read-modify-write cycles."""
    traced = {n for n in nest.input_order} | {"out"}
    traced |= {a.name for a in nest.accumulators if a.traced}
    idx = [0] * 64

    def addr(a: Affine) -> int:
        return a.base + sum(idx[v] * s for v, s in a.terms)

    def walk(stmts):
        for s in stmts:
            if isinstance(s, Loop):
                for i in range(s.extent):
                    idx[s.var] = i
                    yield from walk(s.body)
            else:
                for op in s.ops:
                    if isinstance(op, LoadOp):
                        if op.array in traced:
                            yield (op.array, addr(op.addr), "r")
                    elif isinstance(op, AccumOp):
                        if op.acc in traced:
                            a = addr(op.addr)
                            if idx[op.peel_var] != 0:
                                yield (op.acc, a, "r")
                            yield (op.acc, a, "w")
                    elif isinstance(op, StoreOp):
                        if op.array in traced:
                            yield (op.array, addr(op.addr), "w")

    return walk(nest.stmts)


def trace_length(nest: LoopNest) -> int:
    n = 0
    for _ in trace_accesses(nest):
        n += 1
    return n


def time_variant(
    nest: LoopNest, inputs: Mapping[str, np.ndarray], repetitions: int = 5
) -> float:
    """Median wall-clock milliseconds over ``repetitions`` runs; one warm-up
    run (which also compiles the kernel) is excluded."""
    if repetitions < 3:
        raise ValueError("need at least 3 repetitions")
    from . import jit

    kernel, bufs = jit.prepare(nest, inputs)
    kernel(*bufs)  # warm-up + compile
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        kernel(*bufs)
        times.append(time.perf_counter() - t0)
    times.sort()
    return times[len(times) // 2] * 1e3
