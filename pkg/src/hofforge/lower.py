"""Lowering of fused, linearly nested programs to a loop-nest IR.

Each map-like spine entry becomes one counted loop writing independent
outputs; each rnz-like entry becomes one counted loop with an accumulator
(scalar when it reduces scalars, array-shaped when the reduction is lifted
over the maps below it).  Array accesses use the variant's layout strides
directly: subdiv and flip never move data.

Accumulators initialize by first-iteration assignment (reductions need at
least one element, so there is no identity value).  When a reduction
completes it transfers its accumulator to the surrounding destination in an
epilogue block: plain stores into the output, or a peeled combine into the
enclosing reduction's accumulator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Union

from . import exprs as E
from . import layout, rules, variants
from .errors import SpineError
from .exprs import (
    ArrayType, Const, Expr, Flatten, Flip, InputRef, Lam, NZip, PrimOp, Rnz,
    Subdiv, Var,
)
from .layout import Shape


@dataclass(frozen=True, slots=True)
class Affine:
    """base + sum(idx[var] * stride)."""

    base: int
    terms: tuple[tuple[int, int], ...]  # (loop var id, stride)

    def __str__(self):
        parts = [f"v{v}*{s}" for v, s in self.terms]
        if self.base or not parts:
            parts.append(str(self.base))
        return "+".join(parts)


@dataclass(frozen=True, slots=True)
class LoadOp:
    dst: int
    array: str
    addr: Affine


@dataclass(frozen=True, slots=True)
class ConstOp:
    dst: int
    value: Union[int, float]


@dataclass(frozen=True, slots=True)
class BinOp:
    op: str
    dst: int
    a: int
    b: int


@dataclass(frozen=True, slots=True)
class AccumOp:
    """acc[addr] = src when idx[peel_var]==0 else combine(acc[addr], src)."""

    acc: str
    addr: Affine
    src: int
    op: str
    peel_var: int


@dataclass(frozen=True, slots=True)
class StoreOp:
    array: str
    addr: Affine
    src: int


ScalarOp = Union[LoadOp, ConstOp, BinOp, AccumOp, StoreOp]


@dataclass(frozen=True, slots=True)
class Block:
    ops: tuple[ScalarOp, ...]


@dataclass(frozen=True, slots=True)
class Loop:
    var: int
    extent: int
    body: tuple["Stmt", ...]


Stmt = Union[Loop, Block]


@dataclass(frozen=True, slots=True)
class AccInfo:
    name: str
    elems: int
    op: str
    traced: bool  # scalar accumulators live in registers: no memory traffic


@dataclass(frozen=True)
class LoopNest:
    stmts: tuple[Stmt, ...]
    inputs: dict[str, Shape]  # layout-adjusted shape per input buffer
    input_order: tuple[str, ...]
    out_extents: tuple[int, ...]  # innermost-first logical output extents
    accumulators: tuple[AccInfo, ...]
    kind: str  # element kind: int | float
    parallel_outer: bool = False  # outermost loop is map-like: independent writes

    @property
    def out_size(self) -> int:
        n = 1
        for e in self.out_extents:
            n *= e
        return n

    def buffers(self) -> list[tuple[str, int]]:
        """All addressable regions in placement order: inputs, output,
        traced accumulators."""
        regs = [(n, self.inputs[n].max_linear_index() + 1) for n in self.input_order]
        regs.append(("out", max(1, self.out_size)))
        regs.extend((a.name, a.elems) for a in self.accumulators if a.traced)
        return regs


@dataclass(frozen=True, slots=True)
class _Ref:
    """A strided window into a named buffer."""

    array: str
    dims: tuple[layout.Dim, ...]
    terms: tuple[tuple[int, int], ...]

    def sliced(self, var: int) -> "_Ref":
        outer = self.dims[-1]
        return _Ref(self.array, self.dims[:-1], self.terms + ((var, outer.stride),))

    @property
    def rank(self):
        return len(self.dims)


@dataclass(frozen=True, slots=True)
class _Dest:
    kind: str  # "out" | "acc"
    name: str
    dims: tuple[layout.Dim, ...]  # remaining (unbound) dims, innermost-first
    terms: tuple[tuple[int, int], ...]
    op: Optional[str] = None  # combine op for acc destinations
    peel_var: Optional[int] = None

    def bound(self, var: int) -> "_Dest":
        outer = self.dims[-1]
        return _Dest(
            self.kind,
            self.name,
            self.dims[:-1],
            self.terms + ((var, outer.stride),),
            self.op,
            self.peel_var,
        )


class _Lowerer:
    def __init__(self, env: Mapping[str, ArrayType]):
        self.env = env
        self.nvars = 0
        self.nregs = 0
        self.accs: list[AccInfo] = []
        self.inputs: dict[str, Shape] = {}
        self.input_order: list[str] = []

    def fresh_var(self) -> int:
        self.nvars += 1
        return self.nvars - 1

    def fresh_reg(self) -> int:
        self.nregs += 1
        return self.nregs - 1

    def resolve_array(self, a: Expr, frames) -> _Ref:
        chain = []
        x = a
        while isinstance(x, (Subdiv, Flip, Flatten)):
            chain.append(x)
            x = x.array
        if isinstance(x, InputRef):
            if x.name not in self.env:
                raise SpineError(f"unbound input {x.name!r}")
            shape = self.env[x.name].shape
            for op in reversed(chain):
                if isinstance(op, Subdiv):
                    shape = layout.subdiv(op.d, op.b, shape)
                elif isinstance(op, Flip):
                    shape = layout.flip(op.d1, shape, op.d2)
                else:
                    shape = layout.flatten(op.d, shape)
            if x.name not in self.inputs:
                self.inputs[x.name] = shape
                self.input_order.append(x.name)
            elif self.inputs[x.name] != shape:
                raise SpineError(
                    f"input {x.name!r} used with two different layouts"
                )
            return _Ref(x.name, shape.dims, ())
        if isinstance(x, Var):
            if chain:
                raise SpineError("layout op on a bound variable: not hoisted")
            ref = frames[-1 - x.up][x.idx]
            if not isinstance(ref, _Ref):
                raise SpineError("scalar where an array was expected")
            return ref
        raise SpineError(
            f"array argument is not an input or bound view: {type(x).__name__}"
        )

    # -- spine walk ---------------------------------------------------------

    def lower_hof(self, node: Expr, dest: _Dest, frames) -> list[Stmt]:
        if isinstance(node, NZip):
            return self._lower_map(node, dest, frames)
        if isinstance(node, Rnz):
            return self._lower_rnz(node, dest, frames)
        raise SpineError(f"expected a higher-order node, got {type(node).__name__}")

    def _consume(self, arrays, frames):
        refs = [self.resolve_array(a, frames) for a in arrays]
        exts = {r.dims[-1].extent for r in refs}
        if len(exts) != 1:
            raise SpineError(f"outer extent mismatch: {sorted(exts)}")
        v = self.fresh_var()
        return v, exts.pop(), tuple(r.sliced(v) for r in refs)

    def _lower_map(self, node: NZip, dest: _Dest, frames) -> list[Stmt]:
        if not isinstance(node.fn, Lam):
            raise SpineError("map function must be a literal lambda")
        v, extent, slices = self._consume(node.arrays, frames)
        inner_dest = dest.bound(v)
        body = self._lower_body(node.fn.body, inner_dest, frames + (slices,))
        return [Loop(v, extent, tuple(body))]

    def _lower_rnz(self, node: Rnz, dest: _Dest, frames) -> list[Stmt]:
        op = rules._base_op(node.reduce_fn)
        if op is None:
            raise SpineError("reduction is not a (possibly lifted) primitive")
        if not isinstance(node.zip_fn, Lam):
            raise SpineError("rnz zip function must be a literal lambda")
        v, extent, slices = self._consume(node.arrays, frames)
        acc_dims = self._maps_below(node.zip_fn.body, frames + (slices,))
        elems = 1
        for e in acc_dims:
            elems *= e
        acc = AccInfo(f"acc{len(self.accs)}", elems, op, traced=elems > 1)
        self.accs.append(acc)
        acc_shape = layout.row_major_shape(acc_dims)
        if len(acc_shape.dims) != len(dest.dims):
            raise SpineError(
                f"accumulator rank {len(acc_shape.dims)} does not match "
                f"destination rank {len(dest.dims)}"
            )
        inner_dest = _Dest("acc", acc.name, acc_shape.dims, (), op, v)
        body = self._lower_body(node.zip_fn.body, inner_dest, frames + (slices,))
        stmts: list[Stmt] = [Loop(v, extent, tuple(body))]
        stmts.extend(self._transfer(acc, acc_shape, dest))
        return stmts

    def _maps_below(self, body: Expr, frames) -> list[int]:
        """Extents of map entries below this spine point, innermost first;
        a dry walk with the same view slicing as the real one."""
        if isinstance(body, NZip):
            if not isinstance(body.fn, Lam):
                raise SpineError("map function must be a literal lambda")
            refs = [self.resolve_array(a, frames) for a in body.arrays]
            ext = refs[0].dims[-1].extent
            slices = tuple(r.sliced(-1) for r in refs)
            return self._maps_below(body.fn.body, frames + (slices,)) + [ext]
        if isinstance(body, Rnz):
            if not isinstance(body.zip_fn, Lam):
                raise SpineError("rnz zip function must be a literal lambda")
            refs = [self.resolve_array(a, frames) for a in body.arrays]
            slices = tuple(r.sliced(-1) for r in refs)
            return self._maps_below(body.zip_fn.body, frames + (slices,))
        return []

    def _lower_body(self, body: Expr, dest: _Dest, frames) -> list[Stmt]:
        if isinstance(body, (NZip, Rnz)):
            return self.lower_hof(body, dest, frames)
        if E.hof_count(body) != 0:
            raise SpineError("body mixes scalars with higher-order functions")
        ops: list[ScalarOp] = []
        src = self._scalar(body, frames, ops)
        addr = Affine(0, dest.terms)
        if dest.kind == "out":
            ops.append(StoreOp("out", addr, src))
        else:
            ops.append(AccumOp(dest.name, addr, src, dest.op, dest.peel_var))
        return [Block(tuple(ops))]

    def _scalar(self, e: Expr, frames, ops: list[ScalarOp]) -> int:
        if isinstance(e, Const):
            r = self.fresh_reg()
            ops.append(ConstOp(r, e.value))
            return r
        if isinstance(e, Var):
            ref = frames[-1 - e.up][e.idx]
            if not isinstance(ref, _Ref) or ref.rank != 0:
                raise SpineError("non-scalar variable in scalar position")
            r = self.fresh_reg()
            ops.append(LoadOp(r, ref.array, Affine(0, ref.terms)))
            return r
        if isinstance(e, PrimOp):
            a = self._scalar(e.args[0], frames, ops)
            b = self._scalar(e.args[1], frames, ops)
            r = self.fresh_reg()
            ops.append(BinOp(e.op, r, a, b))
            return r
        raise SpineError(f"unsupported scalar node {type(e).__name__}")

    def _transfer(self, acc: AccInfo, acc_shape: Shape, dest: _Dest) -> list[Stmt]:
        """Epilogue moving a finished accumulator into the destination."""
        fresh = [self.fresh_var() for _ in acc_shape.dims]
        src_terms = tuple((v, d.stride) for v, d in zip(fresh, acc_shape.dims))
        dst_terms = dest.terms + tuple(
            (v, d.stride) for v, d in zip(fresh, dest.dims)
        )
        r = self.fresh_reg()
        ops: list[ScalarOp] = [LoadOp(r, acc.name, Affine(0, src_terms))]
        if dest.kind == "out":
            ops.append(StoreOp("out", Affine(0, dst_terms), r))
        else:
            ops.append(AccumOp(dest.name, Affine(0, dst_terms), r, dest.op, dest.peel_var))
        stmt: Stmt = Block(tuple(ops))
        for v, d in zip(fresh, acc_shape.dims):  # innermost dim = innermost loop
            stmt = Loop(v, d.extent, (stmt,))
        return [stmt]


def lower(e: Expr, env: Mapping[str, ArrayType]) -> LoopNest:
    """Lower a fused, linear, canonically hoisted expression."""
    e = variants.canonicalize(e)
    t = E.infer_shape(e, env)
    low = _Lowerer(env)
    out_dims = layout.row_major_shape(list(t.shape.extents)).dims
    dest = _Dest("out", "out", out_dims, ())
    stmts = low.lower_hof(e, dest, ())
    return LoopNest(
        stmts=tuple(stmts),
        inputs=low.inputs,
        input_order=tuple(low.input_order),
        out_extents=t.shape.extents,
        accumulators=tuple(low.accs),
        kind=t.kind,
        parallel_outer=isinstance(e, NZip),
    )


# ---------------------------------------------------------------------------
# introspection used by tests and reports


def loop_extents(nest: LoopNest) -> list[int]:
    """Extents of the spine loops in nesting order (epilogue loops excluded:
    they carry variables allocated after the spine's)."""
    out = []

    def walk(stmts, depth):
        for s in stmts:
            if isinstance(s, Loop):
                out.append((s.var, s.extent, depth))
                walk(s.body, depth + 1)

    walk(nest.stmts, 0)
    return out


def count_op(nest: LoopNest, opname: str) -> int:
    """Dynamic count of a primitive over the whole execution."""

    def walk(stmts, mult):
        total = 0
        for s in stmts:
            if isinstance(s, Loop):
                total += walk(s.body, mult * s.extent)
            else:
                total += mult * sum(
                    1 for op in s.ops if isinstance(op, BinOp) and op.op == opname
                )
        return total

    return walk(nest.stmts, 1)


def max_accumulator_elems(nest: LoopNest) -> int:
    return max((a.elems for a in nest.accumulators), default=0)


def dump(nest: LoopNest) -> str:
    lines = []
    lines.append(
        "inputs: "
        + ", ".join(f"{n}:{layout.format_shape(nest.inputs[n])}" for n in nest.input_order)
    )
    lines.append(
        "out: " + ("x".join(map(str, nest.out_extents)) if nest.out_extents else "scalar")
    )
    for a in nest.accumulators:
        kindtxt = "mem" if a.traced else "reg"
        lines.append(f"acc {a.name}: {a.elems} elem {a.op} ({kindtxt})")

    def fmt_op(op):
        if isinstance(op, LoadOp):
            return f"r{op.dst} = {op.array}[{op.addr}]"
        if isinstance(op, ConstOp):
            return f"r{op.dst} = {op.value}"
        if isinstance(op, BinOp):
            return f"r{op.dst} = {op.op}(r{op.a}, r{op.b})"
        if isinstance(op, AccumOp):
            return f"{op.acc}[{op.addr}] {op.op}= r{op.src} peel v{op.peel_var}"
        if isinstance(op, StoreOp):
            return f"{op.array}[{op.addr}] = r{op.src}"
        raise TypeError(op)

    def walk(stmts, ind):
        for s in stmts:
            if isinstance(s, Loop):
                lines.append("  " * ind + f"for v{s.var} in 0..{s.extent}:")
                walk(s.body, ind + 1)
            else:
                for op in s.ops:
                    lines.append("  " * ind + fmt_op(op))

    walk(nest.stmts, 0)
    return "\n".join(lines) + "\n"
