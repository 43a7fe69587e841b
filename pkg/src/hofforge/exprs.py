"""The expression language: variadic map/zip/reduce over views.

Expressions use nameless binders: ``Var(up, idx)`` refers to parameter
``idx`` of the lambda ``up`` binder levels out (0 = innermost enclosing).
Alpha-equivalent terms are therefore structurally equal, which is what rule
matching and variant deduplication key on.

Higher-order nodes:
  NZip(fn, arrays)          n-ary elementwise combinator (map is n=1,
                            zip is n=2); consumes the outermost dimension
                            of every array.
  Rnz(reduce_fn, zip_fn, arrays)
                            reduction over elementwise-zipped arrays;
                            reduce_fn is binary, zip_fn arity = len(arrays);
                            needs at least one element, so no identity value.
Layout nodes Subdiv/Flatten/Flip reinterpret an array's shape in place.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

from . import layout
from .errors import InferenceError
from .layout import Shape

PRIM_OPS = ("add", "mul", "sub", "div", "min", "max")


@dataclass(frozen=True, slots=True)
class OpMeta:
    name: str
    associative: bool
    commutative: bool


OP_META: dict[str, OpMeta] = {
    "add": OpMeta("add", True, True),
    "mul": OpMeta("mul", True, True),
    "sub": OpMeta("sub", False, False),
    "div": OpMeta("div", False, False),
    "min": OpMeta("min", True, True),
    "max": OpMeta("max", True, True),
}


class Expr:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class InputRef(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Const(Expr):
    value: float | int


@dataclass(frozen=True, slots=True)
class Var(Expr):
    up: int
    idx: int


@dataclass(frozen=True, slots=True)
class Lam(Expr):
    nparams: int
    body: Expr


@dataclass(frozen=True, slots=True)
class App(Expr):
    fn: Expr
    args: tuple[Expr, ...]


@dataclass(frozen=True, slots=True)
class PrimOp(Expr):
    op: str
    args: tuple[Expr, ...]

    def __post_init__(self):
        if self.op not in OP_META:
            raise InferenceError(f"unknown primitive {self.op!r}")
        if len(self.args) != 2:
            raise InferenceError(f"{self.op} takes 2 operands, got {len(self.args)}")


@dataclass(frozen=True, slots=True)
class NZip(Expr):
    fn: Expr
    arrays: tuple[Expr, ...]

    def __post_init__(self):
        if not self.arrays:
            raise InferenceError("nzip needs at least one array")


@dataclass(frozen=True, slots=True)
class Rnz(Expr):
    reduce_fn: Expr
    zip_fn: Expr
    arrays: tuple[Expr, ...]

    def __post_init__(self):
        if not self.arrays:
            raise InferenceError("rnz needs at least one array")


@dataclass(frozen=True, slots=True)
class Subdiv(Expr):
    d: int
    b: int
    array: Expr


@dataclass(frozen=True, slots=True)
class Flatten(Expr):
    d: int
    array: Expr


@dataclass(frozen=True, slots=True)
class Flip(Expr):
    d1: int
    d2: int
    array: Expr


def prim_fn(op: str) -> Lam:
    """The primitive as a first-class binary function value."""
    return Lam(2, PrimOp(op, (Var(0, 0), Var(0, 1))))


def identity_fn() -> Lam:
    return Lam(1, Var(0, 0))


def mk_map(f: Expr, x: Expr) -> NZip:
    if arity(f) != 1:
        raise InferenceError(f"map function must be unary, got arity {arity(f)}")
    return NZip(f, (x,))


def mk_zip(f: Expr, x: Expr, y: Expr) -> NZip:
    if arity(f) != 2:
        raise InferenceError(f"zip function must be binary, got arity {arity(f)}")
    return NZip(f, (x, y))


def mk_reduce(r: Expr, x: Expr) -> Rnz:
    if arity(r) != 2:
        raise InferenceError("reduction function must be binary")
    return Rnz(r, identity_fn(), (x,))


def arity(f: Expr) -> int:
    if isinstance(f, Lam):
        return f.nparams
    raise InferenceError(f"not a function value: {type(f).__name__}")


# ---------------------------------------------------------------------------
# binder bookkeeping


def shift(e: Expr, by: int, cutoff: int = 0) -> Expr:
    """Adjust `up` of variables pointing past `cutoff` enclosing lambdas."""
    if isinstance(e, Var):
        if e.up >= cutoff:
            if e.up + by < cutoff:
                raise InferenceError("shift would capture a bound variable")
            return Var(e.up + by, e.idx)
        return e
    return _map_children(e, lambda c, lam: shift(c, by, cutoff + lam))


def subst(e: Expr, repl: Mapping[int, Expr], depth: int = 0) -> Expr:
    """Replace Var(depth, i) by repl[i], shifting replacements under binders."""
    if isinstance(e, Var):
        if e.up == depth:
            if e.idx not in repl:
                raise InferenceError(f"no substitution for parameter {e.idx}")
            return shift(repl[e.idx], depth)
        if e.up > depth:
            return Var(e.up - 1, e.idx)
        return e
    return _map_children(e, lambda c, lam: subst(c, repl, depth + lam))


def _map_children(e: Expr, f: Callable[[Expr, int], Expr]) -> Expr:
    """Rebuild e with f applied to children; f's second arg is 1 when the
    child sits under e's lambda binder."""
    if isinstance(e, (InputRef, Const, Var)):
        return e
    if isinstance(e, Lam):
        return Lam(e.nparams, f(e.body, 1))
    if isinstance(e, App):
        return App(f(e.fn, 0), tuple(f(a, 0) for a in e.args))
    if isinstance(e, PrimOp):
        return PrimOp(e.op, tuple(f(a, 0) for a in e.args))
    if isinstance(e, NZip):
        return NZip(f(e.fn, 0), tuple(f(a, 0) for a in e.arrays))
    if isinstance(e, Rnz):
        return Rnz(f(e.reduce_fn, 0), f(e.zip_fn, 0), tuple(f(a, 0) for a in e.arrays))
    if isinstance(e, Subdiv):
        return Subdiv(e.d, e.b, f(e.array, 0))
    if isinstance(e, Flatten):
        return Flatten(e.d, f(e.array, 0))
    if isinstance(e, Flip):
        return Flip(e.d1, e.d2, f(e.array, 0))
    raise TypeError(f"unknown node {type(e).__name__}")


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, (InputRef, Const, Var)):
        return ()
    if isinstance(e, Lam):
        return (e.body,)
    if isinstance(e, App):
        return (e.fn, *e.args)
    if isinstance(e, PrimOp):
        return e.args
    if isinstance(e, NZip):
        return (e.fn, *e.arrays)
    if isinstance(e, Rnz):
        return (e.reduce_fn, e.zip_fn, *e.arrays)
    if isinstance(e, (Subdiv, Flatten, Flip)):
        return (e.array,)
    raise TypeError(f"unknown node {type(e).__name__}")


def uses_binder(e: Expr, up: int) -> bool:
    """Does e reference the lambda `up` levels out from e's own position?"""
    if isinstance(e, Var):
        return e.up == up
    return any(
        uses_binder(c, up + (1 if isinstance(e, Lam) else 0)) for c in children(e)
    )


def hof_count(e: Expr) -> int:
    n = 1 if isinstance(e, (NZip, Rnz)) else 0
    return n + sum(hof_count(c) for c in children(e))


def check_scoped(e: Expr, depth: int = 0, params: tuple[int, ...] = ()) -> None:
    if isinstance(e, Var):
        if e.up >= depth:
            raise InferenceError(f"unbound variable Var({e.up},{e.idx}) at depth {depth}")
        if e.idx >= params[-1 - e.up]:
            raise InferenceError(f"parameter index {e.idx} out of range")
        return
    if isinstance(e, Lam):
        check_scoped(e.body, depth + 1, params + (e.nparams,))
        return
    for c in children(e):
        check_scoped(c, depth, params)


def alpha_canonicalize(e: Expr) -> Expr:
    """Canonical nameless form.  The representation is already nameless, so
    this validates scoping and returns the term unchanged; two expressions
    are alpha-equivalent iff their canonical forms compare equal."""
    check_scoped(e)
    return e


# ---------------------------------------------------------------------------
# generalized composition


def ncomp(i: int, f: Expr, g: Expr) -> Lam:
    """Compose g before the i-th argument of f; arity n+m-1.

    Builds the lambda directly: params b of g are spliced into f's parameter
    list at position i and both bodies are inlined.
    """
    n, m = arity(f), arity(g)
    if not 0 <= i < n:
        raise InferenceError(f"ncomp position {i} out of range for arity {n}")
    assert isinstance(f, Lam) and isinstance(g, Lam)
    total = n + m - 1
    g_repl = {k: Var(0, i + k) for k in range(m)}
    g_inlined = subst(shift(g.body, 1, 1), g_repl)
    f_repl: dict[int, Expr] = {}
    for k in range(n):
        if k < i:
            f_repl[k] = Var(0, k)
        elif k == i:
            f_repl[k] = g_inlined
        else:
            f_repl[k] = Var(0, k + m - 1)
    body = subst(shift(f.body, 1, 1), f_repl)
    lam = Lam(total, body)
    check_scoped(lam)
    return lam


def lift(f: Expr) -> Lam:
    """Raise a function to act elementwise over arrays (partially applied
    map/zip)."""
    k = arity(f)
    if k == 1:
        return Lam(1, NZip(shift(f, 1), (Var(0, 0),)))
    if k == 2:
        return Lam(2, NZip(shift(f, 1), (Var(0, 0), Var(0, 1))))
    raise InferenceError(f"lift supports unary/binary functions, got arity {k}")


# ---------------------------------------------------------------------------
# shape inference


@dataclass(frozen=True, slots=True)
class ArrayType:
    kind: str  # "int" | "float"
    shape: Shape

    @property
    def is_scalar(self) -> bool:
        return self.shape.is_scalar

    def __str__(self):
        return f"{self.kind}{layout.format_shape(self.shape)}"


def _join_kind(a: str, b: str) -> str:
    return "float" if "float" in (a, b) else "int"


def _result_of_hof(elem: ArrayType, outer_extent: int | None) -> ArrayType:
    """Materialized result type: row-major over the element's logical extents
    plus, for nzip, the consumed extent on the outside."""
    ext = list(elem.shape.extents)
    if outer_extent is not None:
        ext.append(outer_extent)
    return ArrayType(elem.kind, layout.row_major_shape(ext))


class _TypeEnv:
    def __init__(self, inputs: Mapping[str, ArrayType]):
        self.inputs = inputs
        self.frames: list[tuple[ArrayType, ...]] = []


def infer_shape(e: Expr, env: Mapping[str, ArrayType]) -> ArrayType:
    """Type of e given input array types.  NZip consumes the outermost Dim of
    each array (outer extents must agree) and wraps the function's result in
    that extent; Rnz yields the zip function's result type with the consumed
    dimension gone."""
    return _infer(e, _TypeEnv(env))


def _infer(e: Expr, env: _TypeEnv) -> ArrayType:
    if isinstance(e, InputRef):
        if e.name not in env.inputs:
            raise InferenceError(f"unbound input {e.name!r}")
        return env.inputs[e.name]
    if isinstance(e, Const):
        kind = "int" if isinstance(e.value, int) else "float"
        return ArrayType(kind, Shape(()))
    if isinstance(e, Var):
        frame = env.frames[-1 - e.up]
        return frame[e.idx]
    if isinstance(e, PrimOp):
        ts = [_infer(a, env) for a in e.args]
        for t in ts:
            if not t.is_scalar:
                raise InferenceError(f"{e.op} applied to non-scalar {t}")
        kind = _join_kind(ts[0].kind, ts[1].kind)
        if e.op == "div":
            kind = "float"
        return ArrayType(kind, Shape(()))
    if isinstance(e, App):
        if not isinstance(e.fn, Lam):
            raise InferenceError("application of a non-function")
        if len(e.args) != e.fn.nparams:
            raise InferenceError(
                f"arity mismatch: {e.fn.nparams} parameters, {len(e.args)} arguments"
            )
        ts = tuple(_infer(a, env) for a in e.args)
        return _infer_call(e.fn, ts, env)
    if isinstance(e, Lam):
        raise InferenceError("cannot infer a bare function value; apply it")
    if isinstance(e, NZip):
        ats = [_infer(a, env) for a in e.arrays]
        outer = _consumed_extent(ats)
        elems = tuple(ArrayType(t.kind, Shape(t.shape.dims[:-1])) for t in ats)
        res = _infer_call(e.fn, elems, env)
        return _result_of_hof(res, outer)
    if isinstance(e, Rnz):
        ats = [_infer(a, env) for a in e.arrays]
        _consumed_extent(ats)
        elems = tuple(ArrayType(t.kind, Shape(t.shape.dims[:-1])) for t in ats)
        zt = _infer_call(e.zip_fn, elems, env)
        zm = _result_of_hof(zt, None)  # materialized accumulator type
        rt = _infer_call(e.reduce_fn, (zm, zm), env)
        if rt.shape.extents != zm.shape.extents:
            raise InferenceError(
                f"reduction does not preserve element type: {zm} vs {rt}"
            )
        return _result_of_hof(rt, None)
    if isinstance(e, Subdiv):
        t = _infer(e.array, env)
        return ArrayType(t.kind, layout.subdiv(e.d, e.b, t.shape))
    if isinstance(e, Flatten):
        t = _infer(e.array, env)
        return ArrayType(t.kind, layout.flatten(e.d, t.shape))
    if isinstance(e, Flip):
        t = _infer(e.array, env)
        return ArrayType(t.kind, layout.flip(e.d1, t.shape, e.d2))
    raise TypeError(f"unknown node {type(e).__name__}")


def _infer_call(fn: Expr, args: tuple[ArrayType, ...], env: _TypeEnv) -> ArrayType:
    if not isinstance(fn, Lam):
        raise InferenceError(f"not a function value: {type(fn).__name__}")
    if fn.nparams != len(args):
        raise InferenceError(
            f"arity mismatch: {fn.nparams} parameters, {len(args)} arguments"
        )
    env.frames.append(args)
    try:
        return _infer(fn.body, env)
    finally:
        env.frames.pop()


def _consumed_extent(ats: list[ArrayType]) -> int:
    exts = []
    for t in ats:
        if t.is_scalar:
            raise InferenceError("higher-order function over a scalar")
        exts.append(t.shape.outer.extent)
    if len(set(exts)) != 1:
        raise InferenceError(f"outer extent mismatch: {exts}")
    return exts[0]
