"""Direct recursive evaluation of expressions over views.

This is the semantic reference: every rewrite and every lowered loop nest is
checked against it.  Higher-order results are materialized into fresh
row-major buffers; layout nodes only reinterpret a view's shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from . import exprs, layout
from .errors import InferenceError
from .exprs import (
    App, Const, Expr, Flatten, Flip, InputRef, Lam, NZip, PrimOp, Rnz, Subdiv, Var,
)
from .layout import View

Scalar = (int, float)


@dataclass(frozen=True, slots=True)
class Closure:
    lam: Lam
    frames: tuple[tuple, ...]


def _prim(op: str, a, b):
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
    if op == "max":
        return a if a >= b else b
    raise InferenceError(f"unknown primitive {op!r}")


def evaluate(e: Expr, inputs: Mapping[str, View]):
    """Evaluate a closed expression; returns a scalar or a View."""
    return _eval(e, inputs, ())


def _eval(e: Expr, inputs, frames):
    if isinstance(e, InputRef):
        if e.name not in inputs:
            raise InferenceError(f"unbound input {e.name!r}")
        return inputs[e.name]
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return frames[-1 - e.up][e.idx]
    if isinstance(e, Lam):
        return Closure(e, frames)
    if isinstance(e, App):
        fn = _eval(e.fn, inputs, frames)
        args = tuple(_eval(a, inputs, frames) for a in e.args)
        return _call(fn, args, inputs)
    if isinstance(e, PrimOp):
        a = _eval(e.args[0], inputs, frames)
        b = _eval(e.args[1], inputs, frames)
        if not isinstance(a, Scalar) or not isinstance(b, Scalar):
            raise InferenceError(f"{e.op} applied to non-scalar value")
        return _prim(e.op, a, b)
    if isinstance(e, NZip):
        fn = _eval(e.fn, inputs, frames)
        views = [_as_view(_eval(a, inputs, frames)) for a in e.arrays]
        n = _common_outer(views)
        results = [
            _call(fn, tuple(_slice(v, i) for v in views), inputs)
            for i in range(n)
        ]
        return _materialize_stack(results)
    if isinstance(e, Rnz):
        red = _eval(e.reduce_fn, inputs, frames)
        zfn = _eval(e.zip_fn, inputs, frames)
        views = [_as_view(_eval(a, inputs, frames)) for a in e.arrays]
        n = _common_outer(views)
        acc = _call(zfn, tuple(_slice(v, 0) for v in views), inputs)
        for i in range(1, n):
            nxt = _call(zfn, tuple(_slice(v, i) for v in views), inputs)
            acc = _call(red, (acc, nxt), inputs)
        return _materialize(acc)
    if isinstance(e, Subdiv):
        v = _as_view(_eval(e.array, inputs, frames))
        return v.relayout(layout.subdiv(e.d, e.b, v.shape))
    if isinstance(e, Flatten):
        v = _as_view(_eval(e.array, inputs, frames))
        return v.relayout(layout.flatten(e.d, v.shape))
    if isinstance(e, Flip):
        v = _as_view(_eval(e.array, inputs, frames))
        return v.relayout(layout.flip(e.d1, v.shape, e.d2))
    raise TypeError(f"unknown node {type(e).__name__}")


def _call(fn, args, inputs):
    if not isinstance(fn, Closure):
        raise InferenceError(f"calling a non-function value {type(fn).__name__}")
    if fn.lam.nparams != len(args):
        raise InferenceError(
            f"arity mismatch: {fn.lam.nparams} parameters, {len(args)} arguments"
        )
    return _eval(fn.lam.body, inputs, fn.frames + (tuple(args),))


def _as_view(v) -> View:
    if isinstance(v, View):
        return v
    raise InferenceError(f"expected an array value, got {type(v).__name__}")


def _slice(v: View, i: int):
    """Outer slice, unwrapping rank-0 results to plain scalars."""
    s = v.outer_slice(i)
    return s.item() if s.shape.is_scalar else s


def _common_outer(views):
    exts = []
    for v in views:
        if v.shape.is_scalar:
            raise InferenceError("higher-order function over a scalar view")
        exts.append(v.shape.outer.extent)
    if len(set(exts)) != 1:
        raise InferenceError(f"outer extent mismatch: {exts}")
    return exts[0]


def _flat(v) -> list:
    """Elements of a value in logical row-major order."""
    if isinstance(v, Scalar):
        return [v]
    v = _as_view(v)
    if v.shape.is_scalar:
        return [v.item()]
    out = []
    for i in range(v.shape.outer.extent):
        out.extend(_flat(v.outer_slice(i)))
    return out


def _logical_extents(v) -> tuple[int, ...]:
    if isinstance(v, Scalar):
        return ()
    return v.shape.extents


def _materialize(v):
    """Copy a value into a fresh contiguous row-major view (scalars pass
    through)."""
    if isinstance(v, Scalar):
        return v
    buf = _flat(v)
    return View(buf, 0, layout.row_major_shape(_logical_extents(v)))


def _materialize_stack(results):
    """Stack per-slice results into one fresh row-major view, the consumed
    dimension outermost."""
    first = results[0]
    ext = _logical_extents(first)
    buf = []
    for r in results:
        if _logical_extents(r) != ext:
            raise InferenceError("nzip produced slices of differing shape")
        buf.extend(_flat(r))
    return View(buf, 0, layout.row_major_shape(list(ext) + [len(results)]))


def flat_result(e: Expr, inputs: Mapping[str, View]) -> list:
    """Evaluate and return elements in logical row-major order."""
    return _flat(evaluate(e, inputs))


def view_of_lists(data, kind="int") -> View:
    """Build a row-major view from a (possibly nested) Python list, outermost
    dimension first."""
    ext = []
    probe = data
    while isinstance(probe, list):
        ext.append(len(probe))
        probe = probe[0]
    flat = []

    def walk(x):
        if isinstance(x, list):
            for y in x:
                walk(y)
        else:
            flat.append(float(x) if kind == "float" else x)

    walk(data)
    return View(flat, 0, layout.row_major_shape(list(reversed(ext))))
