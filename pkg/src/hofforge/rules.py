"""Rewrite rules: fusion, exchange, subdivision, plus lambda housekeeping.

Node-level operations take the node they rewrite plus a typing context (the
exchange and subdivision rules need ranks and extents).  They return the
rewritten node or None when the pattern does not match; side-condition
violations on an otherwise matching pattern raise SideConditionError.

``apply_rule`` walks a whole tree, applies a rule at every matching site and
returns one complete rewritten copy per site.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional

from .errors import InferenceError, ShapeError, SideConditionError
from .exprs import (
    App, ArrayType, Expr, Flatten, Flip, Lam, NZip, OP_META, PrimOp, Rnz,
    Subdiv, Var,
    check_scoped, children, hof_count, lift, ncomp, shift, subst, uses_binder,
)
from . import exprs as E


# ---------------------------------------------------------------------------
# typing context for rules


class TypeCtx:
    """Input types plus the binder frames in scope at the current tree
    position."""

    def __init__(self, env: Mapping[str, ArrayType], frames: tuple = ()):
        self.env = env
        self.frames = frames

    def push(self, frame: tuple[ArrayType, ...]) -> "TypeCtx":
        return TypeCtx(self.env, self.frames + (frame,))

    def type(self, e: Expr) -> ArrayType:
        tenv = E._TypeEnv(self.env)
        tenv.frames = list(self.frames)
        return E._infer(e, tenv)

    def rank(self, e: Expr) -> int:
        return self.type(e).shape.rank

    def outer_extent(self, e: Expr) -> int:
        return self.type(e).shape.outer.extent


def _uses_param(e: Expr, up: int, idx: int) -> bool:
    if isinstance(e, Var):
        return e.up == up and e.idx == idx
    d = 1 if isinstance(e, Lam) else 0
    return any(_uses_param(c, up + d, idx) for c in children(e))


def _base_op(f: Expr) -> Optional[str]:
    """Strip lift layers off a reduction function down to its primitive."""
    if isinstance(f, Lam) and f.nparams == 2:
        b = f.body
        if isinstance(b, PrimOp) and b.args == (Var(0, 0), Var(0, 1)):
            return b.op
        if (
            isinstance(b, NZip)
            and b.arrays == (Var(0, 0), Var(0, 1))
            and not uses_binder(b.fn, 0)
        ):
            return _base_op(shift(b.fn, -1))
    return None


def _unlift(f: Expr) -> Optional[Expr]:
    """lift r -> r, or None if f is not a lifted function."""
    if (
        isinstance(f, Lam)
        and f.nparams == 2
        and isinstance(f.body, NZip)
        and f.body.arrays == (Var(0, 0), Var(0, 1))
        and not uses_binder(f.body.fn, 0)
    ):
        return shift(f.body.fn, -1)
    return None


# ---------------------------------------------------------------------------
# lambda housekeeping


def beta_step(e: Expr) -> Optional[Expr]:
    """One beta contraction at this node."""
    if isinstance(e, App) and isinstance(e.fn, Lam):
        if e.fn.nparams != len(e.args):
            raise InferenceError(
                f"arity mismatch: {e.fn.nparams} parameters, {len(e.args)} arguments"
            )
        return subst(e.fn.body, dict(enumerate(e.args)))
    return None


def eta_step(e: Expr) -> Optional[Expr]:
    """lam xs. f xs  ->  f, when no x occurs free in f."""
    if (
        isinstance(e, Lam)
        and isinstance(e.body, App)
        and e.body.args == tuple(Var(0, i) for i in range(e.nparams))
        and not uses_binder(e.body.fn, 0)
    ):
        return shift(e.body.fn, -1)
    return None


def _rewrite_everywhere(e: Expr, step: Callable[[Expr], Optional[Expr]]) -> Expr:
    """Bottom-up single pass."""
    rebuilt = _rebuild(e, [_rewrite_everywhere(c, step) for c in children(e)])
    out = step(rebuilt)
    return rebuilt if out is None else out


def beta_reduce(e: Expr) -> Expr:
    """Normalize all beta redexes (capture-avoiding)."""
    prev = None
    while prev != e:
        prev, e = e, _rewrite_everywhere(e, beta_step)
    return e


def eta_reduce(e: Expr) -> Expr:
    prev = None
    while prev != e:
        prev, e = e, _rewrite_everywhere(e, eta_step)
    return e


def simplify_layouts(e: Expr) -> Expr:
    """Cancel flip-flip and flatten-subdiv pairs introduced by exchanges."""

    def step(x: Expr) -> Optional[Expr]:
        if isinstance(x, Flip):
            if x.d1 == x.d2:
                return x.array
            if (
                isinstance(x.array, Flip)
                and {x.d1, x.d2} == {x.array.d1, x.array.d2}
            ):
                return x.array.array
        if isinstance(x, Flatten) and isinstance(x.array, Subdiv) and x.d == x.array.d:
            return x.array.array
        return None

    prev = None
    while prev != e:
        prev, e = e, _rewrite_everywhere(e, step)
    return e


# ---------------------------------------------------------------------------
# fusion


def fuse_map_map(e: Expr) -> Optional[Expr]:
    """map f . map g  ->  map (f . g), the unary special case."""
    if (
        isinstance(e, NZip)
        and len(e.arrays) == 1
        and isinstance(e.arrays[0], NZip)
        and len(e.arrays[0].arrays) == 1
        and isinstance(e.fn, Lam)
        and e.fn.nparams == 1
        and isinstance(e.arrays[0].fn, Lam)
        and e.arrays[0].fn.nparams == 1
    ):
        inner = e.arrays[0]
        return NZip(ncomp(0, e.fn, inner.fn), inner.arrays)
    return None


def fuse_nzip_nzip(e: Expr, i: int) -> Optional[Expr]:
    """Absorb an inner nzip at argument position i of an outer nzip."""
    if not (isinstance(e, NZip) and 0 <= i < len(e.arrays)):
        return None
    inner = e.arrays[i]
    if not isinstance(inner, NZip):
        return None
    fn = ncomp(i, e.fn, inner.fn)
    arrays = e.arrays[:i] + inner.arrays + e.arrays[i + 1 :]
    return NZip(fn, arrays)


def fuse_rnz_nzip(e: Expr) -> Optional[Expr]:
    """Absorb every nzip argument of an rnz into its zip function."""
    if not isinstance(e, Rnz):
        return None
    changed = False
    zf, arrays = e.zip_fn, e.arrays
    i = 0
    while i < len(arrays):
        a = arrays[i]
        if isinstance(a, NZip):
            zf = ncomp(i, zf, a.fn)
            arrays = arrays[:i] + a.arrays + arrays[i + 1 :]
            changed = True
            i += len(a.arrays)
        else:
            i += 1
    if not changed:
        return None
    return Rnz(e.reduce_fn, zf, arrays)


def fuse_fixpoint(e: Expr) -> Expr:
    """Apply fusion plus beta to a fixed point; eta last.

    Terminates: every fusion strictly decreases the HoF node count and beta
    strictly decreases term size on our redexes.
    """
    e = beta_reduce(e)
    while True:
        before = e

        def step(x: Expr) -> Optional[Expr]:
            out = fuse_map_map(x)
            if out is not None:
                return out
            if isinstance(x, NZip):
                for i, a in enumerate(x.arrays):
                    if isinstance(a, NZip):
                        return fuse_nzip_nzip(x, i)
            return fuse_rnz_nzip(x)

        e = beta_reduce(_rewrite_everywhere(e, step))
        if e == before:
            break
    return eta_reduce(e)


# ---------------------------------------------------------------------------
# exchanges


def exchange_map_map(e: Expr) -> Optional[Expr]:
    """Swap two nested unary maps (dyadic-product pattern); the result is the
    transpose of the original, which the caller tracks as an output flip."""
    if not (
        isinstance(e, NZip)
        and len(e.arrays) == 1
        and isinstance(e.fn, Lam)
        and e.fn.nparams == 1
        and isinstance(e.fn.body, NZip)
        and len(e.fn.body.arrays) == 1
        and isinstance(e.fn.body.fn, Lam)
        and e.fn.body.fn.nparams == 1
    ):
        return None
    outer_arr = e.arrays[0]
    inner = e.fn.body
    inner_arr = inner.arrays[0]
    if uses_binder(inner_arr, 0):
        return None  # inner array depends on the outer binder: not exchangeable
    f = inner.fn.body
    swapped = _swap_levels(f, 0, 1)
    return NZip(
        Lam(1, NZip(Lam(1, swapped), (shift(outer_arr, 1),))),
        (shift(inner_arr, -1),),
    )


def _swap_levels(e: Expr, a: int, b: int, depth: int = 0) -> Expr:
    if isinstance(e, Var):
        if e.up == a + depth:
            return Var(b + depth, e.idx)
        if e.up == b + depth:
            return Var(a + depth, e.idx)
        return e
    d = 1 if isinstance(e, Lam) else 0
    return E._map_children(e, lambda c, lam: _swap_levels(c, a, b, depth + lam))


def _flip_top(m: Expr, ctx: TypeCtx) -> Expr:
    rank = ctx.rank(m)
    if rank < 2:
        raise SideConditionError("exchange needs an array of rank >= 2")
    return simplify_layouts(Flip(rank - 2, rank - 1, m))


def exchange_map_rnz_fwd(e: Expr, ctx: TypeCtx) -> Optional[Expr]:
    """map (\\a -> rnz r m .. a ..) M  ->
    rnz (lift r) (\\a q.. -> map (\\x -> m .. x ..) a) (flip M) .."""
    if not (
        isinstance(e, NZip)
        and len(e.arrays) == 1
        and isinstance(e.fn, Lam)
        and e.fn.nparams == 1
        and isinstance(e.fn.body, Rnz)
    ):
        return None
    m_arr = e.arrays[0]
    rnz = e.fn.body
    pos = [i for i, a in enumerate(rnz.arrays) if a == Var(0, 0)]
    if len(pos) != 1:
        return None
    p = pos[0]
    if (
        uses_binder(rnz.reduce_fn, 0)
        or uses_binder(rnz.zip_fn, 0)
        or any(uses_binder(a, 0) for i, a in enumerate(rnz.arrays) if i != p)
    ):
        return None
    if not isinstance(rnz.zip_fn, Lam):
        return None
    k = rnz.zip_fn.nparams
    r_out = shift(rnz.reduce_fn, -1)
    arrays = tuple(
        _flip_top(m_arr, ctx) if i == p else shift(a, -1)
        for i, a in enumerate(rnz.arrays)
    )
    repl = {j: (Var(0, 0) if j == p else Var(1, j)) for j in range(k)}
    m_body = subst(shift(rnz.zip_fn.body, 1, 1), repl)
    zfn = Lam(k, NZip(Lam(1, m_body), (Var(0, p),)))
    return Rnz(lift(r_out), zfn, arrays)


def exchange_map_rnz_bwd(e: Expr, ctx: TypeCtx) -> Optional[Expr]:
    """rnz (lift r) (\\a q.. -> map (\\x -> body) a) M ..  ->
    map (\\a -> rnz r m .. a ..) (flip M)"""
    if not isinstance(e, Rnz):
        return None
    r = _unlift(e.reduce_fn)
    if r is None:
        return None
    zf = e.zip_fn
    if not (
        isinstance(zf, Lam)
        and isinstance(zf.body, NZip)
        and len(zf.body.arrays) == 1
        and isinstance(zf.body.arrays[0], Var)
        and zf.body.arrays[0].up == 0
        and isinstance(zf.body.fn, Lam)
        and zf.body.fn.nparams == 1
    ):
        return None
    p = zf.body.arrays[0].idx
    k = zf.nparams
    g_body = zf.body.fn.body
    if _uses_param(g_body, 1, p):
        return None  # body uses the whole array param, not just its elements
    m_body = shift(subst(g_body, {0: Var(0, p)}), 1, 1)
    m_fn = Lam(k, m_body)
    new_arrays = tuple(
        Var(0, 0) if i == p else shift(a, 1) for i, a in enumerate(e.arrays)
    )
    body = Rnz(shift(r, 1), m_fn, new_arrays)
    return NZip(Lam(1, body), (_flip_top(e.arrays[p], ctx),))


def exchange_map_rnz(e: Expr, ctx: TypeCtx) -> Optional[Expr]:
    out = exchange_map_rnz_fwd(e, ctx)
    if out is None:
        out = exchange_map_rnz_bwd(e, ctx)
    return out


def exchange_rnz_rnz(e: Expr, ctx: TypeCtx) -> Optional[Expr]:
    """Swap two nested reductions; needs the same reduction operator, marked
    associative and commutative."""
    if not (
        isinstance(e, Rnz)
        and isinstance(e.zip_fn, Lam)
        and isinstance(e.zip_fn.body, Rnz)
    ):
        return None
    n = e.zip_fn.nparams
    inner = e.zip_fn.body
    if len(inner.arrays) < n:
        return None
    if inner.arrays[:n] != tuple(Var(0, j) for j in range(n)):
        return None
    extras = inner.arrays[n:]
    if any(uses_binder(a, 0) for a in extras):
        return None
    if uses_binder(inner.reduce_fn, 0) or uses_binder(inner.zip_fn, 0):
        return None
    # side conditions: identical reduction, associative and commutative
    if shift(inner.reduce_fn, -1) != e.reduce_fn:
        raise SideConditionError("nested reductions differ; cannot exchange")
    op = _base_op(e.reduce_fn)
    if op is None or not (OP_META[op].associative and OP_META[op].commutative):
        raise SideConditionError(
            f"reduction {op or '?'} is not associative+commutative"
        )
    if not isinstance(inner.zip_fn, Lam):
        return None
    f = len(extras)
    m = inner.zip_fn
    if m.nparams != n + f:
        return None
    flipped = tuple(_flip_top(a, ctx) for a in e.arrays)
    extras_out = tuple(shift(a, -1) for a in extras)
    repl = {j: (Var(0, j) if j < n else Var(1, j)) for j in range(n + f)}
    m_body = subst(shift(m.body, 1, 1), repl)
    inner_out = Rnz(
        shift(e.reduce_fn, 1), Lam(n, m_body), tuple(Var(0, j) for j in range(n))
    )
    zfn = Lam(n + f, inner_out)
    return Rnz(e.reduce_fn, zfn, flipped + extras_out)


# ---------------------------------------------------------------------------
# subdivision


def _subdiv_outer(a: Expr, b: int, ctx: TypeCtx) -> Expr:
    t = ctx.type(a)
    if t.shape.is_scalar:
        raise SideConditionError("cannot subdivide a scalar")
    ext = t.shape.outer.extent
    if b < 1 or ext % b != 0:
        raise SideConditionError(f"block size {b} does not divide extent {ext}")
    return Subdiv(t.shape.rank - 1, b, a)


def subdivide_map(e: Expr, b: int, ctx: TypeCtx) -> Optional[Expr]:
    """nzip f xs -> nzip (\\X.. -> nzip f X..) (subdiv xs..): one elementwise
    pass becomes a pass over blocks of a pass over elements."""
    if not (isinstance(e, NZip) and isinstance(e.fn, Lam)):
        return None
    n = len(e.arrays)
    arrays = tuple(_subdiv_outer(a, b, ctx) for a in e.arrays)
    chunk_fn = Lam(n, NZip(shift(e.fn, 1), tuple(Var(0, j) for j in range(n))))
    return NZip(chunk_fn, arrays)


def subdivide_rnz(e: Expr, b: int, ctx: TypeCtx) -> Optional[Expr]:
    """rnz r m xs -> rnz r (\\X.. -> rnz r m X..) (subdiv xs..): reduce block
    results with the same operator; needs associativity only."""
    if not isinstance(e, Rnz):
        return None
    op = _base_op(e.reduce_fn)
    if op is None or not OP_META[op].associative:
        raise SideConditionError(f"reduction {op or '?'} is not associative")
    n = len(e.arrays)
    arrays = tuple(_subdiv_outer(a, b, ctx) for a in e.arrays)
    chunk_zip = Lam(
        n,
        Rnz(shift(e.reduce_fn, 1), shift(e.zip_fn, 1), tuple(Var(0, j) for j in range(n))),
    )
    return Rnz(e.reduce_fn, chunk_zip, arrays)


def subdivide_zip_body(e: Expr, b: int, ctx: TypeCtx) -> Optional[Expr]:
    """Subdivide the map that forms an rnz's zip body; the reduction gets an
    extra lift so it combines block structures elementwise."""
    if not (
        isinstance(e, Rnz)
        and isinstance(e.zip_fn, Lam)
        and isinstance(e.zip_fn.body, NZip)
    ):
        return None
    zf = e.zip_fn
    body = zf.body
    inner_ctx = _push_zip_frame(e, ctx)
    nz = len(body.arrays)
    arrays = tuple(_subdiv_outer(a, b, inner_ctx) for a in body.arrays)
    chunk_fn = Lam(nz, NZip(shift(body.fn, 1), tuple(Var(0, j) for j in range(nz))))
    new_body = NZip(chunk_fn, arrays)
    return Rnz(lift(e.reduce_fn), Lam(zf.nparams, new_body), e.arrays)


def _push_zip_frame(e: Rnz, ctx: TypeCtx) -> TypeCtx:
    from .layout import Shape

    elems = []
    for a in e.arrays:
        t = ctx.type(a)
        elems.append(ArrayType(t.kind, Shape(t.shape.dims[:-1])))
    return ctx.push(tuple(elems))


# ---------------------------------------------------------------------------
# whole-tree application


@dataclass(frozen=True, slots=True)
class RewriteStep:
    rule: str
    path: tuple[int, ...]
    hofs_before: int
    hofs_after: int


@dataclass(frozen=True, slots=True)
class Rule:
    name: str
    fn: Callable  # (node, ctx, b) -> Expr | None
    needs_block: bool = False

    def try_node(self, e: Expr, ctx: TypeCtx, b: Optional[int]) -> Optional[Expr]:
        if self.needs_block and b is None:
            raise SideConditionError(f"rule {self.name} needs a block size")
        return self.fn(e, ctx, b)


RULES: dict[str, Rule] = {
    "beta": Rule("beta", lambda e, ctx, b: beta_step(e)),
    "eta": Rule("eta", lambda e, ctx, b: eta_step(e)),
    "fuse_map_map": Rule("fuse_map_map", lambda e, ctx, b: fuse_map_map(e)),
    "fuse_nzip_nzip": Rule(
        "fuse_nzip_nzip",
        lambda e, ctx, b: next(
            (
                r
                for r in (
                    fuse_nzip_nzip(e, i)
                    for i in range(len(e.arrays) if isinstance(e, NZip) else 0)
                )
                if r is not None
            ),
            None,
        ),
    ),
    "fuse_rnz_nzip": Rule("fuse_rnz_nzip", lambda e, ctx, b: fuse_rnz_nzip(e)),
    "exchange_map_map": Rule("exchange_map_map", lambda e, ctx, b: exchange_map_map(e)),
    "exchange_map_rnz": Rule("exchange_map_rnz", lambda e, ctx, b: exchange_map_rnz(e, ctx)),
    "exchange_rnz_rnz": Rule("exchange_rnz_rnz", lambda e, ctx, b: exchange_rnz_rnz(e, ctx)),
    "subdivide_map": Rule("subdivide_map", lambda e, ctx, b: subdivide_map(e, b, ctx), True),
    "subdivide_rnz": Rule("subdivide_rnz", lambda e, ctx, b: subdivide_rnz(e, b, ctx), True),
    "subdivide_zip_body": Rule(
        "subdivide_zip_body", lambda e, ctx, b: subdivide_zip_body(e, b, ctx), True
    ),
}


def _rebuild(e: Expr, new_children: list[Expr]) -> Expr:
    it = iter(new_children)
    return E._map_children(e, lambda c, lam: next(it))


def _walk_sites(
    e: Expr,
    ctx: TypeCtx,
    path: tuple[int, ...],
    out: list,
    pending_frame=None,
) -> None:
    """Preorder traversal yielding (path, node, ctx), maintaining binder
    frames the way inference does.  ``pending_frame`` carries the parameter
    types a Lam node will bind, decided by its parent."""
    out.append((path, e, ctx))
    kids = children(e)
    if isinstance(e, Lam):
        if pending_frame is None:
            return  # lambda outside function position: no typed descent
        _walk_sites(e.body, ctx.push(pending_frame), path + (0,), out)
    elif isinstance(e, NZip):
        elems = _elem_types(e.arrays, ctx)
        for i, c in enumerate(kids):
            _walk_sites(c, ctx, path + (i,), out, elems if i == 0 else None)
    elif isinstance(e, Rnz):
        elems = _elem_types(e.arrays, ctx)
        zt = E._infer_call(e.zip_fn, elems, _tenv(ctx))
        zm = E._result_of_hof(zt, None)
        for i, c in enumerate(kids):
            frame = (zm, zm) if i == 0 else elems if i == 1 else None
            _walk_sites(c, ctx, path + (i,), out, frame)
    elif isinstance(e, App):
        ats = tuple(ctx.type(a) for a in e.args)
        for i, c in enumerate(kids):
            _walk_sites(c, ctx, path + (i,), out, ats if i == 0 else None)
    else:
        for i, c in enumerate(kids):
            _walk_sites(c, ctx, path + (i,), out)


def _elem_types(arrays, ctx: TypeCtx):
    from .layout import Shape

    elems = []
    for a in arrays:
        t = ctx.type(a)
        if t.shape.is_scalar:
            raise InferenceError("higher-order function over a scalar")
        elems.append(ArrayType(t.kind, Shape(t.shape.dims[:-1])))
    return tuple(elems)


def _tenv(ctx: TypeCtx):
    tenv = E._TypeEnv(ctx.env)
    tenv.frames = list(ctx.frames)
    return tenv


def node_at(e: Expr, path: tuple[int, ...]) -> Expr:
    for i in path:
        e = children(e)[i]
    return e


def replace_at(e: Expr, path: tuple[int, ...], new: Expr) -> Expr:
    if not path:
        return new
    kids = list(children(e))
    kids[path[0]] = replace_at(kids[path[0]], path[1:], new)
    return _rebuild(e, kids)


def apply_rule(
    rule: Rule | str,
    e: Expr,
    env: Mapping[str, ArrayType],
    b: Optional[int] = None,
) -> list[tuple[Expr, RewriteStep]]:
    """Apply a rule at every matching site; one rewritten tree per site, in
    deterministic preorder.  Candidates whose whole tree no longer
    type-checks are dropped (the rewrite was invalid in that context)."""
    if isinstance(rule, str):
        rule = RULES[rule]
    sites: list = []
    _walk_sites(e, TypeCtx(env), (), sites)
    before = hof_count(e)
    results = []
    for path, node, ctx in sites:
        try:
            out = rule.try_node(node, ctx, b)
        except SideConditionError:
            continue
        if out is None:
            continue
        candidate = replace_at(e, path, out)
        try:
            check_scoped(candidate)
            E.infer_shape(candidate, env)
        except (InferenceError, ShapeError):
            continue  # rewrite invalid in this context
        results.append(
            (candidate, RewriteStep(rule.name, path, before, hof_count(candidate)))
        )
    return results
