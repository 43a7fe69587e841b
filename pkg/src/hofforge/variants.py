"""Spine extraction and variant enumeration by adjacent exchanges.

The spine is the top-down list of nested higher-order functions.  Since it
is a list, all rearrangements are permutations, generated by adjacent
transpositions (Steinhaus-Johnson-Trotter order), each realized by one
exchange rule.  Two interchangeable reductions (same associative+commutative
operator) are never swapped with each other: swapping them relabels the same
computation, which is how n!/multiplicity counting falls out.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

from . import exprs as E
from . import layout, rules
from .errors import SideConditionError, SpineError
from .exprs import (
    ArrayType, Expr, Flatten, Flip, InputRef, Lam, NZip, Rnz, Subdiv, Var,
    check_scoped, children, hof_count, infer_shape, shift,
)
from .rules import TypeCtx

LayoutOp = tuple  # ("subdiv", d, b) | ("flip", d1, d2)


@dataclass(frozen=True, slots=True)
class SpineEntry:
    kind: str  # "map" | "rnz"
    label: str
    path: tuple[int, ...]
    arrays: tuple[Expr, ...]


@dataclass(frozen=True, slots=True)
class Spine:
    entries: tuple[SpineEntry, ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(e.label for e in self.entries)

    def __len__(self):
        return len(self.entries)


@dataclass(frozen=True)
class Variant:
    name: str
    labels: tuple[str, ...]
    expr: Expr
    input_layouts: dict[str, tuple[LayoutOp, ...]] = field(default_factory=dict)
    orientation: tuple[LayoutOp, ...] = ()
    steps: tuple[str, ...] = ()  # exchange chain from the base program

    @property
    def spine_str(self) -> str:
        return " ".join(self.labels)


# ---------------------------------------------------------------------------
# canonical form: layout chains live on inputs


def hoist_layouts(e: Expr) -> Expr:
    """Float Subdiv/Flip applied to bound variables up onto the array the
    binding HoF consumes.  Valid because the introduced ops act strictly
    below the consumed dimension; only single-occurrence binders move (the
    rules never duplicate array subtrees)."""
    while True:
        out = _hoist_once(e)
        if out is None:
            return e
        e = out


def _hoist_once(e: Expr) -> Optional[Expr]:
    if isinstance(e, (NZip, Rnz)):
        fn = e.fn if isinstance(e, NZip) else e.zip_fn
        if isinstance(fn, Lam):
            found = _find_hoistable(fn.body, 0)
            if found is not None:
                path_in_body, node = found
                idx = node.array.idx
                if _count_binder(fn.body, 0, idx) == 1:
                    new_body = _replace_in(fn.body, path_in_body, node.array)
                    arrays = list(e.arrays)
                    arrays[idx] = _reapply(node, arrays[idx])
                    new_fn = Lam(fn.nparams, new_body)
                    if isinstance(e, NZip):
                        return NZip(new_fn, tuple(arrays))
                    return Rnz(e.reduce_fn, new_fn, tuple(arrays))
    for i, c in enumerate(children(e)):
        out = _hoist_once(c)
        if out is not None:
            kids = list(children(e))
            kids[i] = out
            return rules._rebuild(e, kids)
    return None


def _find_hoistable(body: Expr, depth: int):
    """Innermost-first search for a layout op applied directly to a variable
    bound `depth` lambdas out."""
    for i, c in enumerate(children(body)):
        d = depth + (1 if isinstance(body, Lam) else 0)
        found = _find_hoistable(c, d)
        if found is not None:
            path, node = found
            return (i,) + path, node
    if (
        isinstance(body, (Subdiv, Flip))
        and isinstance(body.array, Var)
        and body.array.up == depth
    ):
        return (), body
    return None


def _count_binder(e: Expr, up: int, idx: int, depth: int = 0) -> int:
    if isinstance(e, Var):
        return 1 if (e.up == up + depth and e.idx == idx) else 0
    d = 1 if isinstance(e, Lam) else 0
    return sum(_count_binder(c, up, idx, depth + d) for c in children(e))


def _replace_in(e: Expr, path: tuple[int, ...], new: Expr) -> Expr:
    if not path:
        return new
    kids = list(children(e))
    kids[path[0]] = _replace_in(kids[path[0]], path[1:], new)
    return rules._rebuild(e, kids)


def _reapply(op_node: Expr, target: Expr) -> Expr:
    if isinstance(op_node, Subdiv):
        return Subdiv(op_node.d, op_node.b, target)
    if isinstance(op_node, Flip):
        return Flip(op_node.d1, op_node.d2, target)
    raise TypeError(type(op_node).__name__)


def canonicalize(e: Expr) -> Expr:
    return rules.simplify_layouts(hoist_layouts(e))


# ---------------------------------------------------------------------------
# spine extraction


def extract_spine(e: Expr) -> Spine:
    entries: list[SpineEntry] = []
    stack: list[tuple[Expr, ...]] = []
    node, path = e, ()
    while True:
        if not isinstance(node, (NZip, Rnz)):
            if hof_count(node) != 0:
                raise SpineError(
                    "not a linear nesting: higher-order functions branch "
                    f"inside {type(node).__name__}"
                )
            break
        if isinstance(node, NZip):
            fn, kind, fn_child = node.fn, "map", 0
        else:
            fn, kind, fn_child = node.zip_fn, "rnz", 1
        if not isinstance(fn, Lam):
            raise SpineError("higher-order function without a literal lambda")
        label = kind if kind == "rnz" else "map" + "".join(
            _root_input(a, stack) for a in node.arrays
        )
        entries.append(SpineEntry(kind, label, path, node.arrays))
        stack.append(node.arrays)
        path = path + (fn_child, 0)
        node = fn.body
    return Spine(tuple(entries))


def _root_input(a: Expr, stack) -> str:
    while isinstance(a, (Subdiv, Flatten, Flip)):
        a = a.array
    if isinstance(a, InputRef):
        return a.name
    if isinstance(a, Var):
        frame = stack[len(stack) - 1 - a.up]
        return _root_input(frame[a.idx], stack[: len(stack) - 1 - a.up])
    raise SpineError(f"cannot trace array to an input: {type(a).__name__}")


def input_layout_chains(e: Expr) -> dict[str, tuple[LayoutOp, ...]]:
    """Layout ops applied to each input, in application order."""
    chains: dict[str, tuple[LayoutOp, ...]] = {}

    def walk(x: Expr, pending: list[LayoutOp]):
        if isinstance(x, Subdiv):
            walk(x.array, [("subdiv", x.d, x.b)] + pending)
            return
        if isinstance(x, Flip):
            walk(x.array, [("flip", x.d1, x.d2)] + pending)
            return
        if isinstance(x, Flatten):
            walk(x.array, [("flatten", x.d)] + pending)
            return
        if isinstance(x, InputRef):
            chains[x.name] = tuple(pending)
            return
        for c in children(x):
            walk(c, [])

    walk(e, [])
    return chains


def apply_chain(shape: layout.Shape, chain: tuple[LayoutOp, ...]) -> layout.Shape:
    for op in chain:
        if op[0] == "subdiv":
            shape = layout.subdiv(op[1], op[2], shape)
        elif op[0] == "flip":
            shape = layout.flip(op[1], shape, op[2])
        elif op[0] == "flatten":
            shape = layout.flatten(op[1], shape)
        else:
            raise ValueError(op[0])
    return shape


def format_chain(chain: tuple[LayoutOp, ...]) -> str:
    # no commas: the string is used as one CSV cell
    parts = []
    for op in chain:
        if op[0] == "subdiv":
            parts.append(f"subdiv({op[1]}:{op[2]})")
        elif op[0] == "flip":
            parts.append(f"flip({op[1]}:{op[2]})")
        else:
            parts.append(f"{op[0]}({op[1]})")
    return ";".join(parts) if parts else "-"


# ---------------------------------------------------------------------------
# adjacent swaps


def _ctx_at(e: Expr, path: tuple[int, ...], env) -> TypeCtx:
    sites: list = []
    rules._walk_sites(e, TypeCtx(env), (), sites)
    for p, _, ctx in sites:
        if p == path:
            return ctx
    raise SpineError(f"path {path} not reachable in typed walk")


def swap_adjacent(e: Expr, i: int, env: Mapping[str, ArrayType]):
    """Exchange spine entries i and i+1; returns (expr, orientation_delta).

    Dispatches on the entry kinds to the matching exchange rule and restores
    the canonical hoisted form afterwards.
    """
    spine = extract_spine(e)
    if not 0 <= i < len(spine.entries) - 1:
        raise SpineError(f"no adjacent pair at position {i}")
    top, bot = spine.entries[i], spine.entries[i + 1]
    node = rules.node_at(e, top.path)
    ctx = _ctx_at(e, top.path, env)
    if top.kind == "map" and bot.kind == "map":
        out = rules.exchange_map_map(node)
        delta = (_map_map_flip(spine, i),)
    elif top.kind == "map" and bot.kind == "rnz":
        out = rules.exchange_map_rnz_fwd(node, ctx)
        delta = ()
    elif top.kind == "rnz" and bot.kind == "map":
        out = rules.exchange_map_rnz_bwd(node, ctx)
        delta = ()
    else:
        out = rules.exchange_rnz_rnz(node, ctx)
        delta = ()
    if out is None:
        raise SideConditionError(
            f"cannot exchange {top.label} with {bot.label} at position {i}"
        )
    new = canonicalize(rules.replace_at(e, top.path, out))
    check_scoped(new)
    infer_shape(new, env)
    return new, delta


def _map_map_flip(spine: Spine, i: int) -> LayoutOp:
    """Swapping the maps at spine positions i, i+1 transposes the two output
    dimensions they produce."""
    nmaps = sum(1 for s in spine.entries if s.kind == "map")
    t = sum(1 for s in spine.entries[: i + 1] if s.kind == "map") - 1
    d = nmaps - 2 - t
    return ("flip", d, d + 1)


# ---------------------------------------------------------------------------
# Steinhaus-Johnson-Trotter enumeration


def sjt_permutations(n: int):
    """All permutations of range(n) by adjacent transpositions; yields
    (perm, swap_position), swap_position None for the first."""
    perm = list(range(n))
    dirs = [-1] * n
    yield tuple(perm), None
    while True:
        mobile = -1
        mobile_pos = -1
        for i, v in enumerate(perm):
            j = i + dirs[v]
            if 0 <= j < n and perm[j] < v and (mobile < 0 or v > mobile):
                mobile, mobile_pos = v, i
        if mobile < 0:
            return
        j = mobile_pos + dirs[mobile]
        perm[mobile_pos], perm[j] = perm[j], perm[mobile_pos]
        for v in range(mobile + 1, n):
            dirs[v] = -dirs[v]
        yield tuple(perm), min(mobile_pos, j)


def _interchangeable(a: SpineEntry, b: SpineEntry, e: Expr, env) -> bool:
    """Entries whose swap merely relabels the computation: reductions with
    the same associative+commutative operator."""
    if a.kind != "rnz" or b.kind != "rnz":
        return False
    na = rules.node_at(e, a.path)
    nb = rules.node_at(e, b.path)
    oa = rules._base_op(na.reduce_fn)
    ob = rules._base_op(nb.reduce_fn)
    return (
        oa is not None
        and oa == ob
        and E.OP_META[oa].associative
        and E.OP_META[oa].commutative
    )


@dataclass(frozen=True)
class EnumerationResult:
    variants: tuple[Variant, ...]
    pruned: tuple[tuple[str, ...], ...]  # label sequences blocked by side conditions


def enumerate_all(
    e: Expr, env: Mapping[str, ArrayType], name_prefix: str = "v"
) -> EnumerationResult:
    e = canonicalize(e)
    infer_shape(e, env)
    spine = extract_spine(e)
    k = len(spine)
    base = Variant(
        f"{name_prefix}0", spine.labels, e, input_layout_chains(e), ()
    )
    if k == 1:
        return EnumerationResult((base,), ())

    built: dict[tuple[int, ...], tuple[Expr, tuple[LayoutOp, ...], tuple[str, ...]]] = {
        tuple(range(k)): (e, (), ())
    }
    blocked: set[tuple[int, ...]] = set()

    sjt = [perm for perm, _ in sjt_permutations(k)]
    progress = True
    while progress:
        progress = False
        for perm in sjt[1:]:
            if perm in built:
                continue
            for pos in range(k - 1):
                prev = list(perm)
                prev[pos], prev[pos + 1] = prev[pos + 1], prev[pos]
                prev_t = tuple(prev)
                if prev_t not in built:
                    continue
                prev_expr, prev_orient, prev_steps = built[prev_t]
                prev_spine = extract_spine(prev_expr)
                a, b = prev_spine.entries[pos], prev_spine.entries[pos + 1]
                if _interchangeable(a, b, prev_expr, env):
                    # swapping interchangeable reductions relabels the same
                    # computation: same expression, identified later
                    built[perm] = (prev_expr, prev_orient, prev_steps)
                else:
                    try:
                        new_expr, delta = swap_adjacent(prev_expr, pos, env)
                    except SideConditionError:
                        blocked.add(perm)
                        continue
                    rule = _swap_rule_name(a.kind, b.kind)
                    built[perm] = (
                        new_expr,
                        prev_orient + delta,
                        prev_steps + (f"{rule}@{pos}",),
                    )
                blocked.discard(perm)
                progress = True
                break

    variants: list[Variant] = [base]
    seen = {E.alpha_canonicalize(e)}
    idx = 1
    for perm in sjt[1:]:
        if perm not in built:
            continue
        expr, orient, steps = built[perm]
        key = E.alpha_canonicalize(expr)
        if key in seen:
            continue
        seen.add(key)
        sp = extract_spine(expr)
        variants.append(
            Variant(
                f"{name_prefix}{idx}",
                sp.labels,
                expr,
                input_layout_chains(expr),
                orient,
                steps,
            )
        )
        idx += 1
    pruned = tuple(
        tuple(spine.labels[j] for j in perm) for perm in sorted(blocked - set(built))
    )
    return EnumerationResult(tuple(variants), pruned)


def _swap_rule_name(top_kind: str, bot_kind: str) -> str:
    if top_kind == "map" and bot_kind == "map":
        return "exchange_map_map"
    if top_kind == "rnz" and bot_kind == "rnz":
        return "exchange_rnz_rnz"
    return "exchange_map_rnz"


# ---------------------------------------------------------------------------
# family construction by subdivision


def subdivide_spine(
    e: Expr, env: Mapping[str, ArrayType], b: int, mode: str
) -> tuple[Expr, tuple[LayoutOp, ...]]:
    """Apply one of the block-subdivision recipes to a fused program:
    ``rnz`` splits each reduction once, ``rnz2`` twice, ``maps`` splits each
    elementwise pass, ``all`` does both.  Returns the program plus the
    reshaping its output picks up (from map splits only)."""
    if mode == "none":
        return canonicalize(e), ()
    if mode not in ("rnz", "rnz2", "maps", "all"):
        raise ValueError(f"unknown subdivision mode {mode!r}")
    e = canonicalize(e)
    orientation: list[LayoutOp] = []
    if mode in ("rnz", "rnz2", "all"):
        e = _subdiv_rnz_once(e, env, b)
        if mode == "rnz2":
            e = _subdiv_rnz_once(e, env, b, innermost=True)
    if mode in ("maps", "all"):
        # split each original map once, bottom-up so shallower paths stay
        # valid; each split shifts the output dims above it up by one
        spine = extract_spine(e)
        map_idx = [i for i, s in enumerate(spine.entries) if s.kind == "map"]
        nmaps = len(map_idx)
        shift = 0
        for i in reversed(map_idx):
            s = spine.entries[i]
            node = rules.node_at(e, s.path)
            ctx = _ctx_at(e, s.path, env)
            out = rules.subdivide_map(node, b, ctx)
            if out is None:
                continue
            t = sum(1 for x in spine.entries[: i + 1] if x.kind == "map") - 1
            orientation.append(("subdiv", (nmaps - 1 - t) + shift, b))
            shift += 1
            e = rules.replace_at(e, s.path, out)
        e = canonicalize(e)
    infer_shape(e, env)
    return e, tuple(orientation)


def _subdiv_rnz_once(e: Expr, env, b: int, innermost: bool = False) -> Expr:
    spine = extract_spine(e)
    rnzs = [s for s in spine.entries if s.kind == "rnz"]
    if not rnzs:
        raise SpineError("no reduction to subdivide")
    target = rnzs[-1] if innermost else rnzs[0]
    node = rules.node_at(e, target.path)
    ctx = _ctx_at(e, target.path, env)
    out = rules.subdivide_rnz(node, b, ctx)
    if out is None:
        raise SpineError("reduction cannot be subdivided")
    return canonicalize(rules.replace_at(e, target.path, out))


# ---------------------------------------------------------------------------
# named matrix-vector family


def matvec_family(e: Expr, b: int, env: Mapping[str, ArrayType]) -> list[Variant]:
    """The six rearrangements of the textbook matvec: family 1 subdivides the
    reduction (vector subdivided), family 2 subdivides the elementwise pass of
    the column form (vector kept whole)."""
    spine = extract_spine(canonicalize(e))
    if spine.labels != ("mapA", "rnz"):
        raise SpineError(f"not a textbook matvec spine: {spine.labels}")

    ctx0 = TypeCtx(env)
    # family 1: subdivide the reduction of the row form
    row = canonicalize(e)
    rnz_path = extract_spine(row).entries[1].path
    node = rules.node_at(row, rnz_path)
    sub = rules.subdivide_rnz(node, b, _ctx_at(row, rnz_path, env))
    fam1_base = canonicalize(rules.replace_at(row, rnz_path, sub))

    # family 2: exchange to the column form, then subdivide its map
    col = canonicalize(rules.exchange_map_rnz_fwd(row, ctx0))
    sub2 = rules.subdivide_zip_body(col, b, TypeCtx(env))
    fam2_base = canonicalize(sub2)

    out: list[Variant] = []
    fam1 = enumerate_all(fam1_base, env).variants
    for v in fam1:
        pos = v.labels.index("mapA")
        out.append(
            Variant("1" + "abc"[pos], v.labels, v.expr, v.input_layouts, v.orientation)
        )
    fam2 = enumerate_all(fam2_base, env).variants
    orient2 = (("subdiv", 0, b),)
    for v in fam2:
        pos = v.labels.index("rnz")
        out.append(
            Variant(
                "2" + "abc"[pos],
                v.labels,
                v.expr,
                v.input_layouts,
                orient2 + v.orientation,
            )
        )
    out.sort(key=lambda v: v.name)
    return out


# ---------------------------------------------------------------------------
# output order bookkeeping


def output_offsets(orientation: tuple[LayoutOp, ...], original_extents) -> list[int]:
    """For each element of the variant's (row-major) output, the offset into
    the original program's row-major output that must hold the same value."""
    s = layout.row_major_shape(list(original_extents))
    s = apply_chain(s, orientation)
    return [layout.linear_index(s, idx) for idx in s.indices()]
