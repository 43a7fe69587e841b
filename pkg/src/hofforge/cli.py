"""Command-line front end: parse -> rewrite -> enumerate -> lower ->
execute/simulate -> report.

Exit codes: 0 success, 1 semantic mismatch, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import hashlib
import sys

import numpy as np

from . import cachesim, exprs, interp, jit, lower, rules, runtime, sexp, variants
from .errors import HofforgeError, ParseError
from .exprs import ArrayType, Flip, InputRef
from .layout import Shape, row_major_shape


def _load(path: str):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as ex:
        raise ParseError(str(ex))
    return sexp.parse_program(text)


def _env_of(shapes: dict[str, Shape], kind: str):
    return {name: ArrayType(kind, s) for name, s in shapes.items()}


def _scaled_env(shapes: dict[str, Shape], size: int, kind: str):
    """Re-instantiate every declared row-major input at extent ``size`` in
    each dimension (benchmarks use one size knob for square problems)."""
    env = {}
    for name, s in shapes.items():
        if s != row_major_shape(list(s.extents)):
            raise ParseError(
                f"input {name!r} is not row-major; --size scaling needs "
                "row-major declarations"
            )
        env[name] = ArrayType(kind, row_major_shape([size] * s.rank))
    return env


def _digest(e) -> str:
    return hashlib.sha256(repr(exprs.alpha_canonicalize(e)).encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------


def cmd_rewrite(args) -> int:
    e, shapes = _load(args.input)
    env = _env_of(shapes, "int")
    if args.fixpoint:
        out = rules.fuse_fixpoint(e)
        print(f"; fixpoint hofs {exprs.hof_count(e)} -> {exprs.hof_count(out)}")
        print(sexp.print_program(out, shapes))
        return 0
    if not args.rule:
        print("error: need --rule or --fixpoint", file=sys.stderr)
        return 2
    if args.rule not in rules.RULES:
        print(f"error: unknown rule {args.rule!r}", file=sys.stderr)
        return 2
    results = rules.apply_rule(args.rule, e, env, b=args.block)
    for expr2, step in results:
        path = " ".join(map(str, step.path))
        print(f"(step {step.rule} (path {path}) (hofs {step.hofs_before} {step.hofs_after}))")
        print(sexp.print_program(expr2, shapes))
    if not results:
        print("; no matching site")
    return 0


def cmd_lower(args) -> int:
    e, shapes = _load(args.input)
    env = _env_of(shapes, "float" if args.float_kind else "int")
    nest = lower.lower(rules.fuse_fixpoint(e), env)
    sys.stdout.write(lower.dump(nest))
    return 0


def cmd_enumerate(args) -> int:
    e, shapes = _load(args.input)
    env = _env_of(shapes, "int")
    fused = rules.fuse_fixpoint(e)
    if args.subdiv_rnz:
        fused, _ = variants.subdivide_spine(fused, env, args.subdiv_rnz, "rnz")
    if args.subdiv_maps:
        fused, _ = variants.subdivide_spine(fused, env, args.subdiv_maps, "maps")
    res = variants.enumerate_all(fused, env)
    for v in res.variants:
        chains = "|".join(
            f"{n}:{variants.format_chain(c)}" for n, c in sorted(v.input_layouts.items())
        )
        print(f"{v.name}\t{v.spine_str}\t{chains}\t{_digest(v.expr)}")
    for labels in res.pruned:
        print(f"; pruned {' '.join(labels)} (side condition)")
    return 0


def cmd_explain(args) -> int:
    e, shapes = _load(args.input)
    env = _env_of(shapes, "int")
    fused = rules.fuse_fixpoint(e)
    print(f"hofs: {exprs.hof_count(e)} -> {exprs.hof_count(fused)} after fusion")
    sp = variants.extract_spine(variants.canonicalize(fused))
    print("spine:", " ".join(sp.labels))
    for name, shp in sorted(shapes.items()):
        print(f"input {name}: {shp}")
    t = exprs.infer_shape(e, env)
    print(f"result: {t}")
    res = variants.enumerate_all(fused, env)
    print(f"variants: {len(res.variants)}")
    for v in res.variants:
        steps = " -> ".join(v.steps) if v.steps else "(original)"
        print(f"  {v.name}: {v.spine_str}   via {steps}")
    try:
        fam = variants.matvec_family(fused, 2, env)
    except HofforgeError:
        return 0
    print("block-subdivided family (b=2):")
    for v in fam:
        chains = " ".join(
            f"{n}={variants.format_chain(c)}" for n, c in sorted(v.input_layouts.items())
        )
        print(f"  {v.name}: {v.spine_str}   {chains}")
    return 0


def _bench_rows(args, e, shapes):
    kind_env = _scaled_env(shapes, args.size, "float")
    int_env = _scaled_env(shapes, args.size, "int")
    fused = rules.fuse_fixpoint(e)
    fused, orientation = variants.subdivide_spine(
        fused, int_env, args.block, args.subdiv
    )
    res = variants.enumerate_all(fused, int_env)
    cfg = cachesim.CacheConfig(
        line_bytes=args.cache_line,
        capacity_bytes=args.cache_kib * 1024,
        associativity=args.cache_ways,
    )
    rows = []
    int_inputs = None
    float_inputs = None
    for v in res.variants:
        nest_i = lower.lower(v.expr, int_env)
        if int_inputs is None:
            int_inputs = runtime.make_inputs(nest_i, "int")
        out = jit.run_jit(nest_i, int_inputs)
        checksum = int(np.sum(out, dtype=np.int64))
        ms = 0.0
        if args.repeats > 0:
            nest_f = lower.lower(v.expr, kind_env)
            if float_inputs is None:
                float_inputs = runtime.make_inputs(nest_f, "float")
            ms = runtime.time_variant(nest_f, float_inputs, max(3, args.repeats))
        hits = misses = 0
        if not args.no_sim:
            st = jit.simulate_jit(nest_i, cfg)
            hits, misses = st.hits, st.misses
        rows.append(
            {
                "variant_id": v.name,
                "spine": v.spine_str,
                "layouts": "|".join(
                    f"{n}:{variants.format_chain(c)}"
                    for n, c in sorted(v.input_layouts.items())
                ),
                "checksum": checksum,
                "median_ms": ms,
                "misses": misses,
                "hits": hits,
                "acc_elems": lower.max_accumulator_elems(nest_i),
            }
        )
    if not args.no_sort:
        rows.sort(key=lambda r: r["median_ms"])
    return rows


def cmd_bench(args) -> int:
    e, shapes = _load(args.program)
    if args.subdiv != "none" and args.size % args.block:
        print(
            f"error: size {args.size} not divisible by block {args.block}",
            file=sys.stderr,
        )
        return 2
    rows = _bench_rows(args, e, shapes)
    header = "variant_id,spine,layouts,checksum,median_ms,misses,hits,acc_elems"
    lines = [header]
    for r in rows:
        lines.append(
            f"{r['variant_id']},{r['spine']},{r['layouts']},{r['checksum']},"
            f"{r['median_ms']:.3f},{r['misses']},{r['hits']},{r['acc_elems']}"
        )
    text = "\n".join(lines) + "\n"
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(text)
    sys.stdout.write(text)
    checks = {r["checksum"] for r in rows}
    if len(checks) > 1:
        print("error: checksums differ across variants", file=sys.stderr)
        return 1
    return 0


def cmd_check(args) -> int:
    e, shapes = _load(args.program)
    sizes = [int(s) for s in args.sizes.split(",") if s]
    failure = None
    for size in sizes:
        msg = _check_at_size(e, shapes, size, args.block, args.corrupt_rule)
        if msg:
            failure = (size, msg)
            break  # sizes ascend: first failure is the minimized counterexample
    if failure:
        size, msg = failure
        print(f"FAIL at size {size}: {msg}")
        return 1
    print(f"pass: sizes {sizes}")
    return 0


def _check_at_size(e, shapes, size, block, corrupt_rule):
    int_env = _scaled_env(shapes, size, "int")
    views = {}
    rng = np.random.default_rng(runtime.fill_seed() + size)
    for name, t in int_env.items():
        n = t.shape.max_linear_index() + 1
        buf = [int(x) for x in rng.integers(-8, 9, size=n)]
        views[name] = interp.View(buf, 0, t.shape)

    truth = interp.flat_result(e, views)
    ext = exprs.infer_shape(e, int_env).shape.extents

    fused = rules.fuse_fixpoint(e)
    if interp.flat_result(fused, views) != truth:
        return "fuse_fixpoint changed the result"

    for rule_name in ("fuse_map_map", "fuse_nzip_nzip", "fuse_rnz_nzip", "beta", "eta"):
        for cand, step in rules.apply_rule(rule_name, e, int_env):
            cand = _maybe_corrupt(cand, rule_name, corrupt_rule)
            if interp.flat_result(cand, views) != truth:
                return f"rule {rule_name} at {step.path} changed the result"

    fam = [("none", fused)]
    if block and size % block == 0:
        for mode in ("rnz", "maps"):
            try:
                sub, orient = variants.subdivide_spine(fused, int_env, block, mode)
            except HofforgeError:
                continue
            fam.append((mode, (sub, orient)))
    # plain enumeration of the fused program
    res = variants.enumerate_all(fused, int_env)
    for v in res.variants:
        expr2 = _maybe_corrupt_variant(v, corrupt_rule)
        got = interp.flat_result(expr2, views)
        want = [truth[o] for o in variants.output_offsets(v.orientation, ext)]
        if got != want:
            return f"variant {v.spine_str} diverges (steps: {' -> '.join(v.steps)})"
        nest = lower.lower(expr2, int_env)
        ran = runtime.run(nest, {n: views[n].buffer for n in nest.input_order})
        if list(ran) != got:
            return f"lowered variant {v.spine_str} diverges from interpretation"
    for mode, built in fam[1:]:
        sub, orient = built
        res2 = variants.enumerate_all(sub, int_env)
        for v in res2.variants:
            got = interp.flat_result(v.expr, views)
            want = [
                truth[o]
                for o in variants.output_offsets(orient + v.orientation, ext)
            ]
            if got != want:
                return f"subdivided ({mode}) variant {v.spine_str} diverges"
    return None


def _maybe_corrupt(expr, rule_name, corrupt_rule):
    if corrupt_rule and rule_name == corrupt_rule:
        return _flip_first_input(expr)
    return expr


def _maybe_corrupt_variant(v, corrupt_rule):
    if corrupt_rule and any(s.startswith(corrupt_rule) for s in v.steps):
        return _flip_first_input(v.expr)
    return v.expr


def _flip_first_input(expr):
    """Mutation hook: transpose one input's layout without telling anyone,
    which any sound semantic check must catch (square inputs)."""
    done = {"d": False}

    def walk(x):
        if isinstance(x, InputRef) and not done["d"]:
            done["d"] = True
            return Flip(0, 1, x)
        kids = [walk(c) for c in exprs.children(x)]
        return rules._rebuild(x, kids)

    return walk(expr)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="hofforge",
        description="rewrite, enumerate, lower, execute and profile "
        "map/zip/reduce array programs",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("rewrite", help="apply one rewrite rule or fuse to fixpoint")
    p.add_argument("--input", required=True)
    p.add_argument("--rule")
    p.add_argument("--block", type=int, default=None)
    p.add_argument("--fixpoint", action="store_true")
    p.set_defaults(fn=cmd_rewrite)

    p = sub.add_parser("enumerate", help="list all spine rearrangements")
    p.add_argument("--input", required=True)
    p.add_argument("--subdiv-rnz", type=int, default=None)
    p.add_argument("--subdiv-maps", type=int, default=None)
    p.set_defaults(fn=cmd_enumerate)

    p = sub.add_parser("lower", help="print the loop nest")
    p.add_argument("--input", required=True)
    p.add_argument("--dump", action="store_true")
    p.add_argument("--float", dest="float_kind", action="store_true")
    p.set_defaults(fn=cmd_lower)

    p = sub.add_parser("explain", help="spine, shapes and rewrite chains")
    p.add_argument("input")
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("check", help="oracle-check rules and variants")
    p.add_argument("program")
    p.add_argument("--sizes", default="2,4,8")
    p.add_argument("--block", type=int, default=2)
    p.add_argument("--corrupt-rule", dest="corrupt_rule", default=None,
                   help=argparse.SUPPRESS)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("bench", help="time and simulate every variant")
    p.add_argument("program")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--block", type=int, default=16)
    p.add_argument("--subdiv", choices=["none", "rnz", "maps", "rnz2", "all"],
                   default="none")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--csv", default=None)
    p.add_argument("--no-sort", action="store_true")
    p.add_argument("--no-sim", action="store_true")
    p.add_argument("--cache-line", type=int, default=64)
    p.add_argument("--cache-kib", type=int, default=32)
    p.add_argument("--cache-ways", type=int, default=8)
    p.set_defaults(fn=cmd_bench)

    try:
        args = ap.parse_args(argv)
    except SystemExit as ex:
        return 2 if ex.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ParseError as ex:
        print(f"parse error: {ex}", file=sys.stderr)
        return 2
    except HofforgeError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
