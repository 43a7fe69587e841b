import itertools
import random

import pytest

from hofforge import lower, oracles, programs
from hofforge.errors import SpineError
from hofforge.exprs import (
    InputRef, Lam, Rnz, Var, identity_fn, prim_fn, ArrayType,
)
from hofforge.interp import flat_result, view_of_lists
from hofforge.layout import row_major_shape
from hofforge.variants import (
    canonicalize, enumerate_all, extract_spine, matvec_family,
    output_offsets, sjt_permutations, subdivide_spine, swap_adjacent,
)

rng = random.Random(77)


def vec(n):
    return [rng.randint(-4, 4) for _ in range(n)]


def mat(n, m):
    return [vec(m) for _ in range(n)]


def test_spine_of_naive_matmul():
    sp = extract_spine(canonicalize(programs.matmul_program()))
    assert sp.labels == ("mapA", "mapB", "rnz")
    assert [e.kind for e in sp.entries] == ["map", "map", "rnz"]


def test_spine_of_dot():
    sp = extract_spine(programs.dot_program())
    assert sp.labels == ("rnz",)


def test_spine_of_subdivided_matmul():
    env = programs.matmul_types(4, 4, 4)
    e, _ = subdivide_spine(programs.matmul_program(), env, 2, "rnz")
    assert extract_spine(e).labels == ("mapA", "mapB", "rnz", "rnz")


def test_nonlinear_nesting_rejected():
    # zip of two reductions inside one body: branching spine
    from hofforge.exprs import NZip, PrimOp

    e = NZip(
        Lam(
            1,
            PrimOp(
                "add",
                (
                    Rnz(prim_fn("add"), identity_fn(), (Var(0, 0),)),
                    Rnz(prim_fn("max"), identity_fn(), (Var(0, 0),)),
                ),
            ),
        ),
        (InputRef("A"),),
    )
    with pytest.raises(SpineError):
        extract_spine(e)


def test_sjt_sequence_adjacency():
    perms = list(sjt_permutations(4))
    assert len(perms) == 24
    assert len({p for p, _ in perms}) == 24
    for (prev, _), (cur, pos) in zip(perms, perms[1:]):
        diff = [i for i in range(4) if prev[i] != cur[i]]
        assert diff == [pos, pos + 1]
        assert prev[pos] == cur[pos + 1] and prev[pos + 1] == cur[pos]


def test_swap_adjacent_and_involution():
    env = programs.matmul_types(3, 4, 5)
    e = canonicalize(programs.matmul_program())
    one, delta = swap_adjacent(e, 1, env)  # (mapB, rnz) -> (rnz, mapB)
    assert extract_spine(one).labels == ("mapA", "rnz", "mapB")
    assert delta == ()
    back, _ = swap_adjacent(one, 1, env)
    assert back == e


def test_swap_twice_is_identity_everywhere():
    env = programs.matmul_types(4, 6, 4)
    e = canonicalize(programs.matmul_program())
    sub, _ = subdivide_spine(e, env, 2, "rnz")
    for v in enumerate_all(sub, env).variants:
        k = len(v.labels)
        for pos in range(k - 1):
            try:
                once, _ = swap_adjacent(v.expr, pos, env)
            except Exception:
                continue
            back, _ = swap_adjacent(once, pos, env)
            assert back == v.expr, (v.spine_str, pos)


def test_enumerate_counts():
    env = programs.matmul_types(4, 6, 4)
    e = canonicalize(programs.matmul_program())
    assert len(enumerate_all(e, env).variants) == 6

    sub, _ = subdivide_spine(e, env, 2, "rnz")
    res = enumerate_all(sub, env)
    assert len(res.variants) == 12

    assert len(enumerate_all(programs.dot_program(), programs.dot_types(6)).variants) == 1


def test_enumerate_covers_all_label_sequences():
    env = programs.matmul_types(4, 6, 4)
    e = canonicalize(programs.matmul_program())
    sub, _ = subdivide_spine(e, env, 2, "rnz")
    got = {v.spine_str for v in enumerate_all(sub, env).variants}
    want = {
        " ".join(p)
        for p in itertools.permutations(["mapA", "mapB", "rnz", "rnz"])
    }
    assert got == want


def test_enumeration_count_formula():
    # 3 distinct entries -> 3!, 4 entries with two interchangeable -> 4!/2!
    env = programs.matmul_types(4, 6, 4)
    e = canonicalize(programs.matmul_program())
    assert len(enumerate_all(e, env).variants) == 6  # 3!
    sub, _ = subdivide_spine(e, env, 2, "rnz")
    assert len(enumerate_all(sub, env).variants) == 12  # 4!/2!


def test_consecutive_variants_one_swap_apart():
    # with no interchangeable entries nothing is deduplicated, so output
    # follows the raw SJT sequence: each spine is one adjacent transposition
    # away from the previous one
    env = programs.matmul_types(3, 4, 5)
    e = canonicalize(programs.matmul_program())
    res = enumerate_all(e, env)
    for prev, cur in zip(res.variants, res.variants[1:]):
        diff = [i for i in range(3) if prev.labels[i] != cur.labels[i]]
        assert len(diff) == 2 and diff[1] == diff[0] + 1
        assert prev.labels[diff[0]] == cur.labels[diff[1]]
        assert prev.labels[diff[1]] == cur.labels[diff[0]]
        assert len(cur.steps) >= 1  # built by adjacent exchanges from base


def test_variants_all_evaluate_equal():
    n, m, p = 3, 4, 5
    env = programs.matmul_types(n, m, p)
    e = canonicalize(programs.matmul_program())
    A, B = mat(n, m), mat(m, p)
    views = {"A": view_of_lists(A), "B": view_of_lists(B)}
    want = oracles.flatten_rows(oracles.oracle_matmul(A, B))
    for v in enumerate_all(e, env).variants:
        got = flat_result(v.expr, views)
        assert got == [want[o] for o in output_offsets(v.orientation, (p, n))]


def test_layout_chains_reproduce_shapes():
    from hofforge.variants import apply_chain

    env = programs.matmul_types(4, 6, 4)
    e = canonicalize(programs.matmul_program())
    sub, _ = subdivide_spine(e, env, 2, "rnz")
    for v in enumerate_all(sub, env).variants:
        nest = lower.lower(v.expr, env)
        for name, chain in v.input_layouts.items():
            assert apply_chain(env[name].shape, chain) == nest.inputs[name]


def test_blocked_swap_is_pruned():
    # sum of row maxima: differing reductions can never change order
    prog = Rnz(
        prim_fn("add"),
        Lam(1, Rnz(prim_fn("max"), identity_fn(), (Var(0, 0),))),
        (InputRef("X"),),
    )
    env = {"X": ArrayType("int", row_major_shape([4, 3]))}
    res = enumerate_all(prog, env)
    assert len(res.variants) == 1
    assert res.pruned == (("rnz", "rnz"),)


def test_map_rnz_exchange_needs_no_flags():
    # operand order is preserved, so even a subtraction reduction exchanges
    prog = canonicalize(
        __import__("hofforge.exprs", fromlist=["NZip"]).NZip(
            Lam(1, Rnz(prim_fn("sub"), prim_fn("mul"), (Var(0, 0), InputRef("u")))),
            (InputRef("A"),),
        )
    )
    env = {
        "A": ArrayType("int", row_major_shape([4, 3])),
        "u": ArrayType("int", row_major_shape([4])),
    }
    res = enumerate_all(prog, env)
    assert len(res.variants) == 2
    A, u = mat(3, 4), vec(4)
    views = {"A": view_of_lists(A), "u": view_of_lists(u)}
    want = flat_result(res.variants[0].expr, views)
    assert flat_result(res.variants[1].expr, views) == want


# -- the six-case matvec family ------------------------------------------------


def expected_chains(b):
    return {
        "1a": (("subdiv", 0, b),),
        "1b": (("subdiv", 0, b), ("flip", 1, 2)),
        "1c": (("subdiv", 0, b), ("flip", 1, 2), ("flip", 0, 1)),
        "2a": (("flip", 0, 1), ("subdiv", 0, b)),
        "2b": (("flip", 0, 1), ("subdiv", 0, b), ("flip", 1, 2)),
        "2c": (("flip", 0, 1), ("subdiv", 0, b), ("flip", 1, 2), ("flip", 0, 1)),
    }


def test_matvec_family_names_spines_chains():
    env = programs.matvec_types(6, 4)
    fam = matvec_family(programs.matvec_program(), 2, env)
    assert [v.name for v in fam] == ["1a", "1b", "1c", "2a", "2b", "2c"]
    spines = {v.name: v.spine_str for v in fam}
    assert spines["1a"] == "mapA rnz rnz"
    assert spines["2c"] == "mapA mapA rnz"
    chains = expected_chains(2)
    for v in fam:
        assert v.input_layouts["A"] == chains[v.name], v.name
        if v.name.startswith("1"):
            assert v.input_layouts["u"] == (("subdiv", 0, 2),)
        else:
            assert v.input_layouts.get("u", ()) == ()


def test_matvec_family_oracle_equal():
    n, m, b = 6, 4, 2
    env = programs.matvec_types(n, m)
    fam = matvec_family(programs.matvec_program(), b, env)
    A, u = mat(n, m), vec(m)
    views = {"A": view_of_lists(A), "u": view_of_lists(u)}
    want = oracles.oracle_matvec(A, u)
    for v in fam:
        got = flat_result(v.expr, views)
        assert got == [want[o] for o in output_offsets(v.orientation, (n,))], v.name


def test_matvec_family_accumulators():
    n, m, b = 6, 4, 2
    env = programs.matvec_types(n, m)
    fam = {v.name: v for v in matvec_family(programs.matvec_program(), b, env)}
    acc_1a = lower.lower(fam["1a"].expr, env).accumulators
    assert all(a.elems == 1 for a in acc_1a)
    for name in ("1b", "1c"):
        nest = lower.lower(fam[name].expr, env)
        assert lower.max_accumulator_elems(nest) == n, name


def test_matvec_family_rejects_other_programs():
    env = programs.matmul_types(4, 4, 4)
    with pytest.raises(SpineError):
        matvec_family(programs.matmul_program(), 2, env)


def test_subdivide_spine_maps_mode():
    env = programs.matmul_types(4, 6, 4)
    e = canonicalize(programs.matmul_program())
    sub, orient = subdivide_spine(e, env, 2, "maps")
    assert extract_spine(sub).labels == ("mapA", "mapA", "mapB", "mapB", "rnz")
    A, B = mat(4, 6), mat(6, 4)
    views = {"A": view_of_lists(A), "B": view_of_lists(B)}
    want = oracles.flatten_rows(oracles.oracle_matmul(A, B))
    got = flat_result(sub, views)
    assert got == [want[o] for o in output_offsets(orient, (4, 4))]


def test_subdivide_spine_all_mode_counts_and_values():
    # both maps split, reduction split: chunk maps can never move below
    # their element maps, the two reductions are interchangeable, so
    # 6!/(2*2*2) = 90 rearrangements are reachable
    env = programs.matmul_types(4, 4, 4)
    e = canonicalize(programs.matmul_program())
    sub, orient = subdivide_spine(e, env, 2, "all")
    res = enumerate_all(sub, env)
    assert len(res.variants) == 90
    A, B = mat(4, 4), mat(4, 4)
    views = {"A": view_of_lists(A), "B": view_of_lists(B)}
    want = oracles.flatten_rows(oracles.oracle_matmul(A, B))
    for v in (res.variants[0], res.variants[45], res.variants[-1]):
        got = flat_result(v.expr, views)
        exp = [want[o] for o in output_offsets(orient + v.orientation, (4, 4))]
        assert got == exp, v.spine_str


def test_subdivide_spine_rnz2_mode():
    env = programs.matmul_types(4, 8, 4)
    e = canonicalize(programs.matmul_program())
    sub, _ = subdivide_spine(e, env, 2, "rnz2")
    assert extract_spine(sub).labels == ("mapA", "mapB", "rnz", "rnz", "rnz")
    A, B = mat(4, 8), mat(8, 4)
    views = {"A": view_of_lists(A), "B": view_of_lists(B)}
    assert flat_result(sub, views) == oracles.flatten_rows(oracles.oracle_matmul(A, B))
