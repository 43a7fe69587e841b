"""Canonical example programs and their input types.

All matrices are row-major; a map over a row-major matrix consumes rows, so
column access goes through an explicit flip on the input.
"""

from __future__ import annotations

from . import layout
from .exprs import (
    ArrayType, Expr, Flip, InputRef, Lam, NZip, Rnz, Var,
    mk_reduce, mk_zip, prim_fn,
)


def dot_program() -> Expr:
    """rnz (+) (*) u v"""
    return Rnz(prim_fn("add"), prim_fn("mul"), (InputRef("u"), InputRef("v")))


def dot_types(m: int, kind="int"):
    vec = ArrayType(kind, layout.row_major_shape([m]))
    return {"u": vec, "v": vec}


def matvec_program() -> Expr:
    """map (\\r -> rnz (+) (*) r u) A  -- the textbook row form."""
    body = Rnz(prim_fn("add"), prim_fn("mul"), (Var(0, 0), InputRef("u")))
    return NZip(Lam(1, body), (InputRef("A"),))


def matvec_types(n: int, m: int, kind="int"):
    return {
        "A": ArrayType(kind, layout.row_major_shape([m, n])),
        "u": ArrayType(kind, layout.row_major_shape([m])),
    }


def matmul_program() -> Expr:
    """map (\\rA -> map (\\cB -> rnz (+) (*) rA cB) (flip 0 B)) A"""
    inner = Rnz(prim_fn("add"), prim_fn("mul"), (Var(1, 0), Var(0, 0)))
    return NZip(
        Lam(1, NZip(Lam(1, inner), (Flip(0, 1, InputRef("B")),))),
        (InputRef("A"),),
    )


def matmul_types(n: int, m: int, p: int, kind="int"):
    return {
        "A": ArrayType(kind, layout.row_major_shape([m, n])),
        "B": ArrayType(kind, layout.row_major_shape([p, m])),
    }


def matvec_of_sums_program() -> Expr:
    """w_i = sum_j (A_ij + B_ij) * (v_j + u_j), written as the unfused
    pipeline: zip over rows, then reduce of a zip of two elementwise sums."""
    add, mul = prim_fn("add"), prim_fn("mul")
    row_sum = mk_zip(add, Var(0, 0), Var(0, 1))
    vec_sum = mk_zip(add, InputRef("v"), InputRef("u"))
    body = mk_reduce(add, mk_zip(mul, row_sum, vec_sum))
    return NZip(Lam(2, body), (InputRef("A"), InputRef("B")))


def matvec_of_sums_types(n: int, m: int, kind="int"):
    mat = ArrayType(kind, layout.row_major_shape([m, n]))
    vec = ArrayType(kind, layout.row_major_shape([m]))
    return {"A": mat, "B": mat, "v": vec, "u": vec}


def weighted_matmul_program() -> Expr:
    """C_ik = sum_j A_ij * B_jk * g_j, unfused: reduce of zip(*) of zip(*)"""
    add, mul = prim_fn("add"), prim_fn("mul")
    pair = mk_zip(mul, Var(1, 0), Var(0, 0))  # rA * cB elementwise
    weighted = mk_zip(mul, pair, InputRef("g"))
    inner = mk_reduce(add, weighted)
    return NZip(
        Lam(1, NZip(Lam(1, inner), (Flip(0, 1, InputRef("B")),))),
        (InputRef("A"),),
    )


def weighted_matmul_types(n: int, m: int, p: int, kind="int"):
    return {
        "A": ArrayType(kind, layout.row_major_shape([m, n])),
        "B": ArrayType(kind, layout.row_major_shape([p, m])),
        "g": ArrayType(kind, layout.row_major_shape([m])),
    }
