"""Naive-loop reference computations.

Ground truth for every equivalence test.  Matrices are nested Python lists,
row-major (A[i][j]); loops run in fixed (i, k, j) order and never get clever.
"""

from __future__ import annotations

from .errors import InferenceError


def oracle_dot(u, v):
    if len(u) != len(v):
        raise InferenceError(f"dot extents differ: {len(u)} vs {len(v)}")
    acc = u[0] * v[0]
    for j in range(1, len(u)):
        acc = acc + u[j] * v[j]
    return acc


def oracle_matvec(A, u):
    n, m = len(A), len(A[0])
    if m != len(u):
        raise InferenceError(f"matvec extents differ: {m} vs {len(u)}")
    out = []
    for i in range(n):
        acc = A[i][0] * u[0]
        for j in range(1, m):
            acc = acc + A[i][j] * u[j]
        out.append(acc)
    return out


def oracle_matmul(A, B):
    n, m = len(A), len(A[0])
    mb, p = len(B), len(B[0])
    if m != mb:
        raise InferenceError(f"matmul extents differ: {m} vs {mb}")
    out = [[None] * p for _ in range(n)]
    for i in range(n):
        for k in range(p):
            acc = A[i][0] * B[0][k]
            for j in range(1, m):
                acc = acc + A[i][j] * B[j][k]
            out[i][k] = acc
    return out


def oracle_matvec_of_sums(A, B, v, u):
    """w_i = sum_j (A_ij + B_ij) * (v_j + u_j)."""
    n, m = len(A), len(A[0])
    out = []
    for i in range(n):
        acc = (A[i][0] + B[i][0]) * (v[0] + u[0])
        for j in range(1, m):
            acc = acc + (A[i][j] + B[i][j]) * (v[j] + u[j])
        out.append(acc)
    return out


def oracle_weighted_matmul(A, B, g):
    """C_ik = sum_j A_ij * B_jk * g_j."""
    n, m = len(A), len(A[0])
    p = len(B[0])
    out = [[None] * p for _ in range(n)]
    for i in range(n):
        for k in range(p):
            acc = (A[i][0] * B[0][k]) * g[0]
            for j in range(1, m):
                acc = acc + (A[i][j] * B[j][k]) * g[j]
            out[i][k] = acc
    return out


def flatten_rows(x):
    """Row-major flattening of a scalar, vector, or nested-list result."""
    if not isinstance(x, list):
        return [x]
    out = []
    for row in x:
        out.extend(flatten_rows(row))
    return out
