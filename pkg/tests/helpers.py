"""Shared test oracles: naive loop contractions and finite differences.

These deliberately avoid the library's vectorized kernels so each test
compares two independent computations.
"""

import numpy as np


def contract3_loops(T, v):
    d1, d2, m = T.shape
    out = np.zeros((d1, d2))
    for i in range(d1):
        for j in range(d2):
            acc = 0.0
            for k in range(m):
                acc += T[i][j][k] * v[k]
            out[i][j] = acc
    return out


def contract4_loops(U, M):
    d1, d2, d3, d4 = U.shape
    out = np.zeros((d1, d2))
    for i in range(d1):
        for j in range(d2):
            acc = 0.0
            for k in range(d3):
                for l in range(d4):
                    acc += U[i][j][k][l] * M[k][l]
            out[i][j] = acc
    return out


def matvec_loops(A, x):
    n, m = A.shape
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(m):
            acc += A[i][j] * x[j]
        out[i] = acc
    return out


def central_diff(f, arr, eps=1e-4):
    """d f / d arr by central differences, one entry at a time."""
    g = np.zeros_like(arr)
    flat = arr.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gf[i] = (fp - fm) / (2 * eps)
    return g


def fd_compare(analytic, numeric, mask_floor=1e-8):
    """Max relative error over entries where |a| + |n| exceeds the floor."""
    worst = 0.0
    a = analytic.ravel()
    n = numeric.ravel()
    for i in range(a.size):
        if abs(a[i]) + abs(n[i]) <= mask_floor:
            continue
        worst = max(worst, abs(a[i] - n[i]) / max(abs(a[i]), abs(n[i])))
    return worst
