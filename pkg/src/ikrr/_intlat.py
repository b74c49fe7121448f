"""Exact integer-lattice helpers.

Small exact routines used by the spectrum and group-action code:
integer kernels and saturations of lattices (via an integer
diagonalization with unimodular column operations), and sums of unit
phases over lattice points inside a Euclidean ball.  All exact
arithmetic is done with Python ints, so there is no overflow.
"""

from __future__ import annotations

import cmath
import math

import numpy as np


def _diagonalize_columns(M):
    """Bring an integer matrix to diagonal form U M V = D.

    Only the column transform V (unimodular) and the transformed matrix
    are returned; row operations are applied in place without tracking U,
    which is all the kernel computation needs.
    """
    A = [[int(x) for x in row] for row in M]
    m = len(A)
    n = len(A[0]) if m else 0
    V = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    t = 0
    while t < min(m, n):
        # pick the smallest nonzero |entry| in the trailing block as pivot
        pivot = None
        for i in range(t, m):
            for j in range(t, n):
                if A[i][j] != 0 and (pivot is None or abs(A[i][j]) < abs(A[pivot[0]][pivot[1]])):
                    pivot = (i, j)
        if pivot is None:
            break
        pi, pj = pivot
        if pi != t:
            A[t], A[pi] = A[pi], A[t]
        if pj != t:
            for row in A:
                row[t], row[pj] = row[pj], row[t]
            for row in V:
                row[t], row[pj] = row[pj], row[t]
        # clear row t and column t; remainders shrink the pivot, so this terminates
        dirty = True
        while dirty:
            dirty = False
            for i in range(t + 1, m):
                if A[i][t] != 0:
                    q = A[i][t] // A[t][t]
                    for j in range(n):
                        A[i][j] -= q * A[t][j]
                    if A[i][t] != 0:
                        A[t], A[i] = A[i], A[t]
                        dirty = True
            for j in range(t + 1, n):
                if A[t][j] != 0:
                    q = A[t][j] // A[t][t]
                    for i in range(m):
                        A[i][j] -= q * A[i][t]
                    for i in range(n):
                        V[i][j] -= q * V[i][t]
                    if A[t][j] != 0:
                        for row in A:
                            row[t], row[j] = row[j], row[t]
                        for row in V:
                            row[t], row[j] = row[j], row[t]
                        dirty = True
        t += 1
    rank = sum(1 for i in range(min(m, n)) if A[i][i] != 0)
    return A, V, rank


def integer_kernel(M) -> np.ndarray:
    """Basis of {k in Z^n : M k = 0} as columns of an (n, r) array.

    The returned basis generates the full integer kernel (it is
    automatically saturated).
    """
    M = np.atleast_2d(np.asarray(M, dtype=object))
    m, n = M.shape
    if m == 0 or n == 0:
        return np.eye(n, dtype=np.int64)
    _, V, rank = _diagonalize_columns(M.tolist())
    cols = [[V[i][j] for j in range(rank, n)] for i in range(n)]
    return np.array(cols, dtype=np.int64).reshape(n, n - rank)


def int_rank(M) -> int:
    M = np.atleast_2d(np.asarray(M, dtype=object))
    if M.size == 0:
        return 0
    _, _, rank = _diagonalize_columns(M.tolist())
    return rank


def saturate(B: np.ndarray) -> np.ndarray:
    """Saturated lattice span(B) ∩ Z^d for an integer (d, r) basis B."""
    B = np.asarray(B, dtype=np.int64)
    if B.shape[1] == 0:
        return B
    annihilator = integer_kernel(B.T)          # (d, d-r)
    return integer_kernel(annihilator.T)       # (d, r)


def same_span(B1: np.ndarray, B2: np.ndarray) -> bool:
    r1, r2 = int_rank(B1), int_rank(B2)
    return r1 == r2 == int_rank(np.hstack([B1, B2]))


def _phase_interval_sum(lo: int, hi: int, w: float) -> complex:
    """Sum of exp(2*pi*i*m*w) over integers m in [lo, hi]."""
    if hi < lo:
        return 0.0
    count = hi - lo + 1
    if abs(w - round(w)) < 1e-12:
        return complex(count)
    q = cmath.exp(2j * math.pi * w)
    return cmath.exp(2j * math.pi * lo * w) * (q**count - 1.0) / (q - 1.0)


def lattice_phase_sum(B: np.ndarray, w, lam: float) -> complex:
    """Sum exp(2*pi*i*(m . w)) over {m in Z^r : |B m|^2 <= lam}.

    B is an integer (d, r) matrix with independent columns; w has one
    phase per lattice coordinate m_j.  With w = 0 this counts lattice
    points in the ball of radius sqrt(lam).
    """
    B = np.asarray(B, dtype=np.int64)
    r = B.shape[1]
    if lam < 0:
        return 0.0
    if r == 0:
        return 1.0
    w = np.zeros(r) if w is None else np.asarray(w, dtype=float)
    G = (B.T @ B).astype(float)
    R = np.linalg.cholesky(G).T            # upper triangular, |B m|^2 = |R m|^2
    diag2 = np.diag(R) ** 2
    mu = R / np.diag(R)[:, None]

    def rec(i: int, budget: float, shift: np.ndarray, phase: complex) -> complex:
        # coordinate i ranges over R_ii^2 (m_i + shift_i)^2 <= budget
        half = math.sqrt(max(budget, 0.0) / diag2[i])
        lo = math.ceil(-shift[i] - half - 1e-12)
        hi = math.floor(-shift[i] + half + 1e-12)
        if i == 0:
            return phase * _phase_interval_sum(lo, hi, w[0])
        total = 0.0 + 0.0j
        for m_i in range(lo, hi + 1):
            rem = budget - diag2[i] * (m_i + shift[i]) ** 2
            if rem < -1e-9:
                continue
            new_shift = shift + mu[:, i] * m_i
            total += rec(i - 1, max(rem, 0.0), new_shift,
                         phase * cmath.exp(2j * math.pi * m_i * w[i]))
        return total

    return rec(r - 1, float(lam), np.zeros(r), 1.0 + 0.0j)


def lattice_ball_count(B: np.ndarray, lam: float) -> int:
    """Number of lattice points of the column lattice of B with |k|^2 <= lam."""
    value = lattice_phase_sum(B, None, lam)
    return int(round(value.real))
