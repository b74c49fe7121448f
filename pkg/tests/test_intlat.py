"""Exact lattice helpers against brute-force enumeration oracles."""

import itertools

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from ikrr._intlat import (
    int_rank,
    integer_kernel,
    lattice_ball_count,
    lattice_phase_sum,
    same_span,
    saturate,
)

small_matrices = st.integers(1, 3).flatmap(
    lambda m: st.integers(1, 3).flatmap(
        lambda n: st.lists(
            st.lists(st.integers(-3, 3), min_size=n, max_size=n),
            min_size=m,
            max_size=m,
        )
    )
)


@given(small_matrices)
def test_integer_kernel_annihilates_and_spans(M):
    M = np.array(M, dtype=np.int64)
    K = integer_kernel(M)
    assert np.all(M @ K == 0)
    assert K.shape[1] == M.shape[1] - int_rank(M)
    # saturation: every small integer solution lies in the lattice of K
    n = M.shape[1]
    for v in itertools.product(range(-2, 3), repeat=n):
        v = np.array(v, dtype=np.int64)
        if np.all(M @ v == 0) and K.shape[1] > 0:
            x, *_ = np.linalg.lstsq(K.astype(float), v.astype(float), rcond=None)
            assert np.allclose(K.astype(float) @ x, v, atol=1e-8)
            assert np.allclose(x, np.round(x), atol=1e-6)


def test_saturate_primitive_vector():
    S = saturate(np.array([[2], [4]]))
    assert sorted(np.abs(S.ravel()).tolist()) == [1, 2]


def test_same_span():
    a = np.array([[1], [1]])
    assert same_span(a, 3 * a)
    assert not same_span(np.array([[1], [0]]), np.array([[0], [1]]))


def _brute_phase_sum(B, w, lam):
    B = np.asarray(B)
    r = B.shape[1]
    # |B m|^2 <= lam implies |m| <= sqrt(lam) / sigma_min(B)
    sigma_min = np.linalg.svd(B.astype(float), compute_uv=False).min()
    kmax = int(np.ceil(np.sqrt(max(lam, 0)) / sigma_min)) + 1
    total = 0.0 + 0.0j
    for m in itertools.product(range(-kmax, kmax + 1), repeat=r):
        m = np.array(m)
        if (B @ m) @ (B @ m) <= lam:
            total += np.exp(2j * np.pi * (m @ w))
    return total


@given(
    st.lists(st.lists(st.integers(-2, 2), min_size=2, max_size=2), min_size=2, max_size=2),
    st.lists(st.fractions(0, 1, max_denominator=6), min_size=2, max_size=2),
    st.integers(0, 40),
)
def test_phase_sum_matches_brute_force(B, w, lam):
    B = np.array(B, dtype=np.int64)
    if np.linalg.matrix_rank(B.astype(float)) < 2:
        return
    w = np.array([float(x) for x in w])
    got = lattice_phase_sum(B, w, lam)
    want = _brute_phase_sum(B, w, lam)
    assert abs(got - want) < 1e-8 * max(1.0, abs(want))


def test_gauss_circle_brute_force():
    brute = sum(
        1
        for a in range(-101, 102)
        for b in range(-101, 102)
        if a * a + b * b <= 10_000
    )
    assert lattice_ball_count(np.eye(2, dtype=np.int64), 10_000) == brute


def test_empty_lattice_counts_origin():
    B = np.zeros((2, 0), dtype=np.int64)
    assert lattice_phase_sum(B, None, 5.0) == 1.0
    assert lattice_ball_count(B, 5.0) == 1
