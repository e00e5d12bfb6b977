import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plaquette_rcm.cubical import build_torus
from plaquette_rcm.fq_linalg import (IncrementalRank, SparseMatFq, check_prime, in_column_span,
                                     kernel_basis, nullity, random_kernel_element, rank,
                                     rank_delta_on_column_add, solve)
from oracle import brute_kernel_size, dense_rank


def random_matrix(rng, q, max_dim=8, density=0.4):
    r, c = rng.integers(1, max_dim + 1, size=2)
    A = rng.integers(0, q, size=(r, c)) * (rng.random((r, c)) < density)
    return A


matrices = st.tuples(st.sampled_from([2, 3, 5, 7]), st.integers(1, 7), st.integers(1, 7), st.integers(0, 2 ** 32 - 1))


def test_basic_ranks():
    assert rank(SparseMatFq.identity(2, 3)) == 2
    assert rank(SparseMatFq(3, 4, 5)) == 0
    assert rank(build_torus(2, 2).boundary_matrix(1, 2)) == 3
    assert nullity(build_torus(2, 2).boundary_matrix(1, 2)) == 5


def test_prime_check():
    for q in (2, 3, 5, 101):
        assert check_prime(q) == q
    for q in (0, 1, 4, 6, 2.5):
        with pytest.raises(ValueError):
            check_prime(q)


@settings(max_examples=150, deadline=None)
@given(matrices)
def test_rank_matches_dense(args):
    q, r, c, seed = args
    rng = np.random.default_rng(seed)
    A = rng.integers(0, q, size=(r, c)) * (rng.random((r, c)) < 0.5)
    M = SparseMatFq.from_dense(A, q)
    assert rank(M) == dense_rank(A, q)
    assert rank(M.transpose()) == rank(M)
    assert (M.to_dense() == A % q).all()


@settings(max_examples=100, deadline=None)
@given(matrices)
def test_kernel_basis(args):
    q, r, c, seed = args
    rng = np.random.default_rng(seed)
    A = rng.integers(0, q, size=(r, c)) * (rng.random((r, c)) < 0.5)
    M = SparseMatFq.from_dense(A, q)
    basis = kernel_basis(M)
    assert len(basis) + rank(M) == c
    for v in basis:
        assert not ((A @ v) % q).any()
    if basis:
        B = np.array(basis)
        assert dense_rank(B, q) == len(basis)
        # one vector per free column: distinct leading "free" coordinates
        last = [int(np.flatnonzero(v)[-1]) for v in basis]
        assert len(set(last)) == len(last)
    if c <= 5 and q ** c <= 4000:
        assert brute_kernel_size(A, q) == q ** len(basis)


def test_kernel_examples():
    assert kernel_basis(SparseMatFq.identity(3, 5)) == []
    (v,) = kernel_basis(SparseMatFq.from_dense([[1, 1]], 2))
    assert v.tolist() == [1, 1]


def test_kernel_deterministic():
    A = build_torus(2, 3).boundary_matrix(1, 3)
    a = [v.tolist() for v in kernel_basis(A)]
    b = [v.tolist() for v in kernel_basis(A)]
    assert a == b


def test_solve_examples():
    I = SparseMatFq.identity(4, 5)
    b = np.array([1, 4, 0, 3])
    assert (solve(I, b) == b).all()
    A = SparseMatFq.from_dense([[1, 2, 0], [0, 1, 1]], 5)
    assert (solve(A, np.zeros(2, dtype=int)) == 0).all()
    with pytest.raises(ValueError):
        solve(A, np.zeros(3, dtype=int))


def test_solve_random_consistent():
    rng = np.random.default_rng(7)
    for _ in range(100):
        A = random_matrix(rng, 5)
        M = SparseMatFq.from_dense(A, 5)
        x0 = rng.integers(0, 5, size=A.shape[1])
        b = (A @ x0) % 5
        x = solve(M, b)
        assert x is not None and ((A @ x - b) % 5 == 0).all()


@settings(max_examples=100, deadline=None)
@given(matrices)
def test_solve_none_iff_rank_increases(args):
    q, r, c, seed = args
    rng = np.random.default_rng(seed)
    A = rng.integers(0, q, size=(r, c)) * (rng.random((r, c)) < 0.4)
    b = rng.integers(0, q, size=r)
    x = solve(SparseMatFq.from_dense(A, q), b)
    inconsistent = dense_rank(np.column_stack([A, b]), q) > dense_rank(A, q)
    assert (x is None) == inconsistent
    assert in_column_span(SparseMatFq.from_dense(A, q), b) == (not inconsistent)


def test_random_kernel_element_uniform():
    # kernel of [1 1 1] over F_3 has 9 elements; each should appear ~equally
    M = SparseMatFq.from_dense([[1, 1, 1]], 3)
    rng = np.random.default_rng(0)
    counts = {}
    for _ in range(9000):
        v = tuple(random_kernel_element(M, rng))
        assert sum(v) % 3 == 0
        counts[v] = counts.get(v, 0) + 1
    assert len(counts) == 9
    assert max(counts.values()) < 1150 and min(counts.values()) > 850


def test_incremental_simple():
    st_ = IncrementalRank(3, 4)
    assert rank_delta_on_column_add(st_, {0: 1, 2: 2}) == 1
    assert rank_delta_on_column_add(st_, {0: 1, 2: 2}) == 0
    assert rank_delta_on_column_add(st_, {}) == 0


@pytest.mark.parametrize("q", [2, 3])
def test_incremental_vs_recompute(q):
    # 1000 random add/remove sequences over the edge columns of T^2_3
    cx = build_torus(2, 3)
    B = cx.boundary_matrix(1, q)
    rng = np.random.default_rng(q)
    for _ in range(1000):
        inc = IncrementalRank(q, B.rows)
        present = []
        for _ in range(12):
            if present and (rng.random() < 0.4 or len(present) == B.cols):
                k = present.pop(rng.integers(len(present)))
                before = inc.rank
                assert inc.removal_delta(k) == before - rank(B.select_columns(present))
                inc.remove(k)
            else:
                k = int(rng.choice([j for j in range(B.cols) if j not in present]))
                before = rank(B.select_columns(present))
                d = inc.add(k, B.columns[k])
                present.append(k)
                assert d == rank(B.select_columns(present)) - before
            assert inc.rank == rank(B.select_columns(present))


def test_matmul_and_matvec():
    rng = np.random.default_rng(3)
    for _ in range(20):
        A = rng.integers(0, 7, size=(4, 5))
        Bm = rng.integers(0, 7, size=(5, 3))
        x = rng.integers(0, 7, size=5)
        MA, MB = SparseMatFq.from_dense(A, 7), SparseMatFq.from_dense(Bm, 7)
        assert (MA.matmul(MB).to_dense() == (A @ Bm) % 7).all()
        assert (MA.matvec(x) == (A @ x) % 7).all()
