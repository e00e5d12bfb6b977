import itertools
from math import comb

import numpy as np
import pytest

from plaquette_rcm.cubical import (Cell, Chain, build_box, build_grid, build_torus, dual_complex,
                                   dual_mask, torus_cell_count)


@pytest.mark.parametrize("d,N", [(2, 2), (3, 3), (4, 2), (2, 5)])
def test_torus_counts(d, N):
    cx = build_torus(d, N)
    for k in range(d + 1):
        assert cx.n_cells(k) == comb(d, k) * N ** d == torus_cell_count(d, N, k)


def test_named_counts():
    assert [build_torus(2, 2).n_cells(k) for k in range(3)] == [4, 8, 4]
    assert [build_torus(3, 3, 2).n_cells(k) for k in range(3)] == [27, 81, 81]
    assert build_torus(4, 2, 2).n_cells(2) == 96


def brute_box_count(d, n, k):
    # cells with all vertices in [-n, n]^d
    count = 0
    for base in itertools.product(range(-n, n + 1), repeat=d):
        for D in itertools.combinations(range(d), k):
            if all(base[j] + 1 <= n for j in D):
                count += 1
    return count


def test_box_counts():
    assert [build_box(2, 1).n_cells(k) for k in range(3)] == [9, 12, 4]
    assert [build_box(3, 1).n_cells(k) for k in range(4)] == [27, 54, 36, 8]
    for d, n in [(2, 2), (3, 2), (4, 1)]:
        cx = build_box(d, n)
        assert [cx.n_cells(k) for k in range(d + 1)] == [brute_box_count(d, n, k) for k in range(d + 1)]


def test_wired_frozen_edges():
    cx = build_box(2, 1, boundary="wired")
    frozen = [cx.cells[1][j] for j in np.flatnonzero(cx.frozen_mask(1))]
    # edges lying in the boundary of the square [-1, 1]^2
    expect = [c for c in cx.cells[1]
              if any(c.base[m] in (-1, 1) for m in range(2) if m not in c.dirs)]
    assert sorted(frozen) == sorted(expect)
    assert len(frozen) == 8
    assert not build_box(2, 1).frozen_mask(1).any()


def test_parameter_validation():
    with pytest.raises(ValueError):
        build_torus(2, 1)
    with pytest.raises(ValueError):
        build_torus(0, 3)
    with pytest.raises(ValueError):
        build_torus(2, 3, max_dim=3)
    with pytest.raises(ValueError):
        build_box(2, 1, boundary="periodic")


def test_edge_and_square_boundary():
    cx = build_grid((1, 1))
    e = Cell((0, 0), (0,))
    assert cx.boundary(e) == Chain(0, {Cell((1, 0), ()): 1, Cell((0, 0), ()): -1})
    sq = Cell((0, 0), (0, 1))
    # v1=(0,0), v2=(1,0), v3=(1,1), v4=(0,1): (v1,v2)+(v2,v3)+(v3,v4)-(v1,v4)
    expect = {Cell((0, 0), (0,)): 1, Cell((1, 0), (1,)): 1, Cell((0, 1), (0,)): -1, Cell((0, 0), (1,)): -1}
    assert cx.boundary(sq).entries == expect
    assert cx.boundary(Cell((0, 0), ())) == Chain(-1)


@pytest.mark.parametrize("q", [2, 3, 5])
def test_boundary_of_boundary(q):
    cx = build_torus(3, 3)
    for k in (2, 3):
        A = cx.boundary_matrix(k - 1, q).matmul(cx.boundary_matrix(k, q))
        assert A.is_zero()
    box = build_box(3, 1)
    assert box.boundary_matrix(1, q).matmul(box.boundary_matrix(2, q)).is_zero()


def test_boundary_matrix_shape():
    A = build_torus(2, 2).boundary_matrix(1, 3)
    assert A.shape == (4, 8)
    for col in A.columns:
        assert len(col) == 2 and sum(col.values()) % 3 == 0
    assert build_box(2, 1).boundary_matrix(2, 2).shape == (12, 4)


def test_coboundary_support():
    t2 = build_torus(2, 2)
    assert len(t2.coboundary_support(Cell((0, 0), ()))) == 4
    t3 = build_torus(3, 3)
    assert len(t3.coboundary_support(Cell((1, 1, 1), (0,)))) == 4
    t = build_torus(3, 2)
    for k in range(3):
        for c in t.cells[k]:
            for s, sign in t.coboundary_support(c):
                assert t.boundary(s).entries[c] == sign
        # and every boundary entry is seen from the other side
    for k in range(1, 4):
        for s in t.cells[k]:
            for c, v in t.boundary(s):
                assert (s, v) in t.coboundary_support(c)


def test_canonical_ids():
    cx = build_torus(3, 3)
    for k in range(4):
        for j, c in enumerate(cx.cells[k]):
            assert cx.cell_id(c) == j
            shifted = (tuple(x + 3 for x in c.base), c.dirs)
            assert cx.cell_id(shifted) == j
    with pytest.raises(KeyError):
        build_box(2, 1).canon(((1, 1), (0,)))


def test_cell_json_roundtrip():
    c = Cell((1, 2, 0), (0, 2))
    assert Cell.from_json(c.to_json()) == c


def test_dual_of_full_and_empty():
    cx = build_torus(3, 2)
    assert dual_complex(set(cx.cells[1]), cx, 1) == set()
    assert dual_complex(set(), cx, 1) == set(cx.cells[2])


def test_dual_count_identity():
    cx = build_torus(2, 3)
    rng = np.random.default_rng(0)
    for _ in range(100):
        m = rng.random(cx.n_cells(1)) < rng.random()
        assert m.sum() + dual_mask(m, cx, 1).sum() == cx.n_cells(1)


def test_dual_involution():
    cx = build_torus(4, 2)
    rng = np.random.default_rng(1)
    for _ in range(20):
        m = rng.random(cx.n_cells(2)) < 0.5
        back = dual_mask(dual_mask(m, cx, 2), cx, 2, inverse=True)
        assert (back == m).all()
        cells = {cx.cells[2][j] for j in np.flatnonzero(m)}
        assert dual_complex(dual_complex(cells, cx, 2), cx, 2, inverse=True) == cells


def test_dual_cell_crosses():
    # the dual of an i-cell meets it in exactly its centre: coordinates differ by 1/2
    cx = build_torus(3, 4)
    for c in cx.cells[1][:20]:
        dc = cx.dual_cell(c)
        assert set(dc.dirs) | set(c.dirs) == {0, 1, 2}
        assert cx.dual_cell(dc, inverse=True) == c


def test_dual_rejects_box():
    with pytest.raises(ValueError):
        dual_complex(set(), build_box(2, 1), 1)
