"""Cubical complexes: tori T^d_N and boxes [-n, n]^d.

A cell is an axis-parallel unit cube given by its base vertex and the sorted
tuple of directions it spans (0-based axes).  Cells are canonically oriented
by their increasing direction tuple.
"""

from __future__ import annotations

import itertools
from math import comb
from typing import NamedTuple

import numpy as np

from .fq_linalg import SparseMatFq


class Cell(NamedTuple):
    base: tuple
    dirs: tuple

    @property
    def dim(self):
        return len(self.dirs)

    def to_json(self):
        return {"base": list(self.base), "dirs": list(self.dirs)}

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(obj["base"]), tuple(obj["dirs"]))


class Chain:
    """Sparse integer chain of fixed dimension, {Cell: coefficient}.

    Coefficients are plain integers until ``mod(q)`` is applied.
    """

    def __init__(self, dim, entries=None):
        self.dim = dim
        self.entries = {c: v for c, v in (entries or {}).items() if v != 0}

    def mod(self, q):
        return Chain(self.dim, {c: v % q for c, v in self.entries.items()})

    def __add__(self, other):
        if other.dim != self.dim:
            raise ValueError("chain dimensions differ")
        out = dict(self.entries)
        for c, v in other.entries.items():
            out[c] = out.get(c, 0) + v
        return Chain(self.dim, out)

    def __neg__(self):
        return Chain(self.dim, {c: -v for c, v in self.entries.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, k):
        return Chain(self.dim, {c: k * v for c, v in self.entries.items()})

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, Chain) and self.dim == other.dim and self.entries == other.entries

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries.items())

    def __repr__(self):
        return f"Chain(dim={self.dim}, {self.entries!r})"


class Complex:
    """Immutable cubical complex with dense per-dimension cell ids.

    Built through :func:`build_torus`, :func:`build_box` or :func:`build_grid`.
    """

    def __init__(self, geometry, d, max_dim, lo, hi, N=None, n=None, boundary="free"):
        self.geometry = geometry
        self.d = d
        self.max_dim = max_dim
        self.N = N
        self.n = n
        self.bc = boundary
        self.lo = tuple(lo)
        self.hi = tuple(hi)
        self.cells = [self._enumerate(k) for k in range(max_dim + 1)]
        self.index = [{c: j for j, c in enumerate(cs)} for cs in self.cells]
        self._bd_cache = {}

    @property
    def is_torus(self):
        return self.geometry == "torus"

    def _enumerate(self, k):
        axes = range(self.d)
        if self.is_torus:
            ranges = [range(self.N)] * self.d
            return [Cell(b, D) for b in itertools.product(*ranges)
                    for D in itertools.combinations(axes, k)]
        ranges = [range(a, b + 1) for a, b in zip(self.lo, self.hi)]
        out = []
        for b in itertools.product(*ranges):
            for D in itertools.combinations(axes, k):
                if all(b[j] + 1 <= self.hi[j] for j in D):
                    out.append(Cell(b, D))
        return out

    def describe(self):
        out = {"geometry": self.geometry, "d": self.d, "max_dim": self.max_dim}
        if self.is_torus:
            out["N"] = self.N
        elif self.n is not None:
            out["n"] = self.n
            out["boundary"] = self.bc
        else:
            out["lo"], out["hi"] = list(self.lo), list(self.hi)
            out["boundary"] = self.bc
        return out

    def __repr__(self):
        return f"Complex({self.describe()})"

    def n_cells(self, k):
        return len(self.cells[k])

    def canon(self, cell):
        """Reduce a cell to canonical form (mod N on tori); KeyError if absent."""
        base, dirs = tuple(cell[0]), tuple(sorted(cell[1]))
        if self.is_torus:
            base = tuple(x % self.N for x in base)
        c = Cell(base, dirs)
        if c not in self.index[len(dirs)]:
            raise KeyError(f"{c} is not a cell of {self!r}")
        return c

    def cell_id(self, cell):
        c = self.canon(cell)
        return self.index[c.dim][c]

    def contains(self, cell):
        try:
            self.canon(cell)
        except KeyError:
            return False
        return True

    def boundary(self, cell):
        """Signed boundary chain of ``cell``.

        The face of ``cell`` across its l-th direction (1-based) enters with
        sign (-1)^(l-1) at the upper side and -(-1)^(l-1) at the lower side.
        """
        cell = self.canon(cell)
        k = cell.dim
        if k == 0:
            return Chain(-1)
        out = {}
        for l, m in enumerate(cell.dirs):
            sign = 1 if l % 2 == 0 else -1
            rest = cell.dirs[:l] + cell.dirs[l + 1:]
            upper = list(cell.base)
            upper[m] += 1
            for base, s in ((tuple(upper), sign), (cell.base, -sign)):
                face = self.canon((base, rest))
                out[face] = out.get(face, 0) + s
        return Chain(k - 1, out)

    def coboundary_support(self, cell):
        """(coface, sign) pairs: every (k+1)-cell whose boundary contains ``cell``."""
        cell = self.canon(cell)
        k = cell.dim
        if k >= self.max_dim:
            return []
        out = []
        for m in range(self.d):
            if m in cell.dirs:
                continue
            dirs = tuple(sorted(cell.dirs + (m,)))
            for shift in (0, -1):
                base = list(cell.base)
                base[m] += shift
                if not self.contains((base, dirs)):
                    continue
                coface = self.canon((base, dirs))
                coeff = self.boundary(coface).entries.get(cell, 0)
                if coeff:
                    out.append((coface, coeff))
        return out

    def signed_boundary(self, k):
        """Integer boundary data of dimension k as (rows, cols, signs) arrays."""
        if k in self._bd_cache:
            return self._bd_cache[k]
        if not 1 <= k <= self.max_dim:
            raise ValueError(f"boundary dimension {k} outside 1..{self.max_dim}")
        rows, cols, vals = [], [], []
        idx = self.index[k - 1]
        for j, c in enumerate(self.cells[k]):
            for face, s in self.boundary(c):
                rows.append(idx[face])
                cols.append(j)
                vals.append(s)
        out = (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64),
               np.asarray(vals, dtype=np.int64))
        self._bd_cache[k] = out
        return out

    def boundary_matrix(self, k, q):
        """Boundary operator C_k -> C_{k-1} over F_q, one column per k-cell."""
        rows, cols, vals = self.signed_boundary(k)
        return SparseMatFq.from_coo(self.n_cells(k - 1), self.n_cells(k), rows, cols, vals, q)

    def chain_vector(self, chain, q):
        """Dense length-n_k vector over F_q of a Chain."""
        v = np.zeros(self.n_cells(chain.dim), dtype=np.int64)
        for c, x in chain:
            v[self.cell_id(c)] = (v[self.cell_id(c)] + x) % q
        return v

    def frozen_mask(self, k):
        """k-cells lying in the topological boundary of a wired box.

        A cell lies in the boundary of the box iff one of its fixed
        coordinates is extremal.  Empty mask on tori and free boxes.
        """
        mask = np.zeros(self.n_cells(k), dtype=bool)
        if self.is_torus or self.bc != "wired":
            return mask
        for j, c in enumerate(self.cells[k]):
            mask[j] = any(c.base[m] in (self.lo[m], self.hi[m])
                          for m in range(self.d) if m not in c.dirs)
        return mask

    def dual_cell(self, cell, inverse=False):
        """The (d-k)-cell of the dual torus crossing ``cell``.

        The dual torus is shifted by 1/2 in each coordinate and is identified
        with the same index set; the dual of (x, D) is (x - e_{D^c}, D^c).
        ``inverse`` maps dual cells back: (y, E) -> (y + e_E, E^c).
        """
        if not self.is_torus:
            raise ValueError("duality is only defined on tori")
        cell = self.canon(cell)
        comp = tuple(m for m in range(self.d) if m not in cell.dirs)
        base = list(cell.base)
        for m in (cell.dirs if inverse else comp):
            base[m] += 1 if inverse else -1
        return Cell(tuple(x % self.N for x in base), comp)


def _check_dims(d, max_dim):
    if d < 1:
        raise ValueError("d must be >= 1")
    if not 0 <= max_dim <= d:
        raise ValueError(f"max_dim must lie in [0, {d}]")


def build_torus(d, N, max_dim=None):
    """Cubical torus T^d_N with all cells up to ``max_dim``."""
    max_dim = d if max_dim is None else max_dim
    _check_dims(d, max_dim)
    if N < 2:
        raise ValueError("N must be >= 2 so that no cell is glued to itself")
    return Complex("torus", d, max_dim, [0] * d, [N - 1] * d, N=N)


def build_box(d, n, max_dim=None, boundary="free"):
    """Box with vertex set [-n, n]^d; ``boundary`` is 'free' or 'wired'."""
    max_dim = d if max_dim is None else max_dim
    _check_dims(d, max_dim)
    if n < 0:
        raise ValueError("n must be >= 0")
    if boundary not in ("free", "wired"):
        raise ValueError("boundary must be 'free' or 'wired'")
    return Complex("box", d, max_dim, [-n] * d, [n] * d, n=n, boundary=boundary)


def build_grid(shape, max_dim=None, boundary="free"):
    """Box with vertex set prod [0, shape_j]; build_grid((1, 1)) is one square."""
    d = len(shape)
    max_dim = d if max_dim is None else max_dim
    _check_dims(d, max_dim)
    if any(s < 0 for s in shape):
        raise ValueError("shape entries must be >= 0")
    return Complex("box", d, max_dim, [0] * d, list(shape), boundary=boundary)


def torus_cell_count(d, N, k):
    return comb(d, k) * N ** d


def dual_complex(open_cells, ambient, i, inverse=False):
    """Open (d-i)-cells of P*: duals of the i-cells that are *not* open.

    ``open_cells`` is an iterable of i-cells (or a boolean mask over
    ambient i-cell ids).  Returns a set of (d-i)-cells.  Passing
    ``inverse=True`` treats the input as cells of the dual torus, so that
    dual_complex(dual_complex(P), inverse=True) == P.
    """
    if not ambient.is_torus:
        raise ValueError("dual complexes are only implemented on tori")
    if isinstance(open_cells, np.ndarray) and open_cells.dtype == bool:
        opened = {ambient.cells[i][j] for j in np.flatnonzero(open_cells)}
    else:
        opened = {ambient.canon(c) for c in open_cells}
        if any(c.dim != i for c in opened):
            raise ValueError(f"expected {i}-cells")
    return {ambient.dual_cell(c, inverse=inverse) for c in ambient.cells[i] if c not in opened}


def dual_mask(mask, ambient, i, inverse=False):
    """Mask form of :func:`dual_complex` on ambient ids.

    Forward: mask over i-cells -> mask over dual (d-i)-cells.  With
    ``inverse`` the input is a mask over dual (d-i)-cells and the output a
    mask over primal i-cells, so the two directions compose to the identity.
    """
    mask = np.asarray(mask, dtype=bool)
    perm = dual_permutation(ambient, i)
    if inverse:
        out = np.zeros(ambient.n_cells(i), dtype=bool)
        out[np.argsort(perm)[~mask]] = True
    else:
        out = np.zeros(ambient.n_cells(ambient.d - i), dtype=bool)
        out[perm[~mask]] = True
    return out


def dual_permutation(ambient, i):
    """perm[j] = id of the dual (d-i)-cell of the i-cell with id j."""
    key = ("dualperm", i)
    if key not in ambient._bd_cache:
        idx = ambient.index[ambient.d - i]
        ambient._bd_cache[key] = np.array(
            [idx[ambient.dual_cell(c)] for c in ambient.cells[i]], dtype=np.int64)
    return ambient._bd_cache[key]
