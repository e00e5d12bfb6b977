"""Exact sparse linear algebra over a prime field F_q.

Vectors are sparse ``{index: value}`` dicts with values in [0, q).  Over
F_2 the elimination runs on Python integers used as bitsets, which is an
order of magnitude faster than the dict path for the same answers.

Pivoting is deterministic: the leading entry of a vector is its lowest
nonzero index.
"""

from __future__ import annotations

import numpy as np


def is_prime(q):
    q = int(q)
    if q < 2:
        return False
    f = 2
    while f * f <= q:
        if q % f == 0:
            return False
        f += 1
    return True


def check_prime(q):
    if int(q) != q or not is_prime(q):
        raise ValueError(f"field size must be a prime integer, got {q!r}")
    return int(q)


def inv(a, q):
    return pow(int(a), q - 2, q)


def _bits(v):
    if isinstance(v, int):
        return v
    out = 0
    for j, x in v.items():
        if x % 2:
            out ^= 1 << j
    return out


def _unbits(x):
    out = {}
    while x:
        low = x & -x
        out[low.bit_length() - 1] = 1
        x ^= low
    return out


class EchelonForm:
    """Row echelon form over F_q grown by inserting vectors one at a time.

    Stored rows are normalized so the leading (lowest-index) entry is 1.
    ``n`` is the ambient vector length.
    """

    def __init__(self, q, n):
        self.q = q
        self.n = n
        self.pivots = {}

    @property
    def rank(self):
        return len(self.pivots)

    def copy(self):
        out = type(self)(self.q, self.n)
        out.pivots = dict(self.pivots)
        return out

    def reduce(self, v):
        q, piv = self.q, self.pivots
        v = {j: x % q for j, x in v.items() if x % q}
        while v:
            c = min(v)
            row = piv.get(c)
            if row is None:
                break
            a = v[c]
            for j, x in row.items():
                y = (v.get(j, 0) - a * x) % q
                if y:
                    v[j] = y
                else:
                    v.pop(j, None)
        # only the leading entry is guaranteed unpivoted
        return v

    def add(self, v):
        """Insert v; returns the rank increase (0 or 1)."""
        r = self.reduce(v)
        if not r:
            return 0
        c = min(r)
        a = inv(r[c], self.q)
        self.pivots[c] = {j: (x * a) % self.q for j, x in r.items()}
        return 1

    def contains(self, v):
        return not self.reduce(v)

    def back_substitute(self, free):
        """Complete an assignment of free variables to a solution.

        Each stored row r with leading column c imposes r . x = rhs_c where
        rhs is read from column ``self.n`` (the augmented column, if any).
        """
        q = self.q
        x = {j: a % q for j, a in free.items() if a % q}
        for c in sorted(self.pivots, reverse=True):
            row = self.pivots[c]
            s = row.get(self.n, 0)
            for j, a in row.items():
                if j != c and j != self.n:
                    s -= a * x.get(j, 0)
            s %= q
            if s:
                x[c] = s
            else:
                x.pop(c, None)
        return x


class EchelonFormGF2(EchelonForm):
    """F_2 specialization storing rows as integer bitsets."""

    def __init__(self, q, n):
        super().__init__(2, n)

    def reduce(self, v):
        x = _bits(v)
        piv = self.pivots
        while x:
            low = x & -x
            row = piv.get(low.bit_length() - 1)
            if row is None:
                break
            x ^= row
        return x

    def reduce_bits(self, x):
        piv = self.pivots
        while x:
            low = x & -x
            row = piv.get(low.bit_length() - 1)
            if row is None:
                break
            x ^= row
        return x

    def add(self, v):
        r = self.reduce(v)
        if not r:
            return 0
        self.pivots[(r & -r).bit_length() - 1] = r
        return 1

    def back_substitute(self, free):
        x = _bits({j: a for j, a in free.items()})
        rhs = 1 << self.n
        for c in sorted(self.pivots, reverse=True):
            row = self.pivots[c]
            s = (row & ~(1 << c) & ~rhs & x).bit_count() + (1 if row & rhs else 0)
            if s & 1:
                x |= 1 << c
            else:
                x &= ~(1 << c)
        return _unbits(x)


def echelon(q, n):
    return EchelonFormGF2(q, n) if q == 2 else EchelonForm(q, n)


class SparseMatFq:
    """Sparse matrix over F_q stored column-major as dicts {row: value}."""

    def __init__(self, rows, cols, q, columns=None):
        self.rows = rows
        self.cols = cols
        self.q = check_prime(q)
        if columns is None:
            columns = [{} for _ in range(cols)]
        if len(columns) != cols:
            raise ValueError("column count mismatch")
        self.columns = [{r: v % q for r, v in c.items() if v % q} for c in columns]
        for c in self.columns:
            if any(not 0 <= r < rows for r in c):
                raise ValueError("row index out of range")

    @classmethod
    def from_coo(cls, rows, cols, ri, ci, vals, q):
        columns = [{} for _ in range(cols)]
        for r, c, v in zip(np.asarray(ri).tolist(), np.asarray(ci).tolist(), np.asarray(vals).tolist()):
            columns[c][r] = columns[c].get(r, 0) + v
        return cls(rows, cols, q, columns)

    @classmethod
    def from_dense(cls, A, q):
        A = np.asarray(A, dtype=np.int64) % q
        if A.ndim != 2:
            raise ValueError("expected a 2-d array")
        columns = [{int(r): int(A[r, c]) for r in np.flatnonzero(A[:, c])} for c in range(A.shape[1])]
        return cls(A.shape[0], A.shape[1], q, columns)

    @classmethod
    def identity(cls, n, q):
        return cls(n, n, q, [{j: 1} for j in range(n)])

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def nnz(self):
        return sum(len(c) for c in self.columns)

    def to_dense(self):
        A = np.zeros((self.rows, self.cols), dtype=np.int64)
        for c, col in enumerate(self.columns):
            for r, v in col.items():
                A[r, c] = v
        return A

    def to_scipy(self):
        import scipy.sparse as sp

        ri, ci, vals = [], [], []
        for c, col in enumerate(self.columns):
            for r, v in col.items():
                ri.append(r)
                ci.append(c)
                vals.append(v)
        return sp.csr_matrix((np.asarray(vals, dtype=np.int64), (ri, ci)), shape=self.shape)

    def select_columns(self, idx):
        idx = list(idx)
        return SparseMatFq(self.rows, len(idx), self.q, [self.columns[j] for j in idx])

    def transpose(self):
        columns = [{} for _ in range(self.rows)]
        for c, col in enumerate(self.columns):
            for r, v in col.items():
                columns[r][c] = v
        return SparseMatFq(self.cols, self.rows, self.q, columns)

    def row_dicts(self):
        return self.transpose().columns

    def matvec(self, x):
        x = np.asarray(x, dtype=np.int64)
        if x.shape != (self.cols,):
            raise ValueError(f"vector length {x.shape} does not match {self.cols} columns")
        out = np.zeros(self.rows, dtype=np.int64)
        for c, col in enumerate(self.columns):
            if x[c] % self.q:
                for r, v in col.items():
                    out[r] += v * x[c]
        return out % self.q

    def matmul(self, other):
        if self.cols != other.rows or self.q != other.q:
            raise ValueError("incompatible shapes or fields")
        q = self.q
        cols = []
        for col in other.columns:
            acc = {}
            for k, b in col.items():
                for r, a in self.columns[k].items():
                    acc[r] = (acc.get(r, 0) + a * b) % q
            cols.append(acc)
        return SparseMatFq(self.rows, other.cols, q, cols)

    def is_zero(self):
        return all(not c for c in self.columns)

    def column_echelon(self):
        front = echelon(self.q, self.rows)
        for col in self.columns:
            front.add(col)
        return front

    def row_echelon(self, rhs=None):
        front = echelon(self.q, self.cols)
        for j, row in enumerate(self.row_dicts()):
            if rhs is not None and rhs[j] % self.q:
                row = dict(row)
                row[self.cols] = int(rhs[j])
            front.add(row)
        return front

    def rank(self):
        return rank(self)

    def kernel_basis(self):
        return kernel_basis(self)

    def solve(self, b):
        return solve(self, b)


def rank(A):
    """Exact rank over F_q."""
    return A.column_echelon().rank


def kernel_basis(A):
    """Deterministic basis of null(A), one vector per free column.

    The vector attached to free column f has a 1 at f, zeros at every other
    free column and the forced values at pivot columns.  These vectors are
    the rows of the reduced echelon form of the kernel ordered by their last
    nonzero coordinate, so the basis is unique for a given column order.
    """
    front = A.row_echelon()
    free = [j for j in range(A.cols) if j not in front.pivots]
    out = []
    for f in free:
        x = front.back_substitute({f: 1})
        v = np.zeros(A.cols, dtype=np.int64)
        for j, a in x.items():
            v[j] = a
        out.append(v)
    return out


def nullity(A):
    return A.cols - rank(A)


def random_kernel_element(A, rng, front=None):
    """Uniform element of null(A): uniform free variables, solved pivots.

    Equal in law to sum_g U_g g over :func:`kernel_basis` with U_g i.i.d.
    uniform on F_q (the free coordinates of that sum are exactly U).
    """
    front = A.row_echelon() if front is None else front
    free = [j for j in range(A.cols) if j not in front.pivots]
    vals = rng.integers(0, A.q, size=len(free))
    x = front.back_substitute(dict(zip(free, vals.tolist())))
    v = np.zeros(A.cols, dtype=np.int64)
    for j, a in x.items():
        v[j] = a
    return v


def solve(A, b):
    """Some x with A x = b over F_q (free variables 0), or None."""
    b = np.asarray(b, dtype=np.int64) % A.q
    if b.shape != (A.rows,):
        raise ValueError(f"right-hand side has shape {b.shape}, expected ({A.rows},)")
    front = A.row_echelon(rhs=b)
    if A.cols in front.pivots:
        return None
    x = front.back_substitute({})
    v = np.zeros(A.cols, dtype=np.int64)
    for j, a in x.items():
        if j < A.cols:
            v[j] = a
    return v


def in_column_span(A, b):
    b = np.asarray(b, dtype=np.int64) % A.q
    front = A.column_echelon()
    return front.contains({int(j): int(b[j]) for j in np.flatnonzero(b)})


class IncrementalRank:
    """Rank of a changing set of keyed columns.

    Additions reduce against the current front.  Removing a column that
    never created a pivot leaves the span unchanged; removing one that did
    rebuilds the front from the remaining columns in insertion order.
    """

    def __init__(self, q, n):
        self.q = q
        self.n = n
        self.columns = {}
        self.contributing = set()
        self.front = echelon(q, n)
        self.rebuilds = 0

    @property
    def rank(self):
        return self.front.rank

    def add(self, key, col):
        if key in self.columns:
            raise KeyError(f"column {key!r} already present")
        if self.q == 2:
            col = _bits(col)
        self.columns[key] = col
        delta = self.front.add(col)
        if delta:
            self.contributing.add(key)
        return delta

    def would_add(self, col):
        return 0 if self.front.contains(col) else 1

    def remove(self, key):
        """Drop a column; returns the rank decrease (0 or 1)."""
        self.columns.pop(key)
        if key not in self.contributing:
            return 0
        before = self.rank
        self.rebuild()
        return before - self.rank

    def rebuild(self):
        self.rebuilds += 1
        self.front = echelon(self.q, self.n)
        self.contributing = set()
        for key, col in self.columns.items():
            if self.front.add(col):
                self.contributing.add(key)

    def removal_delta(self, key):
        """Rank decrease that removing ``key`` would cause, without removing it."""
        if key not in self.contributing:
            return 0
        col = self.columns[key]
        front = echelon(self.q, self.n)
        for k, c in self.columns.items():
            if k != key:
                front.add(c)
        return 0 if front.contains(col) else 1


def rank_delta_on_column_add(state, col, key=None):
    """Append ``col`` to an :class:`IncrementalRank`; returns the rank increase."""
    key = len(state.columns) if key is None else key
    while key in state.columns:
        key = (key, "dup")
    return state.add(key, col)
