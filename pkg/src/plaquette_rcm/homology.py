"""Betti numbers, giant/local cycle counts and duality identities over F_q."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from .cubical import Chain, Complex, dual_mask
from .fq_linalg import SparseMatFq, check_prime, echelon, _bits


@dataclass(frozen=True)
class HomologySummary:
    k: int
    betti: int
    local: int
    giant: int


class ComplexWithMatrices:
    """Abstract chain complex given by explicit boundary matrices d_1..d_m."""

    def __init__(self, boundaries):
        self.boundaries = list(boundaries)
        for k in range(len(self.boundaries) - 1):
            a, b = self.boundaries[k], self.boundaries[k + 1]
            if a.cols != b.rows:
                raise ValueError(f"boundary matrices {k + 1} and {k + 2} do not compose")
            if a.q != b.q:
                raise ValueError("boundary matrices over different fields")
        if self.boundaries and any(not self.boundaries[k].matmul(self.boundaries[k + 1]).is_zero()
                                   for k in range(len(self.boundaries) - 1)):
            raise ValueError("boundary of boundary is not zero")

    @classmethod
    def from_integer(cls, mats, q):
        return cls([SparseMatFq.from_dense(np.asarray(m), q) for m in mats])

    @property
    def q(self):
        return self.boundaries[0].q

    def n_cells(self, k):
        if k == 0:
            return self.boundaries[0].rows
        if 1 <= k <= len(self.boundaries):
            return self.boundaries[k - 1].cols
        return 0

    def betti(self, k):
        n = self.n_cells(k)
        r_k = self.boundaries[k - 1].rank() if 1 <= k <= len(self.boundaries) else 0
        r_k1 = self.boundaries[k].rank() if k < len(self.boundaries) else 0
        return n - r_k - r_k1


class Subcomplex:
    """Subcomplex of an ambient cubical complex given by per-dimension masks.

    ``masks[k]`` selects the k-cells present; dimensions beyond the list are
    empty.  Closure under faces is the caller's responsibility
    (:meth:`plaquettes` always satisfies it).
    """

    def __init__(self, ambient, masks):
        self.ambient = ambient
        self.masks = [np.asarray(m, dtype=bool) for m in masks]

    @classmethod
    def plaquettes(cls, ambient, i, open_mask):
        """Full (i-1)-skeleton plus the open i-cells."""
        masks = [np.ones(ambient.n_cells(k), dtype=bool) for k in range(i)]
        masks.append(np.asarray(open_mask, dtype=bool))
        return cls(ambient, masks)

    @classmethod
    def full(cls, ambient):
        return cls(ambient, [np.ones(ambient.n_cells(k), dtype=bool) for k in range(ambient.max_dim + 1)])

    @classmethod
    def from_cells(cls, ambient, cells):
        """Closure of a set of cells under taking faces."""
        masks = [np.zeros(ambient.n_cells(k), dtype=bool) for k in range(ambient.max_dim + 1)]
        stack = [ambient.canon(c) for c in cells]
        while stack:
            c = stack.pop()
            j = ambient.index[c.dim][c]
            if masks[c.dim][j]:
                continue
            masks[c.dim][j] = True
            if c.dim:
                stack.extend(f for f, _ in ambient.boundary(c))
        while len(masks) > 1 and not masks[-1].any():
            masks.pop()
        return cls(ambient, masks)

    @property
    def top_dim(self):
        return len(self.masks) - 1

    def mask(self, k):
        if 0 <= k < len(self.masks):
            return self.masks[k]
        return np.zeros(self.ambient.n_cells(k) if k <= self.ambient.max_dim else 0, dtype=bool)

    def ids(self, k):
        return np.flatnonzero(self.mask(k))

    def n_cells(self, k):
        return int(self.mask(k).sum())


def _columns(ambient, k, q):
    """Cached sparse columns of the ambient boundary d_k (bitsets over F_2)."""
    key = ("cols", k, q)
    cache = ambient._bd_cache
    if key not in cache:
        cols = ambient.boundary_matrix(k, q).columns
        cache[key] = [_bits(c) for c in cols] if q == 2 else cols
    return cache[key]


def rank_of_columns(ambient, k, q, ids):
    """Rank over F_q of the ambient boundary d_k restricted to k-cells ``ids``."""
    if k < 1 or k > ambient.max_dim:
        return 0
    cols = _columns(ambient, k, q)
    front = echelon(q, ambient.n_cells(k - 1))
    for j in np.asarray(ids).tolist():
        front.add(cols[j])
    return front.rank


def _full_rank(ambient, k, q):
    key = ("fullrank", k, q)
    if key not in ambient._bd_cache:
        ambient._bd_cache[key] = rank_of_columns(ambient, k, q, range(ambient.n_cells(k)))
    return ambient._bd_cache[key]


def _rank_in(P, k, q):
    if k < 1 or k > P.top_dim:
        return 0
    mask = P.mask(k)
    if mask.all():
        return _full_rank(P.ambient, k, q)
    return rank_of_columns(P.ambient, k, q, np.flatnonzero(mask))


def betti(P, k, q):
    """k-th Betti number over F_q of a Complex, Subcomplex or ComplexWithMatrices."""
    q = check_prime(q)
    if isinstance(P, ComplexWithMatrices):
        if P.q != q:
            raise ValueError("matrices were built over a different field")
        return P.betti(k)
    if isinstance(P, Complex):
        P = Subcomplex.full(P)
    if k < 0 or k > P.top_dim:
        return 0
    return P.n_cells(k) - _rank_in(P, k, q) - _rank_in(P, k + 1, q)


def betti_numbers(P, q):
    top = P.top_dim if isinstance(P, Subcomplex) else (
        P.max_dim if isinstance(P, Complex) else len(P.boundaries))
    return [betti(P, k, q) for k in range(top + 1)]


def cycle_basis(ambient, k, q, ids):
    """Basis of Z_k for the k-cells ``ids`` (full lower skeleton assumed).

    Column reduction with recorded combinations; returns sparse vectors
    over ambient k-cell ids (dicts, or bitsets when q == 2).
    """
    ids = np.asarray(ids).tolist()
    if k == 0:
        return [{j: 1} for j in ids] if q != 2 else [1 << j for j in ids]
    cols = _columns(ambient, k, q)
    out = []
    if q == 2:
        piv = {}
        for j in ids:
            x, comb_ = cols[j], 1 << j
            while x:
                low = x & -x
                hit = piv.get(low.bit_length() - 1)
                if hit is None:
                    break
                x ^= hit[0]
                comb_ ^= hit[1]
            if x:
                piv[(x & -x).bit_length() - 1] = (x, comb_)
            else:
                out.append(comb_)
        return out
    piv = {}
    for j in ids:
        x = dict(cols[j])
        c = {j: 1}
        while x:
            r = min(x)
            hit = piv.get(r)
            if hit is None:
                break
            a = x[r] * pow(hit[0][r], q - 2, q) % q
            for t, v in hit[0].items():
                y = (x.get(t, 0) - a * v) % q
                if y:
                    x[t] = y
                else:
                    x.pop(t, None)
            for t, v in hit[1].items():
                y = (c.get(t, 0) - a * v) % q
                if y:
                    c[t] = y
                else:
                    c.pop(t, None)
        if x:
            piv[min(x)] = (x, c)
        else:
            out.append(c)
    return out


def _ambient_boundary_front(ambient, k, q):
    """Echelon form of B_k(ambient) = image of the full d_{k+1}."""
    key = ("bfront", k, q)
    if key not in ambient._bd_cache:
        front = echelon(q, ambient.n_cells(k))
        if k + 1 <= ambient.max_dim:
            for col in _columns(ambient, k + 1, q):
                front.add(col)
        ambient._bd_cache[key] = front
    return ambient._bd_cache[key]


def giant_rank(P, k, q, cycles=None):
    """Rank of H_k(P) -> H_k(ambient) induced by inclusion.

    Each cycle of a basis of Z_k(P) is tested for membership in
    B_k(ambient) + span(previous cycles); the number of failures is the
    dimension of the image of Z_k(P) in H_k(ambient).
    """
    ambient = P.ambient
    if k > ambient.max_dim - 1 and k != ambient.max_dim:
        raise ValueError("ambient complex too small")
    if cycles is None:
        cycles = cycle_basis(ambient, k, q, P.ids(k))
    front = _ambient_boundary_front(ambient, k, q).copy()
    return sum(front.add(z) for z in cycles)


def torus_cocycle_pairing(ambient, k):
    """Integer matrix (C(d,k) x n_k) of the standard cocycles of T^d_N.

    Row D is 1 on the k-cells spanning directions D whose coordinates along
    D are all zero.  These classes form a basis of H^k(T^d_N; F_q) dual to
    the coordinate k-tori.
    """
    key = ("pairing", k)
    if key not in ambient._bd_cache:
        if not ambient.is_torus:
            raise ValueError("cocycle pairing requires a torus")
        dirsets = list(itertools.combinations(range(ambient.d), k))
        row = {D: r for r, D in enumerate(dirsets)}
        M = np.zeros((len(dirsets), ambient.n_cells(k)), dtype=np.int64)
        for j, c in enumerate(ambient.cells[k]):
            if all(c.base[m] == 0 for m in c.dirs):
                M[row[c.dirs], j] = 1
        ambient._bd_cache[key] = M
    return ambient._bd_cache[key]


def giant_rank_pairing(P, k, q, cycles=None):
    """Same quantity as :func:`giant_rank`, computed through cohomology pairing."""
    ambient = P.ambient
    M = torus_cocycle_pairing(ambient, k)
    if cycles is None:
        cycles = cycle_basis(ambient, k, q, P.ids(k))
    front = echelon(q, M.shape[0])
    for z in cycles:
        zz = _unbits_dict(z) if q == 2 else z
        idx = np.fromiter(zz.keys(), dtype=np.int64, count=len(zz))
        val = np.fromiter(zz.values(), dtype=np.int64, count=len(zz))
        img = (M[:, idx] @ val) % q
        front.add({int(r): int(img[r]) for r in np.flatnonzero(img)})
        if front.rank == M.shape[0]:
            break
    return front.rank


def _unbits_dict(x):
    out = {}
    while x:
        low = x & -x
        out[low.bit_length() - 1] = 1
        x ^= low
    return out


def induced_summary(P, k, q):
    """(betti, local, giant) for H_k(P) -> H_k(T) on an ambient torus."""
    q = check_prime(q)
    b = betti(P, k, q)
    g = giant_rank(P, k, q) if b else 0
    return HomologySummary(k=k, betti=b, local=b - g, giant=g)


def _as_vector(ambient, gamma, q):
    if isinstance(gamma, Chain):
        return ambient.chain_vector(gamma, q)
    return np.asarray(gamma, dtype=np.int64) % q


def is_cycle(ambient, gamma, q):
    v = _as_vector(ambient, gamma, q)
    k = gamma.dim if isinstance(gamma, Chain) else None
    if k is None:
        raise ValueError("pass a Chain so the dimension is known")
    if k == 0:
        return True
    return not ambient.boundary_matrix(k, q).matmul(
        SparseMatFq.from_dense(v.reshape(-1, 1), q)).columns[0]


def is_null_homologous(gamma, P, q):
    """True iff the (i-1)-cycle ``gamma`` bounds an i-chain of P over F_q."""
    q = check_prime(q)
    ambient = P.ambient
    k = gamma.dim
    if not is_cycle(ambient, gamma, q):
        raise ValueError("gamma is not a cycle")
    v = _as_vector(ambient, gamma, q)
    if not v.any():
        return True
    if any(not P.mask(k)[ambient.cell_id(c)] for c, _ in gamma):
        raise ValueError("gamma is not supported in P")
    return bounds_in(ambient, k + 1, q, P.ids(k + 1), v)


def bounds_in(ambient, k, q, ids, v):
    """Whether vector v over (k-1)-cells lies in the span of d_k over ``ids``."""
    cols = _columns(ambient, k, q)
    front = echelon(q, ambient.n_cells(k - 1))
    for j in np.asarray(ids).tolist():
        front.add(cols[j])
    target = {int(j): int(v[j]) for j in np.flatnonzero(v)}
    return front.contains(target)


def euler_characteristic(P):
    if isinstance(P, Complex):
        return sum((-1) ** k * P.n_cells(k) for k in range(P.max_dim + 1))
    if isinstance(P, ComplexWithMatrices):
        return sum((-1) ** k * P.n_cells(k) for k in range(len(P.boundaries) + 1))
    return sum((-1) ** k * P.n_cells(k) for k in range(P.top_dim + 1))


def euler_poincare_check(P, q):
    chi = euler_characteristic(P)
    return chi == sum((-1) ** k * b for k, b in enumerate(betti_numbers(P, q)))


def alexander_check(ambient, i, open_mask, q):
    """Check the torus Alexander-duality relations for P and its dual.

    P is the i-complex with full (i-1)-skeleton and open i-cells
    ``open_mask``; P* is the (d-i)-complex on the dual torus.
    """
    q = check_prime(q)
    d = ambient.d
    P = Subcomplex.plaquettes(ambient, i, open_mask)
    D = Subcomplex.plaquettes(ambient, d - i, dual_mask(open_mask, ambient, i))
    s = {k: induced_summary(P, k, q) for k in (i - 1, i)}
    sd = {k: induced_summary(D, k, q) for k in (d - i - 1, d - i)}
    report = {
        "betti_i": s[i].betti, "giant_i": s[i].giant, "local_i": s[i].local,
        "betti_im1": s[i - 1].betti,
        "dual_betti_dmi": sd[d - i].betti, "dual_giant_dmi": sd[d - i].giant,
        "dual_local_dmim1": sd[d - i - 1].local,
        "split": all(x.local + x.giant == x.betti for x in (*s.values(), *sd.values())),
        "giant_sum": s[i].giant + sd[d - i].giant == comb(d, i),
        "local_match": s[i].local == sd[d - i - 1].local,
    }
    return report


def eta_offset_constant(ambient, i, q):
    """c with b_i - b_{i-1} = eta(P) + c for every i-complex P with full (i-1)-skeleton."""
    P = Subcomplex.plaquettes(ambient, i, np.zeros(ambient.n_cells(i), dtype=bool))
    return betti(P, i, q) - betti(P, i - 1, q)


# Fast paths for i = 1 (graphs on the torus).

def _edge_endpoints(ambient):
    key = ("endpoints",)
    if key not in ambient._bd_cache:
        idx = ambient.index[0]
        tail, head, axis = [], [], []
        for c in ambient.cells[1]:
            m = c.dirs[0]
            up = list(c.base)
            up[m] += 1
            tail.append(idx[ambient.canon((c.base, ()))])
            head.append(idx[ambient.canon((up, ()))])
            axis.append(m)
        ambient._bd_cache[key] = (np.array(tail), np.array(head), np.array(axis))
    return ambient._bd_cache[key]


def graph_components(ambient, open_mask):
    """Connected-component labels of vertices + open edges (= b_0 classes)."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    tail, head, _ = _edge_endpoints(ambient)
    m = np.asarray(open_mask, dtype=bool)
    n = ambient.n_cells(0)
    G = coo_matrix((np.ones(int(m.sum())), (tail[m], head[m])), shape=(n, n))
    return connected_components(G, directed=False)


def graph_giant_rank(ambient, open_mask, q):
    """Rank over F_q of the winding vectors of cycles in vertices + open edges."""
    tail, head, axis = _edge_endpoints(ambient)
    N, d = ambient.N, ambient.d
    n = ambient.n_cells(0)
    m = np.flatnonzero(np.asarray(open_mask, dtype=bool))
    adj = [[] for _ in range(n)]
    for e in m.tolist():
        adj[tail[e]].append((head[e], e, 1))
        adj[head[e]].append((tail[e], e, -1))
    lift = np.zeros((n, d), dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    tree = np.zeros(ambient.n_cells(1), dtype=bool)
    for root in range(n):
        if seen[root] or not adj[root]:
            continue
        seen[root] = True
        stack = [root]
        while stack:
            u = stack.pop()
            for v, e, s in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    tree[e] = True
                    lift[v] = lift[u]
                    lift[v, axis[e]] += s
                    stack.append(v)
    extra = m[~tree[m]]
    if extra.size == 0:
        return 0
    disp = lift[tail[extra]] - lift[head[extra]]
    disp[np.arange(extra.size), axis[extra]] += 1
    wind = (disp // N) % q
    front = echelon(q, d)
    for row in np.unique(wind, axis=0):
        front.add({int(j): int(row[j]) for j in np.flatnonzero(row)})
        if front.rank == d:
            break
    return front.rank
