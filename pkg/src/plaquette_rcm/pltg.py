"""q-state Potts lattice gauge theory coupled to the plaquette random-cluster model.

Spins are (i-1)-cochains f with values in F_q; a plaquette sigma is
satisfied when the coboundary df(sigma) = f(boundary sigma) vanishes.
"""

from __future__ import annotations

import cmath
import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import xlogy

from .cubical import Chain
from .fq_linalg import check_prime, echelon
from .homology import Subcomplex, _columns, graph_components, is_cycle
from .rcm import RcmParams, chain_rngs, enumerate_configs, exact_distribution, giant_count, pool_estimates

MAX_ENUM_STATES = 2 ** 20


def beta_to_p(beta):
    return 1.0 - math.exp(-beta) if math.isfinite(beta) else 1.0


def p_to_beta(p):
    return -math.log1p(-p) if p < 1 else math.inf


def coboundary_operator(cx, i):
    """Integer sparse matrix of d: C^{i-1} -> C^i (rows = i-cells)."""
    key = ("cob", i)
    if key not in cx._bd_cache:
        rows, cols, vals = cx.signed_boundary(i)
        cx._bd_cache[key] = sp.csr_matrix((vals, (cols, rows)), shape=(cx.n_cells(i), cx.n_cells(i - 1)))
    return cx._bd_cache[key]


def coboundary(cx, i, f, q):
    """df on the i-cells, for an (i-1)-cochain f (vector or stacked rows)."""
    D = coboundary_operator(cx, i)
    f = np.asarray(f, dtype=np.int64)
    if f.ndim == 1:
        return (D @ f) % q
    return (f @ D.T.toarray()) % q


def hamiltonian(cx, i, f, q):
    """H(f) = -#{i-plaquettes with df = 0}."""
    return -int((coboundary(cx, i, f, q) == 0).sum())


def all_cochains(n, q):
    if q ** n > MAX_ENUM_STATES:
        raise ValueError(f"{q}^{n} spin states exceed the enumeration limit")
    return np.array(list(itertools.product(range(q), repeat=n)), dtype=np.int64).reshape(-1, n)


@dataclass
class GibbsTable:
    states: np.ndarray
    probs: np.ndarray
    log_Z: float
    satisfied: np.ndarray


def exact_gibbs(cx, i, q, beta):
    """Exact Potts gauge measure proportional to exp(-beta H(f))."""
    q = check_prime(q)
    F = all_cochains(cx.n_cells(i - 1), q)
    sat = (coboundary(cx, i, F, q) == 0).sum(axis=1)
    lw = beta * sat
    top = lw.max()
    w = np.exp(lw - top)
    return GibbsTable(F, w / w.sum(), float(top + math.log(w.sum())), sat)


def couple_sample(cx, i, f, p, q, rng, frozen=None):
    """Open each satisfied plaquette independently with probability p.

    Plaquettes in ``frozen`` (wired boundary) are always open; f must
    satisfy them, which every cocycle of a P containing them does.
    """
    sat = coboundary(cx, i, f, q) == 0
    out = sat & (rng.random(sat.size) < p)
    if frozen is not None and frozen.any():
        if not sat[frozen].all():
            raise ValueError("f violates a frozen plaquette")
        out |= frozen
    return out


def cocycle_front(cx, i, q, open_mask):
    """Echelon form of the rows of d restricted to the open plaquettes.

    The same rows are the boundaries of the open plaquettes, so the front
    also spans B_{i-1}(P).
    """
    cols = _columns(cx, i, q)
    front = echelon(q, cx.n_cells(i - 1))
    for j in np.flatnonzero(open_mask).tolist():
        front.add(cols[j])
    return front


def _draw_from_front(front, n, q, rng):
    free = [j for j in range(n) if j not in front.pivots]
    vals = rng.integers(0, q, size=len(free))
    x = front.back_substitute(dict(zip(free, vals.tolist())))
    f = np.zeros(n, dtype=np.int64)
    if x:
        f[list(x.keys())] = list(x.values())
    return f


def couple_cocycle(cx, i, open_mask, q, rng):
    """Uniform element of Z^{i-1}(P) for P = skeleton + open plaquettes.

    Free coordinates of the kernel are uniform and the pivots are solved
    for, which is the law of sum A_g g over the echelon kernel basis.
    """
    if i == 1:
        ncomp, labels = graph_components(cx, open_mask)
        return rng.integers(0, q, size=ncomp)[labels]
    return _draw_from_front(cocycle_front(cx, i, q, open_mask), cx.n_cells(i - 1), q, rng)


def swendsen_wang_step(cx, i, f, beta, q, rng):
    """One plaquette Swendsen-Wang update; returns (new f, sampled plaquettes)."""
    mask = couple_sample(cx, i, f, beta_to_p(beta), q, rng)
    return couple_cocycle(cx, i, mask, q, rng), mask


class SwendsenWangChain:
    """Joint (f, omega) chain alternating the two conditional laws of the coupling.

    A sweep draws omega given f, then f given omega.  After a sweep
    ``mask`` and the cached elimination data describe the same P, which
    lets :meth:`bounds` test null-homology without a fresh solve.
    """

    def __init__(self, cx, i, q, beta, rng, f0=None, frozen=None):
        self.cx, self.i, self.q, self.beta, self.rng = cx, i, check_prime(q), beta, rng
        self.p = beta_to_p(beta)
        self.frozen = cx.frozen_mask(i) if frozen is None else frozen
        self.f = np.zeros(cx.n_cells(i - 1), dtype=np.int64) if f0 is None else np.asarray(f0) % q
        self.mask = couple_sample(cx, i, self.f, self.p, q, rng, self.frozen)
        self._front = self._labels = None

    def sweep(self):
        cx, i, q, rng = self.cx, self.i, self.q, self.rng
        self.mask = couple_sample(cx, i, self.f, self.p, q, rng, self.frozen)
        self._front = self._labels = None
        if i == 1:
            ncomp, self._labels = graph_components(cx, self.mask)
            self.f = rng.integers(0, q, size=ncomp)[self._labels]
        else:
            self._front = cocycle_front(cx, i, q, self.mask)
            self.f = _draw_from_front(self._front, cx.n_cells(i - 1), q, rng)

    def state(self):
        return self.mask.copy()

    def bounds(self, gvec):
        """Is the (i-1)-chain with coefficient vector ``gvec`` a boundary in P?"""
        gvec = np.asarray(gvec, dtype=np.int64) % self.q
        if self.i == 1:
            if self._labels is None:
                self._labels = graph_components(self.cx, self.mask)[1]
            sums = np.bincount(self._labels, weights=gvec, minlength=self._labels.max() + 1)
            return bool((np.round(sums).astype(np.int64) % self.q == 0).all())
        if self._front is None:
            self._front = cocycle_front(self.cx, self.i, self.q, self.mask)
        return self._front.contains({int(j): int(gvec[j]) for j in np.flatnonzero(gvec)})


class SwendsenWangRcm(SwendsenWangChain):
    """Random-cluster sampler: the omega-marginal of the joint chain."""

    def __init__(self, cx, params, rng):
        if not params.coupling_ok():
            raise ValueError("the coupling needs a prime integer q equal to the field size")
        super().__init__(cx, params.i, int(params.q), p_to_beta(params.p), rng)


def sw_transition_matrix(cx, i, q, beta):
    """Exact one-step kernel of the plaquette Swendsen-Wang chain on spins."""
    F = all_cochains(cx.n_cells(i - 1), q)
    p = beta_to_p(beta)
    dF = coboundary(cx, i, F, q)
    T = np.zeros((len(F), len(F)))
    for s in range(len(F)):
        sat = np.flatnonzero(dF[s] == 0)
        for k in range(len(sat) + 1):
            for opened in itertools.combinations(sat.tolist(), k):
                pr = p ** k * (1 - p) ** (len(sat) - k)
                if pr == 0:
                    continue
                ok = (dF[:, list(opened)] == 0).all(axis=1) if opened else np.ones(len(F), dtype=bool)
                targets = np.flatnonzero(ok)
                T[s, targets] += pr / targets.size
    return F, T


def coupling_table(cx, i, q, beta, labels=None):
    """Exact joint law kappa(f, omega), with spin states grouped into classes.

    kappa(f, omega) depends on f only through its set of satisfied
    plaquettes, so states are grouped by (satisfied set, label) and each
    class carries its multiplicity.  Returns (classes, multiplicity, class
    labels, K) where K[c, w] is the total kappa mass of class c with the
    plaquette configuration whose bitmask is w.
    """
    F = all_cochains(cx.n_cells(i - 1), q)
    m = cx.n_cells(i)
    if m > 20:
        raise ValueError(f"{m} plaquettes exceed the enumeration limit")
    sat = (coboundary(cx, i, F, q) == 0).astype(np.int64)
    pattern = sat @ (1 << np.arange(m, dtype=np.int64))
    lab = np.zeros(len(F), dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    keys, mult = np.unique(np.stack([pattern, lab], axis=1), axis=0, return_counts=True)
    W = np.arange(2 ** m, dtype=np.int64)
    eta = np.array([bin(w).count("1") for w in range(2 ** m)])
    p = beta_to_p(beta)
    base = np.exp(xlogy(eta, p) + xlogy(m - eta, 1 - p))
    allowed = (W[None, :] & ~keys[:, :1]) == 0
    K = mult[:, None] * allowed * base[None, :]
    return keys[:, 0], mult, keys[:, 1], K / K.sum()


def tv(a, b):
    return 0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())


def coupling_marginal_check(cx, i, q, beta):
    """TV distances of the two marginals of kappa from the gauge and RCM laws."""
    F = all_cochains(cx.n_cells(i - 1), q)
    sat = (coboundary(cx, i, F, q) == 0).astype(np.int64)
    pattern = sat @ (1 << np.arange(cx.n_cells(i), dtype=np.int64))
    classes, mult, _, K = coupling_table(cx, i, q, beta)
    gibbs = exact_gibbs(cx, i, q, beta)
    # spread each class mass evenly over its members
    pos = np.searchsorted(classes, pattern)
    spin = (K.sum(axis=1) / mult)[pos]
    rcm = exact_distribution(cx, RcmParams(beta_to_p(beta), q, i, q))
    return {"tv_spin": tv(spin, gibbs.probs), "tv_rcm": tv(K.sum(axis=0), rcm.probs)}


# Loops and Wilson variables.

@dataclass(frozen=True)
class LoopSpec:
    """Boundary of the i-dimensional box corner + [0, n_1] x ... x [0, n_i] along ``axes``."""

    corner: tuple
    dims: tuple
    axes: tuple

    @property
    def area(self):
        return math.prod(self.dims)

    def filling(self, cx):
        """The i-chain (sum of unit i-cells) whose boundary is the loop."""
        cells = {}
        for offs in itertools.product(*(range(n) for n in self.dims)):
            base = list(self.corner)
            for a, o in zip(self.axes, offs):
                base[a] += o
            cells[cx.canon((base, tuple(sorted(self.axes))))] = 1
        return Chain(len(self.axes), cells)

    def chain(self, cx):
        out = Chain(len(self.axes) - 1)
        for c, v in self.filling(cx):
            out = out + cx.boundary(c) * v
        return out

    def perimeter(self, cx):
        return len(self.chain(cx))


def centered_square(d, n, i=2, axes=None):
    """Loop of side n in the plane of the first i axes, centred at the origin."""
    axes = tuple(range(i)) if axes is None else tuple(axes)
    corner = [0] * d
    for a in axes:
        corner[a] = -(n // 2)
    return LoopSpec(tuple(corner), (n,) * len(axes), axes)


def loop_vector(cx, gamma, q):
    return cx.chain_vector(gamma, q)


def wilson_loop(cx, f, gamma, q):
    """(f(gamma) in F_q, exp(2 pi i f(gamma)/q))."""
    if not is_cycle(cx, gamma, q):
        raise ValueError("gamma is not a cycle")
    v = loop_vector(cx, gamma, q)
    val = int(np.dot(v, np.asarray(f, dtype=np.int64)) % q)
    return val, cmath.exp(2j * math.pi * val / q)


def _wilson_values(F, v, q):
    return (F @ v) % q


def wilson_exact(cx, i, q, beta, gamma):
    """Exact E[W_gamma] under the gauge measure (complex)."""
    g = exact_gibbs(cx, i, q, beta)
    vals = _wilson_values(g.states, loop_vector(cx, gamma, q), q)
    return complex(np.dot(g.probs, np.exp(2j * np.pi * vals / q)))


def v_gamma_exact(cx, i, q, p, gamma):
    """Exact mu(V_gamma) for the random-cluster measure with field F_q."""
    from .homology import is_null_homologous

    t = exact_distribution(cx, RcmParams(p, q, i, q))
    hit = np.array([is_null_homologous(gamma, Subcomplex.plaquettes(cx, i, c), q) for c in t.configs])
    return float(t.probs @ hit)


def two_point_exact(cx, i, q, beta, gamma):
    """tau = nu(W_gamma = 1) - 1/q."""
    g = exact_gibbs(cx, i, q, beta)
    vals = _wilson_values(g.states, loop_vector(cx, gamma, q), q)
    return float(g.probs @ (vals == 0)) - 1.0 / q


def wilson_conditional_law(cx, i, q, beta, gamma):
    """Law of f(gamma) under kappa given V_gamma and given its complement."""
    from .homology import is_null_homologous

    F = all_cochains(cx.n_cells(i - 1), q)
    vals = _wilson_values(F, loop_vector(cx, gamma, q), q)
    _, _, labels, K = coupling_table(cx, i, q, beta, labels=vals)
    configs = enumerate_configs(cx.n_cells(i))
    inV = np.array([is_null_homologous(gamma, Subcomplex.plaquettes(cx, i, w), q) for w in configs])
    out = {}
    for name, sel in (("V", inV), ("not_V", ~inV)):
        mass = K[:, sel].sum(axis=1)
        law = np.array([mass[labels == a].sum() for a in range(q)])
        out[name] = law / law.sum() if law.sum() > 0 else law
    return out


def wilson_identity_check(cx, i, q, beta, gamma):
    """Exact E[W] vs mu(V) and tau vs (1 - 1/q) mu(V)."""
    p = beta_to_p(beta)
    w = wilson_exact(cx, i, q, beta, gamma)
    v = v_gamma_exact(cx, i, q, p, gamma)
    tau = two_point_exact(cx, i, q, beta, gamma)
    law = wilson_conditional_law(cx, i, q, beta, gamma)
    return {"E_W": w, "mu_V": v, "tau": tau,
            "err_W": abs(w - v), "err_tau": abs(tau - (1 - 1 / q) * v),
            "law_V": law["V"].tolist(), "law_not_V": law["not_V"].tolist(),
            "err_law_not_V": float(np.abs(law["not_V"] - 1.0 / q).max()) if law["not_V"].sum() else 0.0,
            "err_law_V": float(abs(law["V"][0] - 1.0)) if law["V"].sum() else 0.0}


# Monte Carlo observables.

def _sw_series(cx, i, q, beta, v, burn_in, n_samples, thin, rng):
    chain = SwendsenWangChain(cx, i, q, beta, rng)
    for _ in range(burn_in):
        chain.sweep()
    w = np.empty(n_samples, dtype=complex)
    for t in range(n_samples):
        for _ in range(max(1, thin)):
            chain.sweep()
        w[t] = cmath.exp(2j * math.pi * int(np.dot(v, chain.f) % q) / q)
    return w


def wilson_expectation(cx, i, q, beta, gamma, settings):
    """SW estimate of E[W_gamma]: (complex mean, SE of real part, SE of imaginary part)."""
    v = loop_vector(cx, gamma, q)
    per = [_sw_series(cx, i, q, beta, v, settings.burn_in, settings.n_samples, settings.thin, r)
           for r in chain_rngs(settings.seed, settings.n_chains)]
    re, se_re = pool_estimates([x.real for x in per])
    im, se_im = pool_estimates([x.imag for x in per])
    return complex(re, im), se_re, se_im


def compare_v(cx, i, q, p, gamma, settings):
    """Random-cluster estimate of mu(V_gamma) with its standard error.

    The chains run on streams derived from (seed, 1), so the estimate is
    independent of :func:`wilson_expectation` at the same seed.
    """
    from dataclasses import replace

    from .rcm import estimate_event

    own = replace(settings, seed=(settings.seed, 1))
    return estimate_event(cx, RcmParams(p, q, i, q), ("V", gamma), own)


def nonlocal_move_rate(cx, i, q, beta, settings):
    """Mean of 1 - q^(-b_i(P)) along the SW chain.

    Given P, the uniform cocycle draw hits a non-trivial class of the
    b_i(P)-dimensional space of giant cocycles with probability
    1 - q^(-b_i(P)); this is the per-step probability of a non-local move.
    """
    out = []
    for rng in chain_rngs(settings.seed, settings.n_chains):
        chain = SwendsenWangChain(cx, i, q, beta, rng)
        for _ in range(settings.burn_in):
            chain.sweep()
        vals = []
        for _ in range(settings.n_samples):
            for _ in range(max(1, settings.thin)):
                chain.sweep()
            vals.append(1.0 - q ** (-giant_count(cx, i, chain.mask, q)))
        out.append(np.asarray(vals))
    return pool_estimates(out)


def area_perimeter_scan(cx, i, q, ps, sizes, settings, axes=None):
    """mu(V_gamma) for centred square loops of each size at each p.

    All loops are read off the same joint chain at a given p, so the rows
    of one p are correlated with each other but not across p.  Each row
    also carries the Wilson average from the spin half of the chain.
    Rows hold -log(mu)/Per and -log(mu)/Area; the fitted constants are
    the extreme rates over the rows with a positive estimate.
    """
    loops = [centered_square(cx.d, n, i, axes) for n in sizes]
    gammas = [lp.chain(cx) for lp in loops]
    vecs = [loop_vector(cx, g, q) for g in gammas]
    for g in gammas:
        if not is_cycle(cx, g, q):
            raise ValueError("loop is not a cycle of the complex")
    rows = []
    for p in ps:
        beta = p_to_beta(p)
        v_runs = [[] for _ in loops]
        w_runs = [[] for _ in loops]
        for rng in chain_rngs(settings.seed, settings.n_chains):
            chain = SwendsenWangChain(cx, i, q, beta, rng)
            for _ in range(settings.burn_in):
                chain.sweep()
            v = np.empty((len(loops), settings.n_samples))
            w = np.empty((len(loops), settings.n_samples), dtype=complex)
            for t in range(settings.n_samples):
                for _ in range(max(1, settings.thin)):
                    chain.sweep()
                for k, vec in enumerate(vecs):
                    v[k, t] = chain.bounds(vec)
                    w[k, t] = cmath.exp(2j * math.pi * int(np.dot(vec, chain.f) % q) / q)
            for k in range(len(loops)):
                v_runs[k].append(v[k])
                w_runs[k].append(w[k])
        for k, (n, loop) in enumerate(zip(sizes, loops)):
            est, se = pool_estimates(v_runs[k])
            re, se_re = pool_estimates([x.real for x in w_runs[k]])
            im, _ = pool_estimates([x.imag for x in w_runs[k]])
            per, area = loop.perimeter(cx), loop.area
            nl = -math.log(est) if est > 0 else math.inf
            rows.append({"beta": beta, "p": p, "n": n, "dims": loop.dims, "per": per, "area": area,
                         "re_w": re, "im_w": im, "stderr": se_re, "v_gamma_est": est, "v_stderr": se,
                         "n_samples": settings.n_samples * settings.n_chains,
                         "rate_per": nl / per, "rate_area": nl / area})
    return {"rows": rows, **fit_rates(rows)}


def fit_rates(rows):
    """Constants c_area >= c_per > 0 with exp(-c_area Area) <= mu <= exp(-c_per Per), if they exist."""
    ok = [r for r in rows if 0 < r["v_gamma_est"] < 1]
    c_area = max((r["rate_area"] for r in ok), default=math.nan)
    c_per = min((r["rate_per"] for r in ok), default=math.nan)
    bounds_ok = bool(ok) and len(ok) == len(rows) and c_per > 0
    return {"c_area": c_area, "c_per": c_per, "bounds_ok": bounds_ok}


def rate_spread(rows, key):
    """(max - min) / mean of a rate column; inf when any rate is not finite or zero."""
    vals = np.array([r[key] for r in rows], dtype=float)
    if not np.isfinite(vals).all() or (vals <= 0).any():
        return math.inf
    return float((vals.max() - vals.min()) / vals.mean())
