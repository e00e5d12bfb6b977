"""The i-dimensional plaquette random-cluster model.

Weights are p^eta (1-p)^(|X^i| - eta) q^(b_{i-1}(P; F)) with the Betti
number taken over the prime field F = F_{q_field}.  The balanced variant on
tori multiplies by sqrt(q)^(-b_i), b_i being the number of giant i-cycles.
"""

from __future__ import annotations

import itertools
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .fq_linalg import IncrementalRank, check_prime, is_prime
from .homology import (Subcomplex, _columns, betti, giant_rank_pairing, graph_components,
                       graph_giant_rank, is_null_homologous, rank_of_columns)

log = logging.getLogger(__name__)

MAX_ENUM_CELLS = 20
RNG_NAME = "numpy.random.PCG64"


@dataclass
class RcmParams:
    p: float
    q: float
    i: int
    q_field: int | None = None
    balanced: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.i < 1:
            raise ValueError("i must be >= 1")
        if self.q_field is None:
            self.q_field = int(self.q) if (float(self.q).is_integer() and is_prime(int(self.q))) else 2
        self.q_field = check_prime(self.q_field)

    @property
    def p_hat(self):
        """Open probability of a plaquette whose addition kills an (i-1)-cycle."""
        return p_hat(self.p, self.q)

    def coupling_ok(self):
        return float(self.q).is_integer() and is_prime(int(self.q)) and int(self.q) == self.q_field


def p_hat(p, q):
    if p == 1.0:
        return 1.0
    return (p / q) / (1.0 - p + p / q)


@dataclass
class ChainSettings:
    n_samples: int = 1000
    burn_in: int = 1000
    thin: int = 10
    n_chains: int = 1
    seed: int = 0
    sampler: str = "auto"

    def as_dict(self):
        return dict(self.__dict__)


def chain_rngs(seed, n_chains):
    """One independent PCG64 stream per chain, spawned from ``seed``.

    ``seed`` may be an int or a tuple of ints (used to derive streams that
    are independent of the plain-int ones).
    """
    ss = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(n_chains)]


def _check_params(cx, params):
    if not 0 < params.i <= cx.max_dim:
        raise ValueError(f"i={params.i} outside 1..{cx.max_dim}")
    if params.i >= cx.d:
        raise ValueError("need 0 < i < d")


def config_stats(cx, mask, params):
    """(eta, b_{i-1}, b_i or None) for the plaquette configuration ``mask``."""
    i, qf = params.i, params.q_field
    mask = np.asarray(mask, dtype=bool)
    P = Subcomplex.plaquettes(cx, i, mask)
    b_im1 = betti(P, i - 1, qf)
    giant = None
    if cx.is_torus and params.balanced:
        giant = giant_count(cx, i, mask, qf)
    return int(mask.sum()), b_im1, giant


def giant_count(cx, i, mask, q):
    """b_i: rank of H_i(P) -> H_i(T^d_N)."""
    if i == 1:
        return graph_giant_rank(cx, mask, q)
    return giant_rank_pairing(Subcomplex.plaquettes(cx, i, mask), i, q)


def log_weight_from_stats(eta, b_im1, giant, n_plaq, params):
    p, q = params.p, params.q
    lw = xlogy(eta, p) + xlogy(n_plaq - eta, 1.0 - p) + b_im1 * math.log(q)
    if params.balanced:
        if giant is None:
            raise ValueError("balanced weights need a torus")
        lw -= giant * math.log(q) / 2
    return float(lw)


def weight(cx, mask, params):
    """Unnormalized log-weight of a configuration (-inf if impossible)."""
    _check_params(cx, params)
    mask = np.asarray(mask, dtype=bool)
    frozen = cx.frozen_mask(params.i)
    if (frozen & ~mask).any():
        return -math.inf
    eta, b, g = config_stats(cx, mask, params)
    return log_weight_from_stats(eta, b, g, cx.n_cells(params.i), params)


@dataclass
class ExactTable:
    configs: np.ndarray
    probs: np.ndarray
    log_weights: np.ndarray
    log_Z: float
    eta: np.ndarray
    betti_im1: np.ndarray
    giant: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def Z(self):
        return math.exp(self.log_Z)

    def expect(self, values):
        return float(np.dot(self.probs, values))

    def prob(self, predicate):
        return float(sum(pr for c, pr in zip(self.configs, self.probs) if predicate(c)))


def enumerate_configs(n, frozen=None):
    configs = np.array(list(itertools.product((False, True), repeat=n)), dtype=bool).reshape(-1, n)
    # reverse columns so that row index = sum 2^j omega_j
    configs = configs[:, ::-1]
    if frozen is not None and frozen.any():
        configs = configs[configs[:, frozen].all(axis=1)]
    return configs


def exact_distribution(cx, params, max_cells=MAX_ENUM_CELLS):
    """Exact table over all configurations of the i-plaquettes of ``cx``.

    Returns both Z and, on tori, the balanced partition function (computed
    with the same table, stored in ``extra['log_Z_balanced']``).
    """
    _check_params(cx, params)
    i = params.i
    n = cx.n_cells(i)
    if n > max_cells:
        raise ValueError(f"{n} plaquettes exceed the enumeration limit of {max_cells}")
    frozen = cx.frozen_mask(i)
    configs = enumerate_configs(n, frozen)
    eta = configs.sum(axis=1)
    b = np.array([betti(Subcomplex.plaquettes(cx, i, c), i - 1, params.q_field) for c in configs])
    giant = None
    if cx.is_torus:
        giant = np.array([giant_count(cx, i, c, params.q_field) for c in configs])
    return table_from_stats(configs, eta, b, giant, n, params)


def table_from_stats(configs, eta, b, giant, n, params):
    lw = np.array([log_weight_from_stats(e, bb, (None if giant is None else g), n, params)
                   for e, bb, g in zip(eta, b, giant if giant is not None else [None] * len(eta))])
    top = lw.max()
    w = np.exp(lw - top)
    log_Z = float(top + math.log(w.sum()))
    extra = {}
    if giant is not None:
        other = RcmParams(params.p, params.q, params.i, params.q_field, not params.balanced)
        lw2 = np.array([log_weight_from_stats(e, bb, g, n, other) for e, bb, g in zip(eta, b, giant)])
        t2 = lw2.max()
        key = "log_Z_unbalanced" if params.balanced else "log_Z_balanced"
        extra[key] = float(t2 + math.log(np.exp(lw2 - t2).sum()))
    return ExactTable(configs, w / w.sum(), lw, log_Z, eta, b, giant, extra)


def conditional_open_probability(cx, mask, cell, params):
    """P(cell open | rest) from the Betti drop caused by opening the cell."""
    i = params.i
    mask = np.asarray(mask, dtype=bool).copy()
    if cx.frozen_mask(i)[cell]:
        raise ValueError("cell is frozen open")
    mask[cell] = False
    ids = np.flatnonzero(mask)
    r0 = rank_of_columns(cx, i, params.q_field, ids)
    r1 = rank_of_columns(cx, i, params.q_field, np.append(ids, cell))
    return params.p if r1 == r0 else params.p_hat


class GlauberChain:
    """Systematic-scan heat-bath chain on the plaquettes.

    Keeps the span of the open plaquette boundaries in an
    :class:`IncrementalRank`; rebuilt from scratch once per sweep.
    """

    def __init__(self, cx, params, rng, init=None):
        _check_params(cx, params)
        self.cx = cx
        self.params = params
        self.rng = rng
        i = params.i
        self.n = cx.n_cells(i)
        self.frozen = cx.frozen_mask(i)
        self.cols = _columns(cx, i, params.q_field)
        self.mask = np.zeros(self.n, dtype=bool) if init is None else np.asarray(init, dtype=bool).copy()
        self.mask |= self.frozen
        self.free = np.flatnonzero(~self.frozen)
        self.inc = IncrementalRank(params.q_field, cx.n_cells(i - 1))
        for j in np.flatnonzero(self.mask).tolist():
            self.inc.add(j, self.cols[j])

    def step(self, j, u):
        inc, col = self.inc, self.cols[j]
        if self.mask[j]:
            drop = inc.remove(j)
        else:
            drop = inc.would_add(col)
        prob = self.params.p_hat if drop else self.params.p
        if u < prob:
            self.mask[j] = True
            inc.add(j, col)
        else:
            self.mask[j] = False

    def sweep(self):
        us = self.rng.random(self.free.size)
        for j, u in zip(self.free.tolist(), us.tolist()):
            self.step(j, u)
        self.inc.rebuild()

    def state(self):
        return self.mask.copy()


class BernoulliSampler:
    """q = 1: independent plaquettes, exact after every sweep."""

    def __init__(self, cx, params, rng, init=None):
        self.cx, self.params, self.rng = cx, params, rng
        self.frozen = cx.frozen_mask(params.i)
        self.mask = self.frozen.copy()

    def sweep(self):
        self.mask = (self.rng.random(self.frozen.size) < self.params.p) | self.frozen

    def state(self):
        return self.mask.copy()


def make_sampler(cx, params, rng, kind="auto"):
    if kind == "auto":
        if params.q == 1:
            kind = "bernoulli"
        elif params.coupling_ok():
            kind = "sw"
        else:
            kind = "glauber"
    if kind == "bernoulli":
        if params.q != 1:
            raise ValueError("the Bernoulli sampler is exact only for q = 1")
        return BernoulliSampler(cx, params, rng)
    if kind == "glauber":
        return GlauberChain(cx, params, rng)
    if kind == "sw":
        from .pltg import SwendsenWangRcm

        return SwendsenWangRcm(cx, params, rng)
    raise ValueError(f"unknown sampler {kind!r}")


def glauber_chain(cx, params, sweeps, seed):
    """Yield the configuration after each of ``sweeps`` sweeps."""
    chain = GlauberChain(cx, params, chain_rngs(seed, 1)[0])
    for _ in range(sweeps):
        chain.sweep()
        yield chain.state()


def event_function(cx, params, event):
    """Turn an event spec ('A', 'S', ('V', gamma) or a callable) into mask -> bool."""
    i, qf = params.i, params.q_field
    if callable(event):
        return event
    if event in ("A", "S"):
        if not cx.is_torus:
            raise ValueError("giant-cycle events need a torus")
        full = math.comb(cx.d, i)
        if event == "A":
            return lambda m: giant_count(cx, i, m, qf) >= 1
        return lambda m: giant_count(cx, i, m, qf) == full
    if isinstance(event, tuple) and event[0] == "V":
        gamma = event[1]

        def in_v(m):
            return is_null_homologous(gamma, Subcomplex.plaquettes(cx, i, m), qf)

        # samplers that keep the span of the open boundaries answer directly
        in_v.gamma_vec = cx.chain_vector(gamma, qf)
        return in_v
    raise ValueError(f"unknown event {event!r}")


def batch_means(values, n_batches=20):
    """Mean and batch-means standard error of a correlated series."""
    x = np.asarray(values, dtype=float)
    n = x.size
    if n == 0:
        return math.nan, math.nan
    b = max(1, min(n_batches, n))
    size = n // b
    means = x[: b * size].reshape(b, size).mean(axis=1)
    if b < 2:
        return float(x.mean()), math.nan
    return float(x.mean()), float(means.std(ddof=1) / math.sqrt(b))


def run_chain(cx, params, event_fn, settings, rng):
    sampler = make_sampler(cx, params, rng, settings.sampler)
    for _ in range(settings.burn_in):
        sampler.sweep()
    out = np.empty(settings.n_samples)
    for t in range(settings.n_samples):
        for _ in range(max(1, settings.thin)):
            sampler.sweep()
        out[t] = float(_evaluate(event_fn, sampler))
    return out


def _evaluate(event_fn, sampler):
    vec = getattr(event_fn, "gamma_vec", None)
    if vec is not None and hasattr(sampler, "bounds"):
        return sampler.bounds(vec)
    return event_fn(sampler.state())


def _max_workers(n):
    cap = os.environ.get("PLAQUETTE_RCM_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n, limit))


def _chain_job(args):
    cx, params, event, settings, rng = args
    return run_chain(cx, params, event_function(cx, params, event), settings, rng)


def sample_chains(cx, params, event, settings):
    """Per-chain arrays of event indicators, in chain-index order."""
    rngs = chain_rngs(settings.seed, settings.n_chains)
    jobs = [(cx, params, event, settings, r) for r in rngs]
    workers = _max_workers(settings.n_chains)
    if workers == 1 or callable(event):
        return [_chain_job(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_chain_job, jobs))


def estimate_event(cx, params, event, settings):
    """Monte Carlo estimate of the probability of ``event`` with its standard error."""
    per_chain = sample_chains(cx, params, event, settings)
    return pool_estimates(per_chain)


def pool_estimates(per_chain, n_batches=20):
    """Pool chains: mean over all samples, SE from the pooled batch means."""
    allv = np.concatenate(per_chain) if per_chain else np.array([])
    if allv.size == 0:
        return math.nan, math.nan
    b = max(1, n_batches // len(per_chain))
    means = []
    for v in per_chain:
        size = max(1, v.size // b)
        k = v.size // size
        means.extend(v[: k * size].reshape(k, size).mean(axis=1).tolist())
    means = np.asarray(means)
    se = float(means.std(ddof=1) / math.sqrt(means.size)) if means.size > 1 else math.nan
    return float(allv.mean()), se


# Exact probes on enumerable complexes.

def transition_matrices(cx, params):
    """Single-site heat-bath kernels K_j on the enumerated state space.

    Returns (configs, list of K_j) with rows indexed like ``configs``.
    """
    i = params.i
    n = cx.n_cells(i)
    frozen = cx.frozen_mask(i)
    configs = enumerate_configs(n, frozen)
    index = {c.tobytes(): s for s, c in enumerate(configs)}
    kernels = []
    for j in np.flatnonzero(~frozen).tolist():
        K = np.zeros((len(configs), len(configs)))
        for s, c in enumerate(configs):
            pr = conditional_open_probability(cx, c, j, params)
            up, dn = c.copy(), c.copy()
            up[j], dn[j] = True, False
            K[s, index[up.tobytes()]] += pr
            K[s, index[dn.tobytes()]] += 1 - pr
        kernels.append(K)
    return configs, kernels


def sweep_matrix(kernels):
    out = np.eye(kernels[0].shape[0])
    for K in kernels:
        out = out @ K
    return out


def detailed_balance_residual(pi, K):
    F = pi[:, None] * K
    return float(np.abs(F - F.T).max())


def fkg_probe(cx, params, n_pairs=200, seed=0):
    """Exact checks of positive association on an enumerable complex.

    Reports the minimal covariance slack over all pairs of single-plaquette
    open events and over all pairs of up-sets generated by one plaquette,
    and the minimal slack of the lattice condition over random pairs.
    """
    table = exact_distribution(cx, params)
    C, pr = table.configs, table.probs
    n = C.shape[1]
    marg = pr @ C
    joint = (C.T * pr) @ C
    cov_slack = float((joint - np.outer(marg, marg)).min())
    # increasing events "at least k open among a window" for a few windows
    lw = dict(zip((c.tobytes() for c in C), table.log_weights))
    rng = np.random.default_rng(seed)
    lattice = math.inf
    for _ in range(n_pairs):
        a, b = C[rng.integers(len(C))], C[rng.integers(len(C))]
        lhs = lw[(a | b).tobytes()] + lw[(a & b).tobytes()]
        rhs = lw[a.tobytes()] + lw[b.tobytes()]
        lattice = min(lattice, math.exp(lhs - 2 * table.log_Z) - math.exp(rhs - 2 * table.log_Z))
    eta_events = []
    for k in range(1, n + 1):
        e = (C.sum(axis=1) >= k).astype(float)
        for j in range(n):
            f = C[:, j].astype(float)
            eta_events.append(float(pr @ (e * f) - (pr @ e) * (pr @ f)))
    return {"min_pair_slack": cov_slack, "min_lattice_slack": lattice,
            "min_count_slack": min(eta_events), "n_pairs": n_pairs}


def q_monotonicity_probe(cx, p, qs, i=1, q_field=2, fixed="p"):
    """Exact E[eta] for each q at fixed p (or fixed p_hat when fixed='p_hat')."""
    out = []
    for q in qs:
        if fixed == "p":
            pp = p
        else:
            # invert p_hat(p, q) = ph
            ph = p
            pp = ph * q / (1 - ph + ph * q)
        params = RcmParams(pp, q, i, q_field)
        t = exact_distribution(cx, params)
        out.append({"q": q, "p": pp, "mean_eta": t.expect(t.eta)})
    means = [r["mean_eta"] for r in out]
    if fixed == "p":
        ok = all(b <= a + 1e-12 for a, b in zip(means, means[1:]))
    else:
        ok = all(b >= a - 1e-12 for a, b in zip(means, means[1:]))
    return {"fixed": fixed, "rows": out, "monotone": ok}


def balanced_density_bounds(cx, p, q, i, q_field=None):
    """Extremes of the balanced/unbalanced density ratio over all configs."""
    params = RcmParams(p, q, i, q_field)
    t = exact_distribution(cx, params)
    bal = t.log_weights - math.log(q) / 2 * t.giant - t.extra["log_Z_balanced"]
    unb = t.log_weights - t.log_Z
    ratio = np.exp(bal - unb)
    half = math.comb(cx.d, i) / 2
    return {"min": float(ratio.min()), "max": float(ratio.max()),
            "lower": q ** -half, "upper": q ** half}


def graph_b0(cx, mask):
    return graph_components(cx, mask)[0]
