"""Duality of the plaquette random-cluster model on tori.

p* = (1-p) q / ((1-p) q + p) is a decreasing involution with fixed point
p_sd = sqrt(q) / (1 + sqrt(q)).  The balanced i-model at p and the
balanced (d-i)-model at p* are carried into each other by P -> P*.
"""

from __future__ import annotations

import math

import numpy as np

from .cubical import build_torus, dual_mask, dual_permutation
from .homology import eta_offset_constant
from .rcm import RcmParams, config_stats, exact_distribution, log_weight_from_stats


def p_sd(q):
    s = math.sqrt(q)
    return s / (1 + s)


def beta_sd(q):
    return math.log1p(math.sqrt(q))


def dual_p(p, q):
    if not 0 <= p <= 1 or q < 1:
        raise ValueError("need p in [0, 1] and q >= 1")
    return (1 - p) * q / ((1 - p) * q + p)


def dual_beta(beta, q):
    """beta* = log((e^beta + q - 1)/(e^beta - 1)); +inf at beta = 0."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if beta == 0:
        return math.inf
    return math.log((math.exp(beta) + q - 1) / math.expm1(beta))


def product_residual(p, q):
    """p p* / ((1-p)(1-p*)) - q, zero up to rounding for 0 < p < 1."""
    ps = dual_p(p, q)
    return p * ps / ((1 - p) * (1 - ps)) - q


def _field(q):
    # q = 1 gives weight q^b = 1 whatever the field; use F_2 for the algebra
    return int(q) if q > 1 else 2


def tiny_torus(d, N):
    return build_torus(d, N)


def verify_duality(N, d, i, q, p, max_cells=20):
    """Exact TV distance between the dualized balanced i-model and the balanced (d-i)-model at p*."""
    cx = tiny_torus(d, N)
    qf = _field(q)
    prim = exact_distribution(cx, RcmParams(p, q, i, qf, balanced=True), max_cells)
    dual = exact_distribution(cx, RcmParams(dual_p(p, q), q, d - i, qf, balanced=True), max_cells)
    n_dual = cx.n_cells(d - i)
    weights = 1 << np.arange(n_dual, dtype=np.int64)
    push = np.zeros(2 ** n_dual)
    for c, pr in zip(prim.configs, prim.probs):
        push[int(dual_mask(c, cx, i).astype(np.int64) @ weights)] += pr
    # enumerate_configs puts configuration sum 2^j w_j at row index that value
    tv = 0.5 * float(np.abs(push - dual.probs).sum())
    return {"N": N, "d": d, "i": i, "q": q, "p": p, "p_star": dual_p(p, q),
            "n_configs": int(len(prim.configs)), "tv": tv}


def partition_constant(cx, i, q, p):
    """log K with Z~(p, i) = K Z~(p*, d-i) for the balanced partition functions.

    K = q^(-c + C(d,i)/2 - C(d,d-i-1)) (1-p)^F / (p*)^F, F the number of
    i-cells and c the constant of b_i - b_{i-1} = eta + c.
    """
    d = cx.d
    c = eta_offset_constant(cx, i, _field(q))
    F = cx.n_cells(i)
    ps = dual_p(p, q)
    expo = -c + math.comb(d, i) / 2 - math.comb(d, d - i - 1)
    return expo * math.log(q) + F * math.log1p(-p) - F * math.log(ps), c


def literal_partition_constant(cx, i, q, p):
    """log of the prefactor in Z(p*, d-i) = q^(c + C(d,i)/2 - C(d,d-i-1)) (1-p)^F Z(p, i)."""
    d = cx.d
    c = eta_offset_constant(cx, i, _field(q))
    expo = c + math.comb(d, i) / 2 - math.comb(d, d - i - 1)
    return expo * math.log(q) + cx.n_cells(i) * math.log1p(-p)


def verify_partition_duality(N, d, i, q, p, max_cells=20):
    """Compare exact balanced partition functions at (p, i) and (p*, d-i).

    ``rel_error`` is for the identity Z~(p,i) = K Z~(p*,d-i) with K from
    :func:`partition_constant`; ``literal_rel_error`` evaluates the other
    arrangement of the same constants (see the module notes in the README).
    """
    cx = tiny_torus(d, N)
    qf = _field(q)
    ps = dual_p(p, q)
    prim = exact_distribution(cx, RcmParams(p, q, i, qf, balanced=True), max_cells)
    dual = exact_distribution(cx, RcmParams(ps, q, d - i, qf, balanced=True), max_cells)
    logK, c = partition_constant(cx, i, q, p)
    rel = abs(math.expm1(prim.log_Z - logK - dual.log_Z))
    lit = abs(math.expm1(literal_partition_constant(cx, i, q, p) + prim.log_Z - dual.log_Z))
    return {"N": N, "d": d, "i": i, "q": q, "p": p, "p_star": ps, "c": c,
            "log_Z": prim.log_Z, "log_Z_dual": dual.log_Z, "log_K": logK,
            "rel_error": rel, "literal_rel_error": lit}


def termwise_ratio_check(cx, i, q, p, configs):
    """log w~(P) - log w~*(P*) for each configuration; constant iff the duality holds termwise.

    Works on tori too large to enumerate (e.g. 96 plaquettes of T^4_2).
    Returns the spread of the log-ratios and its offset from log K.
    """
    d, qf = cx.d, _field(q)
    ps = dual_p(p, q)
    prim = RcmParams(p, q, i, qf, balanced=True)
    dual = RcmParams(ps, q, d - i, qf, balanced=True)
    perm = dual_permutation(cx, i)
    logs = []
    for m in configs:
        m = np.asarray(m, dtype=bool)
        dm = np.zeros(cx.n_cells(d - i), dtype=bool)
        dm[perm[~m]] = True
        a = log_weight_from_stats(*config_stats(cx, m, prim), cx.n_cells(i), prim)
        b = log_weight_from_stats(*config_stats(cx, dm, dual), cx.n_cells(d - i), dual)
        logs.append(a - b)
    logs = np.asarray(logs)
    logK, _ = partition_constant(cx, i, q, p)
    return {"n": int(logs.size), "spread": float(logs.max() - logs.min()),
            "max_offset": float(np.abs(logs - logK).max())}
