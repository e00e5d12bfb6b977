import cmath
import math

import numpy as np
import pytest

from plaquette_rcm.cubical import Cell, Chain, build_box, build_grid, build_torus
from plaquette_rcm.homology import Subcomplex, is_null_homologous
from plaquette_rcm.pltg import (LoopSpec, SwendsenWangChain, all_cochains, area_perimeter_scan,
                                beta_to_p, centered_square, coboundary, compare_v, couple_cocycle,
                                couple_sample, coupling_marginal_check, exact_gibbs, hamiltonian,
                                nonlocal_move_rate, p_to_beta, rate_spread, sw_transition_matrix,
                                swendsen_wang_step, wilson_expectation, wilson_identity_check,
                                wilson_loop)
from plaquette_rcm.rcm import ChainSettings, chain_rngs, detailed_balance_residual

SQ = build_grid((1, 1))


def test_hamiltonian_examples():
    cx = build_torus(3, 3, max_dim=2)
    assert hamiltonian(cx, 2, np.zeros(cx.n_cells(1), dtype=int), 3) == -cx.n_cells(2)
    rng = np.random.default_rng(0)
    g = rng.integers(0, 3, size=cx.n_cells(0))
    f = coboundary(cx, 1, g, 3)
    assert hamiltonian(cx, 2, f, 3) == -cx.n_cells(2)
    one_side = np.zeros(4, dtype=int)
    one_side[0] = 1
    assert hamiltonian(SQ, 2, one_side, 2) == 0


def test_gauge_invariance():
    cx = build_torus(3, 2, max_dim=2)
    rng = np.random.default_rng(1)
    for _ in range(20):
        f = rng.integers(0, 5, size=cx.n_cells(1))
        g = rng.integers(0, 5, size=cx.n_cells(0))
        assert hamiltonian(cx, 2, f, 5) == hamiltonian(cx, 2, (f + coboundary(cx, 1, g, 5)) % 5, 5)


def test_exact_gibbs():
    g = exact_gibbs(SQ, 2, 2, 0.0)
    assert np.allclose(g.probs, 1 / 16)
    g = exact_gibbs(SQ, 2, 2, 1.0)
    sat = g.probs[g.satisfied == 1].sum()
    assert sat == pytest.approx(math.e / (math.e + 1), abs=1e-12)
    # gauge orbits carry equal mass
    box = build_grid((2, 1))
    g = exact_gibbs(box, 2, 3, 0.7)
    index = {tuple(f): k for k, f in enumerate(g.states.tolist())}
    rng = np.random.default_rng(2)
    for _ in range(20):
        k = rng.integers(len(g.states))
        h = rng.integers(0, 3, size=box.n_cells(0))
        k2 = index[tuple((g.states[k] + coboundary(box, 1, h, 3)) % 3)]
        assert g.probs[k] == pytest.approx(g.probs[k2], rel=1e-12)
    with pytest.raises(ValueError):
        exact_gibbs(build_torus(3, 3, max_dim=2), 2, 3, 1.0)


def test_couple_sample_respects_satisfaction():
    cx = build_torus(3, 3, max_dim=2)
    rng = np.random.default_rng(3)
    z = np.zeros(cx.n_cells(1), dtype=int)
    m = couple_sample(cx, 2, z, 0.3, 3, rng)
    assert 0.2 < m.mean() < 0.4
    for _ in range(10):
        f = rng.integers(0, 3, size=cx.n_cells(1))
        m = couple_sample(cx, 2, f, 0.9, 3, rng)
        assert (coboundary(cx, 2, f, 3)[m] == 0).all()


@pytest.mark.parametrize("i,d", [(1, 2), (2, 3), (2, 4)])
def test_couple_cocycle_is_cocycle(i, d):
    cx = build_torus(d, 3 if d < 4 else 2, max_dim=i + 1 if i + 1 <= d else d)
    rng = np.random.default_rng(i + d)
    for q in (2, 3):
        for _ in range(5):
            m = rng.random(cx.n_cells(i)) < rng.random()
            f = couple_cocycle(cx, i, m, q, rng)
            assert (coboundary(cx, i, f, q)[m] == 0).all()


def test_couple_cocycle_skeleton_uniform():
    # no open plaquettes: uniform over all cochains of the 1-square
    rng = np.random.default_rng(0)
    counts = np.zeros(16)
    for _ in range(16000):
        f = couple_cocycle(SQ, 2, np.zeros(1, dtype=bool), 2, rng)
        counts[int(f @ (1 << np.arange(4)))] += 1
    assert counts.min() > 850 and counts.max() < 1150


def test_sw_beta_zero_uniform():
    rng = np.random.default_rng(4)
    f = np.ones(4, dtype=int)
    seen = set()
    for _ in range(400):
        f, m = swendsen_wang_step(SQ, 2, f, 0.0, 2, rng)
        assert not m.any()
        seen.add(tuple(f))
    assert len(seen) == 16


@pytest.mark.parametrize("q", [2, 3])
def test_sw_transition_stationary(q):
    for beta in (0.5, 1.0):
        _, T = sw_transition_matrix(SQ, 2, q, beta)
        g = exact_gibbs(SQ, 2, q, beta)
        assert np.allclose(T.sum(axis=1), 1)
        assert np.abs(g.probs @ T - g.probs).max() < 1e-10
        assert detailed_balance_residual(g.probs, T) < 1e-10


def test_sw_transition_stationary_i1():
    box = build_grid((2, 1))
    _, T = sw_transition_matrix(box, 1, 3, 0.8)
    g = exact_gibbs(box, 1, 3, 0.8)
    assert np.abs(g.probs @ T - g.probs).max() < 1e-10


@pytest.mark.parametrize("cx,i", [(SQ, 1), (build_grid((2, 2)), 1), (build_grid((1, 1, 1)), 2)])
def test_coupling_marginals(cx, i):
    for q in (2, 3):
        for beta in (0.5, 1.0):
            if q ** cx.n_cells(i - 1) > 2 ** 20:
                continue
            r = coupling_marginal_check(cx, i, q, beta)
            assert r["tv_spin"] < 1e-12 and r["tv_rcm"] < 1e-12


def test_loop_spec():
    cx = build_box(3, 4, max_dim=2)
    loop = centered_square(3, 3)
    gamma = loop.chain(cx)
    assert loop.area == 9 and loop.perimeter(cx) == 12
    assert len(loop.filling(cx)) == 9
    from plaquette_rcm.homology import is_cycle
    assert is_cycle(cx, gamma, 2) and is_cycle(cx, gamma, 3)
    r = LoopSpec((0, 0, 0), (2, 3), (0, 2))
    assert r.area == 6 and r.perimeter(cx) == 10


def test_wilson_loop_values():
    cx = build_torus(2, 4)
    gamma = centered_square(2, 2).chain(cx)
    assert wilson_loop(cx, np.zeros(cx.n_cells(1), dtype=int), gamma, 3) == (0, 1)
    rng = np.random.default_rng(5)
    for _ in range(20):
        f = rng.integers(0, 3, size=cx.n_cells(1))
        g = rng.integers(0, 3, size=cx.n_cells(0))
        v, w = wilson_loop(cx, f, gamma, 3)
        assert abs(w - cmath.exp(2j * math.pi * v / 3)) < 1e-15
        assert wilson_loop(cx, (f + coboundary(cx, 1, g, 3)) % 3, gamma, 3)[0] == v
    with pytest.raises(ValueError):
        wilson_loop(cx, np.zeros(cx.n_cells(1), dtype=int), Chain(1, {Cell((0, 0), (0,)): 1}), 3)


def test_wilson_homology_invariance():
    # gamma and gamma' homologous in P, f a cocycle of P: equal Wilson values
    cx = build_torus(2, 4)
    rng = np.random.default_rng(6)
    small = centered_square(2, 1).chain(cx)
    for _ in range(30):
        m = rng.random(cx.n_cells(2)) < 0.5
        f = couple_cocycle(cx, 2, m, 3, rng)
        for j in np.flatnonzero(m)[:3]:
            gamma2 = small + cx.boundary(cx.cells[2][j])
            assert wilson_loop(cx, f, small, 3)[0] == wilson_loop(cx, f, gamma2, 3)[0]


@pytest.mark.parametrize("cx,i,loop", [
    (SQ, 1, LoopSpec((0, 0), (1,), (0,))),
    (build_grid((2, 2)), 1, LoopSpec((0, 0), (2,), (0,))),
    (build_grid((1, 1, 1)), 2, LoopSpec((0, 0, 0), (1, 1), (0, 1))),
])
def test_wilson_identities_exact(cx, i, loop):
    for q in (2, 3):
        r = wilson_identity_check(cx, i, q, 1.0, loop.chain(cx))
        assert r["err_W"] < 1e-12 and r["err_tau"] < 1e-12
        assert r["err_law_not_V"] < 1e-12 and r["err_law_V"] < 1e-12


def test_two_point_extremes():
    # beta -> infinity: every plaquette open, V holds, tau = 1 - 1/q
    r = wilson_identity_check(SQ, 1, 2, 60.0, LoopSpec((0, 0), (1,), (0,)).chain(SQ))
    assert r["mu_V"] == pytest.approx(1.0) and r["tau"] == pytest.approx(0.5)
    r = wilson_identity_check(SQ, 1, 3, 0.0, LoopSpec((0, 0), (1,), (0,)).chain(SQ))
    assert r["mu_V"] == 0 and abs(r["tau"]) < 1e-15


def test_beta_p_roundtrip():
    for p in (0.0, 0.3, 0.99):
        assert beta_to_p(p_to_beta(p)) == pytest.approx(p)
    assert beta_to_p(math.inf) == 1.0


def test_wilson_vs_v_statistical():
    cx = build_box(3, 3, max_dim=2)
    gamma = centered_square(3, 2).chain(cx)
    s = ChainSettings(n_samples=1500, burn_in=50, thin=1, seed=7)
    beta = p_to_beta(0.7)
    w, se_re, se_im = wilson_expectation(cx, 2, 2, beta, gamma, s)
    v, se_v = compare_v(cx, 2, 2, 0.7, gamma, s)
    assert abs(w.real - v) < 3 * math.hypot(se_re, se_v) + 0.01
    assert abs(w.imag) < 1e-12


def test_sw_bounds_matches_solver():
    cx = build_box(3, 2, max_dim=2)
    gamma = centered_square(3, 2).chain(cx)
    vec = cx.chain_vector(gamma, 2)
    ch = SwendsenWangChain(cx, 2, 2, p_to_beta(0.6), chain_rngs(0, 1)[0])
    for _ in range(20):
        ch.sweep()
        ref = is_null_homologous(gamma, Subcomplex.plaquettes(cx, 2, ch.mask), 2)
        assert ch.bounds(vec) == ref
    cx1 = build_torus(2, 4)
    g0 = LoopSpec((0, 0), (2,), (0,)).chain(cx1)
    ch = SwendsenWangChain(cx1, 1, 3, 0.8, chain_rngs(1, 1)[0])
    for _ in range(20):
        ch.sweep()
        ref = is_null_homologous(g0, Subcomplex.plaquettes(cx1, 1, ch.mask), 3)
        assert ch.bounds(cx1.chain_vector(g0, 3)) == ref


def test_nonlocal_rate_trend():
    cx = build_torus(4, 2, max_dim=3)
    s = ChainSettings(n_samples=40, burn_in=10, thin=1, seed=0)
    hi, _ = nonlocal_move_rate(cx, 2, 3, p_to_beta(0.95), s)
    lo, _ = nonlocal_move_rate(cx, 2, 3, p_to_beta(0.2), s)
    assert hi > 1 - 3 ** -6 - 0.05 and lo < hi


def test_area_perimeter_scan_small():
    cx = build_box(3, 3, max_dim=2)
    s = ChainSettings(n_samples=100, burn_in=10, thin=1, seed=1)
    out = area_perimeter_scan(cx, 2, 2, [0.9], [1, 2], s)
    rows = out["rows"]
    assert [r["n"] for r in rows] == [1, 2]
    # n = 1 loops bound whenever their own plaquette is open
    assert rows[0]["v_gamma_est"] >= rows[1]["v_gamma_est"]
    assert rate_spread([{"x": 1.0}, {"x": 1.0}], "x") == 0.0
    assert rate_spread([{"x": math.inf}, {"x": 1.0}], "x") == math.inf


def test_all_cochains_guard():
    assert all_cochains(3, 2).shape == (8, 3)
    with pytest.raises(ValueError):
        all_cochains(30, 3)


def test_single_plaquette_loop_lower_bound():
    # the boundary of one plaquette bounds whenever that plaquette is open,
    # and its conditional open probability is never below p_hat
    from plaquette_rcm.rcm import p_hat

    cube = build_grid((1, 1, 1))
    gamma = LoopSpec((0, 0, 0), (1, 1), (0, 1)).chain(cube)
    from plaquette_rcm.pltg import v_gamma_exact
    for q in (2, 3):
        for p in (0.2, 0.5, 0.8):
            v = v_gamma_exact(cube, 2, q, p, gamma)
            assert v >= p_hat(p, q) - 1e-12
    # and it can fall below p itself
    assert v_gamma_exact(cube, 2, 3, 0.5, gamma) < 0.5
