import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from doalab import (ca, cor, energy_ratios, esa, final_filter, masked_filter, metrics_report,
                    nsa, preliminary_filter, simulate_scene, ssfa)
from doalab.metrics import DB_CAP, ratio_db

import oracles
from conftest import small_manifold


def random_instance(seed):
    rng = np.random.default_rng(seed)
    M = int(rng.integers(2, 9))
    R = int(rng.choice([12, 18, 24, 36]))
    T = int(rng.integers(1, 5))
    K = int(rng.integers(1, min(M, 4)))
    A = np.exp(2j * np.pi * rng.random((M, R)))
    B = rng.standard_normal((R, M)) + 1j * rng.standard_normal((R, M))
    src = rng.choice(R, K, replace=False)
    S = np.zeros((R, T), dtype=complex)
    S[src] = rng.standard_normal((K, T)) + 1j * rng.standard_normal((K, T))
    N = 0.3 * (rng.standard_normal((M, T)) + 1j * rng.standard_normal((M, T)))
    return A, B, S, N, A @ S + N, sorted(src.tolist())


@pytest.mark.parametrize("seed", range(10))
def test_metrics_match_double_loops(seed):
    A, B, S, N, X, src = random_instance(seed)
    rel = dict(rel=1e-12)
    assert ssfa(B, A, chunk=5) == pytest.approx(oracles.ssfa_loop(B, A), **rel)
    assert nsa(B, N) == pytest.approx(oracles.nsa_loop(B, N), **rel)
    assert esa(B, A, S) == pytest.approx(oracles.esa_loop(B, A, S), **rel)
    assert ca(B, X, S) == pytest.approx(oracles.ca_loop(B, X, S), **rel)
    er = energy_ratios(B, A, S, N)
    want = oracles.energy_loop(B, A, S, N, len(src))
    got = (er.I_bar, er.N_bar, er.S_bar, er.SIR_B_db, er.SNR_B_db, er.SNIR_B_db)
    for g, w in zip(got, want):
        assert g == pytest.approx(w, **rel)
    P = np.abs(B @ X[:, 0]) ** 2
    assert cor(P, src) == pytest.approx(oracles.cor_loop(P, src), **rel)


def test_trivial_values():
    m = small_manifold(M=4, R=4)
    A = m.entries
    assert ssfa(np.linalg.pinv(A), A) < 1e-12  # square invertible: B A = E
    B = preliminary_filter(m).B
    assert nsa(B, np.zeros((4, 3))) == 0.0
    assert esa(B, A, np.zeros((4, 2))) == 0.0
    rng = np.random.default_rng(0)
    N = rng.standard_normal((4, 3)) + 0j
    assert nsa(B, 2 * N) == 2 * nsa(B, N)


def test_ssfa_decreases_with_m():
    m16 = small_manifold(M=16, R=360, V=8000.0)
    m64 = small_manifold(M=64, R=360, V=8000.0)
    assert ssfa(preliminary_filter(m64), m64) < ssfa(preliminary_filter(m16), m16)


def test_nsa_decreases_with_m():
    rng = np.random.default_rng(3)
    vals = {}
    for M in (16, 256):
        m = small_manifold(M=M, R=360, V=8000.0)
        N = (rng.standard_normal((M, 20)) + 1j * rng.standard_normal((M, 20))) / math.sqrt(2)
        vals[M] = nsa(preliminary_filter(m), N)
    assert vals[256] < vals[16]


def test_noise_free_exact_masking():
    m = small_manifold(M=8, R=72, V=80.0, seed=1)
    sc = simulate_scene(m, [5, 30, 61], T=3, snr_db=math.inf, seed=2)
    f = final_filter(m, [5, 30, 61])
    assert esa(f, m, sc.S) < 1e-9
    assert ca(f, sc.X, sc.S) < 1e-9
    assert ca(f, sc.X, sc.S) == esa(f, m, sc.S)


def test_esa_grows_beyond_capacity():
    m = small_manifold(M=8, R=72, V=80.0, seed=1)
    src = list(range(0, 72, 7))[:10]
    sc = simulate_scene(m, src[:3], T=2, snr_db=math.inf, seed=0)
    few = esa(final_filter(m, src[:3]), m, sc.S)
    big = simulate_scene(small_manifold(M=12, R=72, V=80.0, seed=1), src, T=2, seed=0,
                         snr_db=math.inf).S
    many = esa(masked_filter(m, src[:7]), m, big)
    assert many > few


def test_energy_ratio_sentinels_and_ordering():
    m = small_manifold(M=6, R=36)
    sc = simulate_scene(m, [4, 20], T=2, snr_db=math.inf, seed=3)
    er = energy_ratios(preliminary_filter(m), m, sc.S, sc.N)
    assert er.SNR_B_db == DB_CAP and er.flags["SNR_B_db"] == "capped"
    assert er.SNIR_B_db <= min(er.SIR_B_db, er.SNR_B_db)


def test_sir_scale_invariance_on_exact_support():
    m = small_manifold(M=8, R=72, V=80.0, seed=1)
    sc = simulate_scene(m, [5, 30], T=3, snr_db=10.0, seed=2)
    f = masked_filter(m, [5])
    a = energy_ratios(f, m, sc.S, sc.N).SIR_B_db
    b = energy_ratios(f, m, 2 * sc.S, sc.N).SIR_B_db
    assert abs(a - b) < 1e-9


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_snir_bounded_by_components(seed):
    A, B, S, N, X, src = random_instance(seed)
    er = energy_ratios(B, A, S, N)
    assert er.SNIR_B_db <= min(er.SIR_B_db, er.SNR_B_db) + 1e-12


def test_cor_examples():
    assert cor(np.ones(100), [3, 50]) == 0.0
    ind = np.zeros(100)
    ind[[3, 50]] = 1.0
    flags = {}
    assert cor(ind, [3, 50], flags=flags) == DB_CAP and flags["COR_db"] == "capped"
    with pytest.raises(ValueError):
        cor(np.ones(4), [])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), scale=st.sampled_from([0.5, 2.0, 4.0, 0.125, 1024.0]))
def test_cor_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    P = rng.random(60) + 1e-3
    src = rng.choice(60, 3, replace=False).tolist()
    assert cor(scale * P, src) == cor(P, src)


def test_cor_tolerance_window():
    P = np.ones(20)
    P[[4, 5, 6]] = 3.0
    assert cor(P, [5], tolerance=1) == pytest.approx(10 * math.log10(3.0))
    assert cor(P, [5]) == pytest.approx(10 * math.log10(19 * 3.0 / (2 * 3.0 + 17)))


def test_ratio_db_caps():
    f = {}
    assert ratio_db(0.0, 1.0, f, "x") == -DB_CAP
    assert ratio_db(1e-400 + 1e-320, 1.0, f, "y") == -DB_CAP
    assert ratio_db(2.0, 0.0) == DB_CAP
    assert ratio_db(0.0, 0.0) == 0.0
    assert ratio_db(10.0, 1.0) == pytest.approx(10.0)


def test_metrics_report_finite():
    m = small_manifold(M=8, R=72, V=80.0, seed=1)
    sc = simulate_scene(m, [5, 30], T=3, snr_db=10.0, seed=2)
    rep = metrics_report(final_filter(m, [5, 30]), m, sc, excluded=[5, 30])
    d = rep.as_dict()
    for k, v in d.items():
        if k != "flags":
            assert math.isfinite(v), k
    assert rep.SNIR_B_db <= min(rep.SIR_B_db, rep.SNR_B_db)
    empty = simulate_scene(m, [], T=2, seed=0)
    rep0 = metrics_report(preliminary_filter(m), m, empty)
    assert rep0.COR_db == -DB_CAP and "COR_db" in rep0.flags
