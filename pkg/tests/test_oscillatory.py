import numpy as np
import pytest

from q1dlab.errors import ResonanceWarning, StatisticalPowerError
from q1dlab.lattice import NoiseSpec, SymmetricOperator, noise_slices, path_graph, scale
from q1dlab.oscillatory import (
    KINDS, canonical_pairs, covariance_experiment, drift_sum, geometric_phase_sum,
    geometric_sum_bound, matrix_oscillatory_sums, oscillatory_batch, scalar_oscillatory_sum,
    scalar_oscillatory_sums,
)
from q1dlab.transfer import build_frame, coefficient_expansion

from conftest import brute_gram


@pytest.fixture(scope="module")
def frame3():
    return build_frame(0.3, scale(path_graph(3), 0.7))


def loop_sums(frame, v):
    """A_n, B_n by summing Z^k V^O Z^-/+k one step at a time."""
    m = frame.m
    A = np.zeros((m, m), dtype=complex)
    B = np.zeros((m, m), dtype=complex)
    for k, vk in enumerate(v, start=1):
        vo = frame.O @ np.diag(vk) @ frame.O.T
        z = np.exp(1j * k * frame.theta)
        A += np.diag(z) @ vo @ np.diag(np.conj(z))
        B += np.diag(z) @ vo @ np.diag(z)
    return A, B


def _var_se(x):
    x = np.asarray(x)
    return x.var(), np.sqrt(np.var((x - x.mean()) ** 2) / len(x))


# scalar sums

def test_scalar_real_brownian():
    s = scalar_oscillatory_sums(0.0, 10_000, NoiseSpec(seed=3), 10_000)
    assert np.all(s.imag == 0)
    v, se = _var_se(s.real)
    assert abs(v - 1.0) < 5 * se


def test_scalar_complex_brownian():
    s = scalar_oscillatory_sums(np.pi / 2, 4000, NoiseSpec(seed=4), 4000)
    for part in (s.real, s.imag):
        v, se = _var_se(part)
        assert abs(v - 0.5) < 5 * se
    m2 = np.abs(s) ** 2
    assert abs(m2.mean() - 1.0) < 5 * m2.std() / np.sqrt(len(m2))


def test_scalar_zero_amplitude():
    assert scalar_oscillatory_sum(0.7, 100, NoiseSpec(amplitude=0.0)) == 0


# matrix sums

def test_zero_noise_gives_zero(frame3):
    A, B = matrix_oscillatory_sums(frame3, 50, NoiseSpec(amplitude=0.0))
    assert np.all(A == 0) and np.all(B == 0)


def test_single_step_modulus(frame3):
    noise = NoiseSpec(seed=11)
    A, B = matrix_oscillatory_sums(frame3, 1, noise)
    vo = frame3.rotate_potential(noise_slices(noise, 3, 1, 1.0)[0])
    assert np.allclose(np.abs(A), np.abs(vo), atol=1e-14)
    assert np.allclose(np.abs(B), np.abs(vo), atol=1e-14)


def test_matches_stepwise_loop(frame3, rng):
    v = rng.standard_normal((300, 3))
    A, B = oscillatory_batch(frame3, v[None])
    A0, B0 = loop_sums(frame3, v)
    assert np.allclose(A[0], A0, atol=1e-11)
    assert np.allclose(B[0], B0, atol=1e-11)


@pytest.mark.parametrize("n", [1, 17, 5000])
def test_hermitian_and_symmetric(frame3, n):
    A, B = matrix_oscillatory_sums(frame3, n, NoiseSpec(seed=n))
    assert np.abs(A - A.conj().T).max() < 1e-12
    assert np.abs(B - B.T).max() < 1e-12


def test_linear_in_amplitude(frame3):
    A1, B1 = matrix_oscillatory_sums(frame3, 400, NoiseSpec(amplitude=1.0, seed=5))
    A2, B2 = matrix_oscillatory_sums(frame3, 400, NoiseSpec(amplitude=2.0, seed=5))
    assert np.array_equal(A2, 2 * A1) and np.array_equal(B2, 2 * B1)


# covariances

def test_canonical_pairs():
    assert canonical_pairs(2) == [(0, 0), (0, 1), (1, 1)]


@pytest.fixture(scope="module")
def small_experiment(frame3):
    return covariance_experiment(frame3, 4000, 600, NoiseSpec(seed=21))


def test_gram_target_off_diagonal(small_experiment):
    row = small_experiment.row("AĀ", (1, 2), (1, 2))
    assert row.theoretical == pytest.approx(brute_gram(3)[0, 1], abs=1e-14)
    assert row.deviation < 3


def test_cross_term_vanishes(small_experiment):
    row = small_experiment.row("AB̄", (1, 2), (1, 2))
    assert row.theoretical == 0
    assert row.deviation < 3


def test_report_shape(small_experiment):
    rows = small_experiment.rows
    assert len(rows) == 4 * (6 * 7 // 2) + 36
    assert {r.kind for r in rows} == set(KINDS)
    assert all(r.n_steps == 4000 and r.n_trials == 600 for r in rows)
    assert small_experiment.warning == ""
    assert small_experiment.verdict in (True, False)


def test_resonant_frame_has_no_verdict():
    f = build_frame(0.0, SymmetricOperator([[0.0]]))
    with pytest.warns(ResonanceWarning):
        res = covariance_experiment(f, 100, 100, NoiseSpec())
    assert res.verdict is None and res.warning


def test_too_few_trials(frame3):
    with pytest.raises(StatisticalPowerError):
        covariance_experiment(frame3, 100, 99, NoiseSpec())


def test_universality_of_second_moments(frame3):
    g = covariance_experiment(frame3, 2000, 400, NoiseSpec("gaussian", seed=1))
    r = covariance_experiment(frame3, 2000, 400, NoiseSpec("rademacher", seed=2))
    for a, b in zip(g.rows, r.rows):
        if a.kind == "AĀ" and a.first == a.second:
            assert abs(a.empirical - b.empirical) < 3 * np.hypot(a.standard_error, b.standard_error)


@pytest.mark.slow
def test_convergence_with_n(frame3):
    gram = brute_gram(3)
    prev = None
    for n in (1000, 10_000, 100_000):
        row = covariance_experiment(frame3, n, 200, NoiseSpec(seed=n)).row("AĀ", (1, 2), (1, 2))
        err = abs(row.empirical - gram[0, 1])
        if prev is not None:
            assert err <= prev + 2 * row.standard_error
        prev = err


# drift

def test_drift_zero_offset(frame3):
    assert np.all(drift_sum(frame3, 1000, 0.0) == 0)


def test_drift_full_periods():
    f = build_frame(1.0, SymmetricOperator([[0.0]]))
    assert f.theta[0] == pytest.approx(np.pi / 3)
    D = drift_sum(f, 300, 0.4)
    assert abs(D[0, 1]) < 1e-12 and abs(D[1, 0]) < 1e-12


def test_drift_matches_stepwise_sum(frame3):
    n, off = 200, 0.37
    total = sum(coefficient_expansion(frame3, np.zeros(3), k, off) for k in range(1, n + 1))
    assert np.allclose(drift_sum(frame3, n, off), total, atol=1e-11)


def test_drift_blocks_m2():
    f = build_frame(0.3, scale(path_graph(2), 0.7))
    n, off = 100_000, 0.25
    D = drift_sum(f, n, off)
    s2 = f.S_half ** 2
    assert np.array_equal(np.diag(D)[:2], 1j * off * (n * s2))
    assert np.array_equal(np.diag(D)[2:], 1j * off * (-n * s2))
    off_block = D[:2, 2:]
    assert np.linalg.norm(off_block, 2) <= abs(off) * s2.max() * geometric_sum_bound(f.theta)
    assert np.all(np.abs(geometric_phase_sum(f.theta, n)) <= geometric_sum_bound(f.theta))
