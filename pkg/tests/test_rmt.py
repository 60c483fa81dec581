from fractions import Fraction

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, strategies as st

from q1dlab.errors import GuardError, InsufficientDataError
from q1dlab.lattice import SpectrumSample
from q1dlab.rmt import (
    SpacingSample, ensemble_spacings, goe_matrix, ks_distance, modified_goe_matrix,
    pooled_spacings, sample_goe, sample_modified_goe, semicircle_cdf, semicircle_density,
    unfold_spacings, wigner_surmise_distance,
)


def kolmogorov_to_semicircle(values):
    x = np.sort(values)
    n = len(x)
    F = semicircle_cdf(x)
    return max(np.max(np.arange(1, n + 1) / n - F), np.max(F - np.arange(n) / n))


# semicircle

def test_semicircle_values():
    assert semicircle_density(0.0) == pytest.approx(1 / np.pi, abs=1e-15)
    assert semicircle_density(2.0) == 0 and semicircle_density(-2.0) == 0
    assert semicircle_density(3.0) == 0


def test_semicircle_normalized():
    total, _ = scipy.integrate.quad(semicircle_density, -2, 2, epsabs=1e-13)
    assert abs(total - 1.0) < 1e-10


def test_semicircle_cdf_matches_quadrature():
    for x in (-1.5, -0.3, 0.0, 0.8, 1.9):
        val, _ = scipy.integrate.quad(semicircle_density, -2, x, epsabs=1e-13)
        assert semicircle_cdf(x) == pytest.approx(val, abs=1e-10)


# ensembles

@pytest.fixture(scope="module")
def goe50():
    rng = np.random.default_rng(1)
    return [sample_goe(400, rng) for _ in range(50)]


def test_goe_semicircle(goe50):
    assert np.mean([kolmogorov_to_semicircle(s.values) for s in goe50]) < 0.05


def test_goe_edge(goe50):
    assert abs(np.median([s.values[-1] for s in goe50]) - 2.0) < 0.2


def test_goe_is_symmetric(rng):
    H = goe_matrix(5, rng)
    assert np.array_equal(H, H.T)


def test_two_by_two_repulsion(rng):
    gaps = np.array([np.diff(sample_goe(2, rng).values)[0] for _ in range(10_000)])
    assert gaps.mean() > 0 and gaps.min() > 1e-12


def test_modified_goe_semicircle():
    rng = np.random.default_rng(2)
    d = [kolmogorov_to_semicircle(sample_modified_goe(400, rng).values) for _ in range(50)]
    assert np.mean(d) < 0.07


def test_shift_does_not_change_spacings():
    a = modified_goe_matrix(200, np.random.default_rng(3), with_shift=True)
    b = modified_goe_matrix(200, np.random.default_rng(3), with_shift=False)
    shift = (a - b)[0, 0]
    assert np.allclose(a - b, shift * np.eye(200), atol=1e-15)
    ga = np.diff(np.linalg.eigvalsh(a))
    gb = np.diff(np.linalg.eigvalsh(b))
    assert np.allclose(ga, gb, atol=1e-12)


def test_modified_goe_diagonal_moments():
    rng = np.random.default_rng(4)
    n, draws = 3, 100_000
    x = np.array([modified_goe_matrix(n, rng) for _ in range(draws)]) * np.sqrt(n)
    for val, target in ((x[:, 0, 0] ** 2, 2.25), (x[:, 0, 0] * x[:, 1, 1], 1.0),
                        (x[:, 0, 1] ** 2, 1.0)):
        assert abs(val.mean() - target) < 3 * val.std() / np.sqrt(draws)


def test_size_guard():
    with pytest.raises(GuardError):
        sample_goe(1, np.random.default_rng(0))


def test_simple_spectra(goe50):
    assert min(np.diff(s.values).min() for s in goe50) > 1e-12


# unfolding

def test_equally_spaced_unfolds_to_one():
    n = 500
    gap = 1.0 / (n * semicircle_density(0.0))
    spec = SpectrumSample(np.arange(-40, 41) * gap, "synthetic")
    s = unfold_spacings(spec, 0.0, 0.2, n)
    assert np.allclose(s.spacings, 1.0, atol=1e-12)


def test_goe_mean_spacing(goe50):
    means = [unfold_spacings(s, 0.0, 0.2, 400).mean for s in goe50]
    assert 0.9 <= np.mean(means) <= 1.1


@given(st.integers(-64, 64))
def test_shift_invariance_exact(k):
    # dyadic values and shifts keep every difference exact
    delta = k / 64
    vals = np.array([-0.25, -0.125, 0.0, 0.0625, 0.1875])
    a = unfold_spacings(SpectrumSample(vals, "x"), 0.0, 0.2, 100)
    b = unfold_spacings(SpectrumSample(vals + delta, "x"), delta, 0.2, 100, origin=delta)
    assert np.array_equal(a.spacings, b.spacings)


def test_window_outside_bulk():
    with pytest.raises(GuardError):
        unfold_spacings(SpectrumSample(np.linspace(-2, 2, 50), "x"), 1.9, 0.2, 50)


def test_empty_window():
    with pytest.raises(InsufficientDataError):
        unfold_spacings(SpectrumSample(np.array([1.0, 1.5]), "x"), 0.0, 0.2, 10)


def test_spacing_sample_guards():
    with pytest.raises(GuardError):
        SpacingSample(np.array([1.0, -0.1]))
    with pytest.raises(InsufficientDataError):
        pooled_spacings([])


# distances

def test_ks_examples():
    a = SpacingSample(np.array([0.3, 0.7, 1.2]))
    assert ks_distance(a, a) == 0
    assert ks_distance([0.1, 0.2], [5.0, 6.0]) == 1
    assert ks_distance([1.0], [1.0, 2.0]) == 0.5
    assert ks_distance([1.0], [1.0, 2.0], exact=True) == Fraction(1, 2)


def test_ks_empty():
    with pytest.raises(InsufficientDataError):
        ks_distance([], [1.0])


samples = st.lists(st.integers(0, 20).map(lambda k: k / 4), min_size=1, max_size=15)


@given(samples, samples, samples)
def test_ks_pseudometric(x, y, z):
    dxy = ks_distance(x, y, exact=True)
    assert dxy == ks_distance(y, x, exact=True)
    assert dxy <= ks_distance(x, z, exact=True) + ks_distance(z, y, exact=True)
    assert 0 <= dxy <= 1


@pytest.fixture(scope="module")
def goe_pool():
    return ensemble_spacings(sample_goe, 400, 200, np.random.default_rng(5))


def test_wigner_surmise_goe(goe_pool):
    assert wigner_surmise_distance(goe_pool) < 0.1


def test_wigner_surmise_poisson():
    rng = np.random.default_rng(6)
    pool = []
    for _ in range(100):
        spec = SpectrumSample(np.sort(rng.uniform(-2, 2, 400)), "poisson")
        # uniform density 1/4 on [-2, 2]: rescale gaps to unit mean
        pool.append(unfold_spacings(spec, 0.0, 0.2, 400).spacings / (4 / np.pi))
    assert wigner_surmise_distance(np.concatenate(pool)) > 0.2
    with pytest.raises(InsufficientDataError):
        wigner_surmise_distance([])


@pytest.mark.slow
def test_modified_goe_matches_goe():
    a = ensemble_spacings(sample_goe, 300, 200, np.random.default_rng(7))
    b = ensemble_spacings(sample_modified_goe, 300, 200, np.random.default_rng(8))
    assert ks_distance(a, b) < 0.05
