import numpy as np
import pytest
from hypothesis import given, strategies as st

from q1dlab.errors import ConvergenceError
from q1dlab.jacobi import jacobi_eigh


@given(st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_matches_lapack_eigenvalues(n, seed):
    a = np.random.default_rng(seed).standard_normal((n, n))
    a = a + a.T
    w, v = jacobi_eigh(a)
    assert np.allclose(np.sort(w), np.linalg.eigvalsh(a), atol=1e-10)
    assert np.allclose(v.T @ v, np.eye(n), atol=1e-10)
    assert np.allclose(a @ v, v * w, atol=1e-9)


def test_already_diagonal_and_degenerate():
    w, v = jacobi_eigh(np.diag([3.0, 3.0, -1.0]))
    assert sorted(w) == [-1.0, 3.0, 3.0]
    w, _ = jacobi_eigh(np.ones((4, 4)))
    assert np.allclose(np.sort(w), [0, 0, 0, 4], atol=1e-12)


def test_widely_scaled_entries():
    a = np.array([[1e8, 1.0], [1.0, 1e-8]])
    w, _ = jacobi_eigh(a)
    assert np.allclose(np.sort(w), np.linalg.eigvalsh(a), rtol=1e-12, atol=1e-12)


def test_sweep_limit_raises():
    a = np.random.default_rng(1).standard_normal((12, 12))
    with pytest.raises(ConvergenceError):
        jacobi_eigh(a + a.T, max_sweeps=1)
