import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def path_eigvecs(m):
    """Closed-form eigenvectors of the path graph, rows ordered by descending eigenvalue."""
    j = np.arange(1, m + 1)
    return np.sqrt(2.0 / (m + 1)) * np.sin(np.pi * np.outer(j, j) / (m + 1))


def brute_gram(m):
    sq = path_eigvecs(m) ** 2
    return np.array([[np.sum(sq[i] * sq[j]) for j in range(m)] for i in range(m)])


def gram_table(m):
    """(m+1) * gram for the path: 3/2 on i=j and i+j=m+1, 2 at the center, 1 elsewhere (1-based)."""
    t = np.ones((m, m))
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            if i == j or i + j == m + 1:
                t[i - 1, j - 1] = 1.5
            if i == j and 2 * i == m + 1:
                t[i - 1, j - 1] = 2.0
    return t


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)
