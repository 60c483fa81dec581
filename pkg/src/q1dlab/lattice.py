"""Weighted lattice graphs, box operators and their direct spectra.

Index layout of products follows ``cartesian_product(A, B)``: vertex
``(i, i')`` sits at ``i * dim(B) + i'``.  For a box ``rG x Z_n`` that
makes the long coordinate the fast one, so the diagonal noise reshaped
to ``(m, n)`` has the slice potentials ``V_k`` as its columns.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import ConvergenceError, DimensionError, GuardError, SizeError
from .jacobi import jacobi_eigh
from .seeding import mix64, rng_for

MAX_DIM = 10_000
JACOBI_MAX_DIM = 256
SIGN_EPS = 1e-12
SYMMETRY_TOL = 1e-12
BANDED_MAX_DIM = 4000

DISTRIBUTIONS = ("gaussian", "rademacher", "uniform-centered")


def _readonly(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SymmetricOperator:
    """Dense real symmetric matrix (adjacency matrix of a weighted graph)."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise DimensionError(f"expected a nonempty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise GuardError("matrix has non-finite entries")
        scale = max(1.0, float(np.abs(a).max()))
        if np.abs(a - a.T).max() > SYMMETRY_TOL * scale:
            raise GuardError("matrix is not symmetric")
        object.__setattr__(self, "entries", _readonly(0.5 * (a + a.T)))

    @property
    def dim(self):
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.array(self.entries, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, SymmetricOperator):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    __hash__ = None


@dataclass(frozen=True)
class Diagonalization:
    """``G = O.T @ diag(d) @ O``; row ``O[j]`` is the eigenvector for ``d[j]``."""

    O: np.ndarray
    d: np.ndarray

    def reconstruct(self):
        return self.O.T @ np.diag(self.d) @ self.O


@dataclass(frozen=True)
class SpectrumSample:
    values: np.ndarray
    provenance: str
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if not np.all(np.isfinite(v)):
            raise GuardError("spectrum has non-finite entries")
        object.__setattr__(self, "values", _readonly(v))

    def __len__(self):
        return len(self.values)

    def within(self, lo, hi):
        v = self.values
        return SpectrumSample(v[(v > lo) & (v < hi)], self.provenance, dict(self.meta))


@dataclass(frozen=True)
class NoiseSpec:
    """Law of the i.i.d. diagonal entries (mean 0, variance 1) and its seed.

    ``amplitude`` multiplies every sample; the ``sigma / sqrt(n)`` box
    scaling is applied separately by the caller.
    """

    distribution: str = "gaussian"
    amplitude: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise GuardError(
                f"unknown noise distribution {self.distribution!r}; "
                f"expected one of {', '.join(DISTRIBUTIONS)}"
            )
        if self.amplitude < 0:
            raise GuardError("noise amplitude must be nonnegative")

    def sample(self, shape, rng=None):
        rng = rng_for(self.seed) if rng is None else rng
        if self.distribution == "gaussian":
            x = rng.standard_normal(shape)
        elif self.distribution == "rademacher":
            x = 2.0 * rng.integers(0, 2, size=shape) - 1.0
        else:
            x = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=shape)
        return self.amplitude * x

    def for_trial(self, index):
        """Independent stream for trial ``index`` (same law and amplitude)."""
        return NoiseSpec(self.distribution, self.amplitude, mix64(self.seed, index))


def path_graph(m):
    if int(m) != m or m < 1:
        raise DimensionError(f"path length must be a positive integer, got {m}")
    m = int(m)
    return SymmetricOperator(np.eye(m, k=1) + np.eye(m, k=-1))


def scale(G, r):
    return SymmetricOperator(float(r) * G.entries)


def _check_size(dim, max_dim):
    if dim > max_dim:
        raise SizeError(f"operator dimension {dim} exceeds the maximum {max_dim}")


def cartesian_product(A, B, max_dim=MAX_DIM):
    """``(A x B)[(i,i'),(j,j')] = [i'=j'] A[i,j] + [i=j] B[i',j']``."""
    _check_size(A.dim * B.dim, max_dim)
    return SymmetricOperator(
        np.kron(A.entries, np.eye(B.dim)) + np.kron(np.eye(A.dim), B.entries)
    )


def _canonical_signs(rows):
    for row in rows:
        big = np.flatnonzero(np.abs(row) > SIGN_EPS)
        if big.size and row[big[0]] < 0:
            row *= -1.0
    return rows


def diagonalize(G, method="auto"):
    """Eigen-decomposition with descending eigenvalues and canonical signs.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to
    dimension ``JACOBI_MAX_DIM``).
    """
    a = G.entries
    method = _pick_method(method, G.dim)
    if method == "jacobi":
        w, v = jacobi_eigh(a)
    else:
        try:
            w, v = np.linalg.eigh(a)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(str(exc)) from exc
    order = np.argsort(-w, kind="stable")
    O = _canonical_signs(np.array(v[:, order].T, copy=True))
    return Diagonalization(_readonly(O), _readonly(w[order]))


def _pick_method(method, dim):
    if method == "auto":
        return "jacobi" if dim <= JACOBI_MAX_DIM else "lapack"
    if method not in ("jacobi", "lapack"):
        raise GuardError(f"unknown eigensolver {method!r}")
    return method


def overlap_gram(diag):
    """``gram[i, j] = <|O_i|^2, |O_j|^2>`` for the eigenvector rows of ``diag``."""
    sq = diag.O ** 2
    gram = sq @ sq.T
    return 0.5 * (gram + gram.T)


def noise_slices(noise, m, n, sigma_over_sqrt_n):
    """Per-slice diagonal potentials, shape ``(n, m)``; row ``k`` is ``V_k``.

    Samples are drawn in box order (slice-major, long coordinate fastest),
    so these are exactly the diagonal entries ``assemble_box`` adds.
    """
    raw = noise.sample(m * n)
    return float(sigma_over_sqrt_n) * raw.reshape(m, n).T


def assemble_box(G, r, n, noise, sigma_over_sqrt_n, max_dim=MAX_DIM):
    """``rG x Z_n`` plus i.i.d. diagonal noise scaled by ``sigma_over_sqrt_n``."""
    if int(n) != n or n < 1:
        raise DimensionError(f"box length must be a positive integer, got {n}")
    n = int(n)
    _check_size(G.dim * n, max_dim)
    base = cartesian_product(scale(G, r), path_graph(n), max_dim=max_dim).entries
    if sigma_over_sqrt_n == 0:
        return SymmetricOperator(base)
    diag = noise_slices(noise, G.dim, n, sigma_over_sqrt_n).T.ravel()
    return SymmetricOperator(base + np.diag(diag))


def direct_spectrum(M, method="auto"):
    """All eigenvalues of ``M`` in ascending order."""
    a = M.entries if isinstance(M, SymmetricOperator) else SymmetricOperator(M).entries
    if _pick_method(method, a.shape[0]) == "jacobi":
        w, _ = jacobi_eigh(a)
    else:
        try:
            w = np.linalg.eigvalsh(a)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(str(exc)) from exc
    return SpectrumSample(w, "direct")


def kronecker_sum_spectrum(d, n):
    """Sorted ``{d_i + 2 cos(k pi / (n+1))}``: the noiseless box spectrum."""
    k = np.arange(1, n + 1)
    return np.sort((np.asarray(d)[:, None] + 2 * np.cos(k * np.pi / (n + 1))).ravel())


def _box_bands(G, r, n, slices):
    """Diagonals of the box in long-coordinate-slow order: ``bands[u][j] = M[j + u, j]``."""
    m = G.dim
    g = float(r) * G.entries
    slices = np.asarray(slices, dtype=float).reshape(n, m)
    N = m * n
    bands = [(np.diag(g)[None, :] + slices).ravel()]
    for u in range(1, m):
        sub = np.zeros((n, m))
        sub[:, : m - u] = np.diag(g, -u)[None, :]
        bands.append(sub.ravel()[: N - u])
    bands.append(np.ones(N - m))
    return bands


def window_spectrum(G, r, n, slices, lo, hi):
    """Eigenvalues of ``rG x Z_n + diag(slices)`` inside ``[lo, hi]``.

    Works on the banded form (long coordinate slow, bandwidth ``m``), so
    boxes far beyond ``MAX_DIM`` stay cheap: LAPACK band routines up to
    ``BANDED_MAX_DIM``, sparse shift-invert Lanczos around the window
    beyond that.  ``slices`` is ``(n, m)``.
    """
    m = G.dim
    N = m * n
    bands = _box_bands(G, r, n, slices)
    if N <= BANDED_MAX_DIM:
        band = np.zeros((m + 1, N))
        for u, diag in enumerate(bands):
            band[u, : len(diag)] = diag
        w = scipy.linalg.eigvals_banded(band, lower=True, select="v", select_range=(lo, hi))
        return SpectrumSample(w, "direct")
    offsets = list(range(len(bands)))
    lower = scipy.sparse.diags(bands, [-u for u in offsets], shape=(N, N), format="csc")
    M = lower + scipy.sparse.triu(lower.T, 1, format="csc")
    mid = 0.5 * (lo + hi)
    k = min(N - 2, 16)
    while True:
        w = scipy.sparse.linalg.eigsh(M, k=k, sigma=mid, which="LM", tol=0,
                                      return_eigenvectors=False)
        if (w.min() < lo and w.max() > hi) or k >= N - 2:
            break
        k = min(N - 2, 2 * k)
    return SpectrumSample(w[(w >= lo) & (w <= hi)], "direct")
