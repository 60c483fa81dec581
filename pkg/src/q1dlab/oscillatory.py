"""Noise explosion: oscillatory sums of diagonal noise and their covariances.

The matrix sums are

    A_n = sum_k Z^k V_k^O Z^-k,    B_n = sum_k Z^k V_k^O Z^k,

with ``V_k^O = O diag(v_k) O^T``.  Entry ``(i, j)`` of either sum is
``sum_r O_ir O_jr F_r(phi_ij)`` where ``F_r(phi) = sum_k exp(i k phi) v_kr``,
so a batch of trials reduces to one real-by-complex matrix product.
"""

from dataclasses import dataclass
import warnings

import numpy as np

from .chaos import chaoticity
from .errors import ResonanceWarning, StatisticalPowerError
from .lattice import noise_slices, overlap_gram, Diagonalization
from .seeding import chunks, parallel_map
from .transfer import phases

KINDS = ("AĀ", "AA", "BB̄", "BB", "AB̄")
CHAOS_EPS = 1e-9
MIN_TRIALS = 100
N_BATCHES = 20


def scalar_oscillatory_sum(eta, n, noise):
    """``n^-1/2 sum_{k=0}^{n} exp(i eta k) X_k``."""
    x = noise.sample(n + 1)
    return complex(np.sum(phases(eta, np.arange(n + 1)) * x) / np.sqrt(n))


def scalar_oscillatory_sums(eta, n, noise, trials):
    """``scalar_oscillatory_sum`` for trials ``0..trials-1`` (trial streams)."""
    ph = phases(eta, np.arange(n + 1))
    return np.array([
        np.sum(ph * noise.for_trial(t).sample(n + 1)) / np.sqrt(n) for t in range(trials)
    ])


def _phase_tables(theta, k):
    """Real and imaginary parts of ``exp(i k (theta_i -/+ theta_j))``.

    Columns are the flattened ``(i, j)`` pairs, differences first.
    """
    diff = (theta[:, None] - theta[None, :]).ravel()
    summ = (theta[:, None] + theta[None, :]).ravel()
    ph = phases(np.concatenate([diff, summ])[None, :], k[:, None])
    return np.ascontiguousarray(ph.real), np.ascontiguousarray(ph.imag)


def oscillatory_batch(frame, v, k0=1, tables=None):
    """``(A, B)`` of shape ``(T, m, m)`` for potentials ``v`` of shape ``(T, n, m)``.

    Step numbers run from ``k0`` to ``k0 + n - 1``.  ``tables`` may carry
    precomputed ``_phase_tables`` output for the same steps.
    """
    v = np.asarray(v, dtype=float)
    T, n, m = v.shape
    if tables is None:
        tables = _phase_tables(np.asarray(frame.theta), np.arange(k0, k0 + n, dtype=float))
    re, im = tables
    flat = v.transpose(0, 2, 1).reshape(T * m, n)
    fr = (flat @ re).reshape(T, m, 2, m, m)
    fi = (flat @ im).reshape(T, m, 2, m, m)
    f = fr + 1j * fi
    O = np.asarray(frame.O)
    A = np.einsum("ir,jr,trij->tij", O, O, f[:, :, 0])
    B = np.einsum("ir,jr,trij->tij", O, O, f[:, :, 1])
    return A, B


def matrix_oscillatory_sums(frame, n, noise):
    """Unnormalized ``(A_n, B_n)`` for one noise realization."""
    v = noise_slices(noise, frame.m, n, 1.0)
    A, B = oscillatory_batch(frame, v[None])
    return A[0], B[0]


@dataclass(frozen=True)
class CovarianceReport:
    kind: str
    first: tuple
    second: tuple
    empirical: complex
    theoretical: complex
    standard_error: float
    n_steps: int
    n_trials: int

    @property
    def deviation(self):
        """``|empirical - theoretical|`` in units of the standard error."""
        diff = abs(self.empirical - self.theoretical)
        if self.standard_error == 0:
            return 0.0 if diff == 0 else np.inf
        return diff / self.standard_error


@dataclass
class CovarianceExperiment:
    rows: list
    chaoticity: float
    warning: str = ""

    @property
    def verdict(self):
        """True/False for chaotic frames; None when the frame is resonant."""
        if self.warning:
            return None
        return all(row.deviation <= 3.0 for row in self.rows)

    def row(self, kind, first, second):
        for r in self.rows:
            if r.kind == kind and r.first == first and r.second == second:
                return r
        raise KeyError((kind, first, second))


def canonical_pairs(m):
    return [(i, j) for i in range(m) for j in range(i, m)]


def limit_covariance(gram, kind, p, q):
    """Large-n limit of the normalized second moment for entries ``p``, ``q``."""
    (i, j), (i2, j2) = p, q
    if kind == "AĀ":
        if p == q:
            return gram[i, j]
        if i == j and i2 == j2:
            return gram[i, i2]
        return 0.0
    if kind == "AA":
        return gram[i, i2] if (i == j and i2 == j2) else 0.0
    if kind == "BB̄":
        return gram[i, j] if p == q else 0.0
    return 0.0


def _batched_se(products, batches):
    """Standard error of the mean from ``batches`` consecutive batch means."""
    T = products.shape[0]
    size = T // batches
    used = products[: size * batches].reshape(batches, size, *products.shape[1:])
    means = used.mean(axis=1)
    re = means.real.std(axis=0, ddof=1) / np.sqrt(batches)
    im = means.imag.std(axis=0, ddof=1) / np.sqrt(batches)
    return np.sqrt(re ** 2 + im ** 2)


def normalized_trial_sums(frame, n, trials, noise, threads=None, chunk=8):
    """Canonical entries of ``A_n / sqrt(n)`` and ``B_n / sqrt(n)`` per trial."""
    pairs = canonical_pairs(frame.m)
    iu = tuple(np.array(pairs).T)
    tables = _phase_tables(np.asarray(frame.theta), np.arange(1, n + 1, dtype=float))

    def run(span):
        lo, hi = span
        v = np.stack([noise_slices(noise.for_trial(t), frame.m, n, 1.0) for t in range(lo, hi)])
        A, B = oscillatory_batch(frame, v, tables=tables)
        return A[:, iu[0], iu[1]] / np.sqrt(n), B[:, iu[0], iu[1]] / np.sqrt(n)

    parts = parallel_map(run, chunks(trials, chunk), threads)
    a = np.concatenate([p[0] for p in parts])
    b = np.concatenate([p[1] for p in parts])
    return a, b


def covariance_experiment(frame, n, trials, noise, batches=N_BATCHES, threads=None):
    """Empirical second moments of the normalized oscillatory sums vs their limits."""
    if trials < MIN_TRIALS:
        raise StatisticalPowerError(f"need at least {MIN_TRIALS} trials, got {trials}")
    cha = chaoticity(frame.theta)
    warning = ""
    if cha <= CHAOS_EPS:
        warning = (f"critical angles are resonant (chaoticity {cha:.3g}); "
                   "oscillatory sums do not average out, no verdict")
        warnings.warn(warning, ResonanceWarning, stacklevel=2)
    gram = overlap_gram(Diagonalization(frame.O, frame.d)) * noise.amplitude ** 2
    a, b = normalized_trial_sums(frame, n, trials, noise, threads)
    pairs = canonical_pairs(frame.m)
    P = len(pairs)
    products = {
        "AĀ": a[:, :, None] * np.conj(a[:, None, :]),
        "AA": a[:, :, None] * a[:, None, :],
        "BB̄": b[:, :, None] * np.conj(b[:, None, :]),
        "BB": b[:, :, None] * b[:, None, :],
        "AB̄": a[:, :, None] * np.conj(b[:, None, :]),
    }
    rows = []
    for kind in KINDS:
        prod = products[kind]
        mean = prod.mean(axis=0)
        se = _batched_se(prod, batches)
        for u in range(P):
            for w in range(P if kind == "AB̄" else u + 1):
                p, q = pairs[w], pairs[u]
                rows.append(CovarianceReport(
                    kind,
                    tuple(x + 1 for x in p),
                    tuple(x + 1 for x in q),
                    complex(mean[w, u]),
                    complex(limit_covariance(gram, kind, p, q)),
                    float(se[w, u]),
                    int(n),
                    int(trials),
                ))
    return CovarianceExperiment(rows, cha, warning)


def geometric_phase_sum(theta, n):
    """``sum_{k=1}^n exp(2 i k theta)`` in closed form (angles reduced mod 2 pi)."""
    theta = np.asarray(theta, dtype=float)
    z2 = phases(2 * theta, 1)
    z2n = phases(2 * theta, n)
    return z2 * (1.0 - z2n) / (1.0 - z2)


def drift_sum(frame, n, lambda_offset):
    """``sum_{k=1}^n i (lambda - lambda_star) S [[I, Z^2k], [-Z^-2k, -I]] S``."""
    m = frame.m
    s2 = np.asarray(frame.S_half) ** 2
    g = geometric_phase_sum(frame.theta, n)
    out = np.zeros((2 * m, 2 * m), dtype=complex)
    idx = np.arange(m)
    out[idx, idx] = n * s2
    out[idx, m + idx] = s2 * g
    out[m + idx, idx] = -s2 * np.conj(g)
    out[m + idx, m + idx] = -n * s2
    return 1j * lambda_offset * out


def geometric_sum_bound(theta):
    """``2 / min_j |1 - z_j^2|``: bound on each ``|sum_k z_j^2k|``."""
    return 2.0 / np.min(np.abs(1.0 - np.exp(2j * np.asarray(theta))))
