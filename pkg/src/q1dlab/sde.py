"""The matrix Brownian pair (A, B) and the limiting linear SDE.

    dY = S^2 J i lam dt Y + i sigma S [[dA, dB], [-conj(dB), -conj(dA)]] S Y,   Y_0 = I

with ``J = diag(I, -I)``.  ``A`` is Hermitian, ``B`` complex symmetric and
their second moments per unit time are given by the overlap Gram matrix:

    E|A_ij|^2 = E|B_ij|^2 = E A_ii A_jj = gram[i, j],

with every other covariance zero.  In real coordinates only the diagonal
of ``A`` is correlated (covariance ``gram``); every off-diagonal ``A``
entry and every ``B`` entry has independent real and imaginary parts of
variance ``gram[i, j] / 2``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CovarianceError, DivergenceError, GuardError
from .lattice import Diagonalization, noise_slices, overlap_gram, NoiseSpec
from .seeding import chunks, mix64, parallel_map, rng_for
from .transfer import evolve_final, find_sign_changes

PSD_CLIP = -1e-10
DIVERGENCE_LIMIT = 1e12
DEFAULT_STEPS = 2000


@dataclass(frozen=True)
class BrownianPairIncrement:
    dA: np.ndarray
    dB: np.ndarray
    dt: float

    def block(self):
        """``[[dA, dB], [-conj(dB), -conj(dA)]]``."""
        return noise_block(self.dA, self.dB)


@dataclass(frozen=True)
class SdePath:
    times: np.ndarray
    Y: np.ndarray
    lam: complex
    sigma: float


def noise_block(dA, dB):
    """Block noise matrix; works on single ``(m, m)`` or batched ``(..., m, m)`` input."""
    top = np.concatenate([dA, dB], axis=-1)
    bottom = np.concatenate([-np.conj(dB), -np.conj(dA)], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


# real coordinate layout: diag(A) | Re, Im A_ij (i<j) | Re, Im B_ij (i<=j)

def _layout(m):
    iu = np.triu_indices(m, 1)
    iub = np.triu_indices(m)
    return iu, iub


def pair_covariance(gram):
    """Full real covariance (per unit time) of the coordinates of ``(A, B)``."""
    g = np.asarray(gram, dtype=float)
    m = g.shape[0]
    iu, iub = _layout(m)
    off = g[iu] / 2.0
    bv = g[iub] / 2.0
    size = m + 2 * len(off) + 2 * len(bv)
    cov = np.zeros((size, size))
    cov[:m, :m] = g
    rest = np.concatenate([off, off, bv, bv])
    idx = np.arange(m, size)
    cov[idx, idx] = rest
    return cov


def _check_gram(gram):
    g = np.asarray(gram, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 1:
        raise GuardError(f"gram must be a square matrix, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise CovarianceError("gram has non-finite entries")
    if np.abs(g - g.T).max() > 1e-12 * max(1.0, np.abs(g).max()):
        raise CovarianceError("gram is not symmetric")
    return 0.5 * (g + g.T)


def pair_factor(gram):
    """``L`` with ``L @ L.T == pair_covariance(gram)`` (eigendecomposition, clipped)."""
    g = _check_gram(gram)
    cov = pair_covariance(g)
    w, v = np.linalg.eigh(cov)
    if w.min() < PSD_CLIP:
        raise CovarianceError(
            f"covariance is not positive semidefinite (eigenvalue {w.min():.3g})"
        )
    return v * np.sqrt(np.clip(w, 0.0, None))[None, :]


def _assemble(coords, m):
    """Batched ``(dA, dB)`` from real coordinates of shape ``(P, 2 m^2)``."""
    P = coords.shape[0]
    iu, iub = _layout(m)
    no, nb = len(iu[0]), len(iub[0])
    diag = coords[:, :m]
    are = coords[:, m:m + no]
    aim = coords[:, m + no:m + 2 * no]
    bre = coords[:, m + 2 * no:m + 2 * no + nb]
    bim = coords[:, m + 2 * no + nb:]
    dA = np.zeros((P, m, m), dtype=complex)
    dA[:, iu[0], iu[1]] = are + 1j * aim
    dA[:, iu[1], iu[0]] = are - 1j * aim
    dA[:, np.arange(m), np.arange(m)] = diag
    dB = np.zeros((P, m, m), dtype=complex)
    dB[:, iub[0], iub[1]] = bre + 1j * bim
    dB[:, iub[1], iub[0]] = bre + 1j * bim
    return dA, dB


def sample_brownian_increments(gram, dt, rng, size, factor=None):
    """``size`` independent increments as arrays ``dA, dB`` of shape ``(size, m, m)``."""
    L = pair_factor(gram) if factor is None else factor
    m = int(round(np.sqrt(L.shape[0] / 2)))
    xi = rng.standard_normal((size, L.shape[1]))
    coords = np.sqrt(dt) * (xi @ L.T)
    return _assemble(coords, m)


def sample_brownian_increment(gram, dt, rng):
    """One Gaussian increment of the pair over a time step ``dt``."""
    if dt <= 0:
        raise GuardError("dt must be positive")
    dA, dB = sample_brownian_increments(gram, dt, rng, 1)
    return BrownianPairIncrement(dA[0], dB[0], float(dt))


def gue_representation_increments(m, dt, rng, size):
    """Batched ``(A' + zeta I, B') * sqrt(dt / (m + 1))``.

    ``A'`` is GUE-type (real diagonal variance 1/2, off-diagonal E|.|^2 = 1),
    ``zeta`` a common standard normal, and ``B'`` complex symmetric with
    E|B'_ii|^2 = 3/2 and E|B'_ij|^2 = 1, all with zero pseudo-variance.
    """
    if m < 1:
        raise GuardError("m must be at least 1")
    h = np.sqrt(0.5)
    iu = np.triu_indices(m, 1)
    A = np.zeros((size, m, m), dtype=complex)
    off = h * (rng.standard_normal((size, len(iu[0]))) + 1j * rng.standard_normal((size, len(iu[0]))))
    A[:, iu[0], iu[1]] = off
    A[:, iu[1], iu[0]] = np.conj(off)
    zeta = rng.standard_normal((size, 1))
    A[:, np.arange(m), np.arange(m)] = h * rng.standard_normal((size, m)) + zeta
    B = np.zeros((size, m, m), dtype=complex)
    boff = h * (rng.standard_normal((size, len(iu[0]))) + 1j * rng.standard_normal((size, len(iu[0]))))
    B[:, iu[0], iu[1]] = boff
    B[:, iu[1], iu[0]] = boff
    bd = np.sqrt(0.75)
    B[:, np.arange(m), np.arange(m)] = bd * (rng.standard_normal((size, m)) + 1j * rng.standard_normal((size, m)))
    c = np.sqrt(dt / (m + 1))
    return c * A, c * B


def gue_representation_increment(m, dt, rng):
    dA, dB = gue_representation_increments(m, dt, rng, 1)
    return BrownianPairIncrement(dA[0], dB[0], float(dt))


def _drift_diag(S_half, lam):
    s2 = np.asarray(S_half, dtype=float) ** 2
    return 1j * np.asarray(lam)[..., None] * np.concatenate([s2, -s2])


def drift_solution(S_half, lam, t=1.0):
    """``exp(i lam t S^2 J)``: the noiseless solution (diagonal)."""
    return np.diag(np.exp(_drift_diag(S_half, complex(lam)) * t))


def _em_step(Y, drift, dt, sigma, s, dA, dB):
    """One Euler-Maruyama step for a batch; ``drift`` is ``(P | 1, 2m)``."""
    N = noise_block(dA, dB)
    gen = 1j * sigma * s[None, :, None] * N * s[None, None, :]
    P = max(gen.shape[0], drift.shape[0])
    gen = np.broadcast_to(gen, (P,) + gen.shape[1:]).copy()
    gen[:,np.arange(len(s)), np.arange(len(s))] += drift * dt
    return Y + gen @ Y


def _check(Y, k):
    if not np.all(np.isfinite(Y)) or np.abs(Y).max() > DIVERGENCE_LIMIT:
        raise DivergenceError(f"SDE path exceeded {DIVERGENCE_LIMIT:g} at step {k}")


def integrate(S_half, gram, lam, sigma, steps=DEFAULT_STEPS, rng=None):
    """Euler-Maruyama path of the SDE on ``t = 0, 1/steps, ..., 1``."""
    if steps < 1:
        raise GuardError("steps must be at least 1")
    rng = rng_for(0) if rng is None else rng
    s_half = np.asarray(S_half, dtype=float)
    m = len(s_half)
    s = np.concatenate([s_half, s_half])
    L = pair_factor(gram)
    dt = 1.0 / steps
    drift = _drift_diag(s_half, np.array([complex(lam)]))
    Y = np.eye(2 * m, dtype=complex)[None]
    out = [Y[0].copy()]
    for k in range(1, steps + 1):
        dA, dB = sample_brownian_increments(gram, dt, rng, 1, factor=L)
        Y = _em_step(Y, drift, dt, sigma, s, dA, dB)
        _check(Y, k)
        out.append(Y[0].copy())
    return SdePath(np.linspace(0.0, 1.0, steps + 1), np.array(out), complex(lam), float(sigma))


def integrate_paths(S_half, gram, lam, sigma, steps=DEFAULT_STEPS, paths=1000, seed=0,
                    times=(1.0,), chunk=500, threads=None):
    """``Y_t`` for many independent paths, shape ``(len(times), paths, 2m, 2m)``.

    Chunk ``c`` of paths draws from ``rng_for(seed, c)``, so results do not
    depend on the thread count.  ``times`` must lie on the step grid.
    """
    s_half = np.asarray(S_half, dtype=float)
    m = len(s_half)
    s = np.concatenate([s_half, s_half])
    L = pair_factor(gram)
    dt = 1.0 / steps
    marks = {int(round(t * steps)): i for i, t in enumerate(times)}
    drift = _drift_diag(s_half, np.array([complex(lam)]))

    def run(item):
        c, (lo, hi) = item
        rng = rng_for(seed, c)
        P = hi - lo
        Y = np.broadcast_to(np.eye(2 * m, dtype=complex), (P, 2 * m, 2 * m)).copy()
        got = np.zeros((len(times), P, 2 * m, 2 * m), dtype=complex)
        if 0 in marks:
            got[marks[0]] = Y
        for k in range(1, steps + 1):
            dA, dB = sample_brownian_increments(gram, dt, rng, P, factor=L)
            Y = _em_step(Y, drift, dt, sigma, s, dA, dB)
            _check(Y, k)
            if k in marks:
                got[marks[k]] = Y
        return got

    parts = parallel_map(run, list(enumerate(chunks(paths, chunk))), threads)
    return np.concatenate(parts, axis=1)


def sde_secular_grid(S_half, gram, sigma, lam_grid, steps=DEFAULT_STEPS, rng=None, Zhat=None):
    """``det Im(Zhat (Y11 - Y12))`` at ``t = 1`` for one noise path on a lambda grid.

    The same Brownian increments drive every grid point, so the result
    is one realization of the limiting secular function.
    """
    rng = rng_for(0) if rng is None else rng
    s_half = np.asarray(S_half, dtype=float)
    m = len(s_half)
    s = np.concatenate([s_half, s_half])
    lam_grid = np.asarray(lam_grid, dtype=float)
    L = pair_factor(gram)
    dt = 1.0 / steps
    incs = [sample_brownian_increments(gram, dt, rng, 1, factor=L) for _ in range(steps)]
    Zhat = np.ones(m) if Zhat is None else np.asarray(Zhat)

    def f(lams):
        lams = np.atleast_1d(np.asarray(lams, dtype=float))
        drift = _drift_diag(s_half, lams.astype(complex))
        Y = np.broadcast_to(np.eye(2 * m, dtype=complex), (len(lams), 2 * m, 2 * m)).copy()
        for k, (dA, dB) in enumerate(incs, start=1):
            Y = _em_step(Y, drift, dt, sigma, s, dA, dB)
        _check(Y, steps)
        inner = Zhat[None, :, None] * (Y[:, :m, :m] - Y[:, :m, m:])
        return np.linalg.det(inner.imag)

    return f, f(lam_grid)


def sde_zeros(S_half, gram, sigma, window, grid_points=401, steps=DEFAULT_STEPS, rng=None):
    """Zeros in ``window`` of one realization of the limiting secular function."""
    grid = np.linspace(window[0], window[1], grid_points)
    f, _ = sde_secular_grid(S_half, gram, sigma, grid, steps, rng)
    return find_sign_changes(f, grid)


def limit_matrices(S_half, gram, rng, size, part="real"):
    """Batched ``S Re(A(1) - B(1)) S`` (or the imaginary part)."""
    if part not in ("real", "imag"):
        raise GuardError(f"part must be 'real' or 'imag', got {part!r}")
    dA, dB = sample_brownian_increments(gram, 1.0, rng, size)
    D = dA - dB
    M = D.real if part == "real" else D.imag
    s = np.asarray(S_half, dtype=float)
    M = s[None, :, None] * M * s[None, None, :]
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def limit_matrix(S_half, gram, rng, part="real"):
    """One sample of the limit random matrix ``S Re(A(1) - B(1)) S``."""
    return limit_matrices(S_half, gram, rng, 1, part)[0]


@dataclass(frozen=True)
class MomentRow:
    entry: tuple
    moment: str
    discrete: complex
    continuum: complex
    discrete_se: float
    continuum_se: float

    @property
    def joint_se(self):
        return float(np.hypot(self.discrete_se, self.continuum_se))

    @property
    def deviation(self):
        diff = abs(self.discrete - self.continuum)
        return 0.0 if diff == 0 else diff / self.joint_se if self.joint_se else np.inf


@dataclass
class MomentReport:
    rows: list
    meta: dict = field(default_factory=dict)

    def row(self, entry, moment):
        for r in self.rows:
            if r.entry == entry and r.moment == moment:
                return r
        raise KeyError((entry, moment))


def _mean_se(x):
    mean = x.mean(axis=0)
    se_re = x.real.std(axis=0, ddof=1) / np.sqrt(len(x))
    se_im = x.imag.std(axis=0, ddof=1) / np.sqrt(len(x))
    return mean, np.hypot(se_re, se_im)


def discrete_final_states(frame, n, lam, sigma, trials, noise, chunk=200, threads=None):
    """``X_n(lambda_star + lam / n)`` with potentials ``sigma / sqrt(n) V`` per trial."""
    E = frame.lambda_star + complex(lam) / n

    def run(span):
        lo, hi = span
        V = np.stack([noise_slices(noise.for_trial(t), frame.m, n, sigma / np.sqrt(n))
                      for t in range(lo, hi)])
        return evolve_final(frame, V, E)

    return np.concatenate(parallel_map(run, chunks(trials, chunk), threads))


def discrete_vs_sde_experiment(frame, n, lam, sigma, trials, seed=0, steps=DEFAULT_STEPS,
                               entries=((1, 1), (1, 2)), noise=None, threads=None):
    """First and second moments of ``X_n`` entries versus ``Y_1`` entries.

    Entries are 1-based indices into the ``2m x 2m`` matrices.
    """
    noise = NoiseSpec(seed=mix64(seed, 0)) if noise is None else noise
    X = discrete_final_states(frame, n, lam, sigma, trials, noise, threads=threads)
    gram = overlap_gram(Diagonalization(frame.O, frame.d)) * noise.amplitude ** 2
    Y = integrate_paths(frame.S_half, gram, lam, sigma, steps, trials, mix64(seed, 1),
                        threads=threads)[0]
    rows = []
    for (i, j) in entries:
        x, y = X[:, i - 1, j - 1], Y[:, i - 1, j - 1]
        for name, fx, fy in (("mean", x, y), ("abs2", np.abs(x) ** 2, np.abs(y) ** 2)):
            mx, sx = _mean_se(fx)
            my, sy = _mean_se(fy)
            rows.append(MomentRow((i, j), name, complex(mx), complex(my), float(sx), float(sy)))
    meta = {"n": n, "lam": complex(lam), "sigma": sigma, "trials": trials, "steps": steps,
            "seed": seed}
    return MomentReport(rows, meta)
