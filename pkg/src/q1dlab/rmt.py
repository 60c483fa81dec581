"""GOE-type ensembles, semicircle unfolding and spacing statistics."""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.stats

from .errors import GuardError, InsufficientDataError
from .lattice import SpectrumSample

CENTER = 0.0
HALFWIDTH = 0.2


def _check_n(n):
    if int(n) != n or n < 2:
        raise GuardError(f"matrix size must be an integer >= 2, got {n}")
    return int(n)


def goe_matrix(n, rng):
    """Symmetric Gaussian matrix, diagonal variance 2/n, off-diagonal 1/n."""
    g = rng.standard_normal((n, n))
    return (g + g.T) / np.sqrt(2.0 * n)


def sample_goe(n, rng):
    n = _check_n(n)
    return SpectrumSample(np.linalg.eigvalsh(goe_matrix(n, rng)), "goe")


def modified_goe_matrix(n, rng, with_shift=True):
    """``(K + b I) / sqrt(n)``: E K_ij^2 = 1 off the diagonal, 5/4 on it."""
    g = rng.standard_normal((n, n))
    K = np.triu(g, 1)
    K = K + K.T
    K[np.diag_indices(n)] = np.sqrt(1.25) * rng.standard_normal(n)
    b = rng.standard_normal() if with_shift else 0.0
    return (K + b * np.eye(n)) / np.sqrt(n)


def sample_modified_goe(n, rng):
    n = _check_n(n)
    return SpectrumSample(np.linalg.eigvalsh(modified_goe_matrix(n, rng)), "modified-goe")


def semicircle_density(lam):
    lam = np.asarray(lam, dtype=float)
    out = np.sqrt(np.clip(4.0 - lam * lam, 0.0, None)) / (2.0 * np.pi)
    return float(out) if out.ndim == 0 else out


def semicircle_cdf(lam):
    x = np.clip(np.asarray(lam, dtype=float), -2.0, 2.0)
    return 0.5 + (x * np.sqrt(4.0 - x * x) / 4.0 + np.arcsin(x / 2.0)) / np.pi


@dataclass(frozen=True)
class SpacingSample:
    spacings: np.ndarray
    center: float = CENTER
    window_halfwidth: float = HALFWIDTH

    def __post_init__(self):
        s = np.asarray(self.spacings, dtype=float).ravel()
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise GuardError("spacings must be finite and nonnegative")
        object.__setattr__(self, "spacings", s)

    def __len__(self):
        return len(self.spacings)

    @property
    def mean(self):
        return float(self.spacings.mean())

    def merged(self, other):
        return SpacingSample(np.concatenate([self.spacings, other.spacings]),
                             self.center, self.window_halfwidth)


def _values(spec):
    return spec.values if isinstance(spec, SpectrumSample) else np.sort(np.asarray(spec, dtype=float))


def unfold_spacings(spec, center=CENTER, window_halfwidth=HALFWIDTH, scale_n=1, origin=0.0):
    """Gaps inside ``[center -/+ halfwidth]`` rescaled by ``rho(center - origin) * scale_n``.

    ``origin`` is where the semicircle is centered; shifting the spectrum,
    ``center`` and ``origin`` together leaves the output unchanged.
    """
    if not abs(center - origin) < 2.0 - window_halfwidth:
        raise GuardError(
            f"window [{center - window_halfwidth:g}, {center + window_halfwidth:g}] "
            "leaves the semicircle bulk"
        )
    v = _values(spec)
    inside = v[(v >= center - window_halfwidth) & (v <= center + window_halfwidth)]
    if len(inside) < 2:
        raise InsufficientDataError(
            f"{len(inside)} eigenvalue(s) in the window, need at least 2"
        )
    rho = semicircle_density(center - origin)
    return SpacingSample(rho * scale_n * np.diff(inside), center, window_halfwidth)


def pooled_spacings(samples):
    """Concatenate the spacings of several ``SpacingSample`` objects."""
    samples = list(samples)
    if not samples:
        raise InsufficientDataError("no spacing samples to pool")
    out = samples[0]
    for s in samples[1:]:
        out = out.merged(s)
    return out


def _spacings(x):
    return x.spacings if isinstance(x, SpacingSample) else np.asarray(x, dtype=float).ravel()


def ks_distance(sample1, sample2, exact=False):
    """Two-sample sup distance between empirical CDFs.

    With ``exact=True`` the value is a ``Fraction`` computed from integer
    counts, so identities such as the triangle inequality hold exactly.
    """
    a, b = np.sort(_spacings(sample1)), np.sort(_spacings(sample2))
    if a.size == 0 or b.size == 0:
        raise InsufficientDataError("KS distance needs two nonempty samples")
    pts = np.union1d(a, b)
    ca = np.searchsorted(a, pts, side="right")
    cb = np.searchsorted(b, pts, side="right")
    na, nb = a.size, b.size
    diff = np.abs(ca.astype(object) * nb - cb.astype(object) * na)
    best = max(diff)
    if exact:
        return Fraction(int(best), na * nb)
    return float(best) / (na * nb)


def wigner_surmise_cdf(s):
    return 1.0 - np.exp(-np.pi * np.asarray(s, dtype=float) ** 2 / 4.0)


def wigner_surmise_distance(sample):
    s = _spacings(sample)
    if s.size == 0:
        raise InsufficientDataError("empty spacing sample")
    return float(scipy.stats.kstest(s, wigner_surmise_cdf).statistic)


def ensemble_spacings(sampler, n, samples, rng, center=CENTER, window_halfwidth=HALFWIDTH):
    """Pooled central-window spacings of ``samples`` draws of ``sampler(n, rng)``."""
    out = []
    for _ in range(samples):
        spec = sampler(n, rng)
        out.append(unfold_spacings(spec, center, window_halfwidth, n))
    return pooled_spacings(out)
