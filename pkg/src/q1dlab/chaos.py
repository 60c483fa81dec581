"""Chaoticity of angle sets and the arithmetic parameter search.

For angles ``x_1..x_m`` the resonance set is

    {x_a + x_b + x_c + x_d}
    {x_a + x_b - x_c - x_d : a, b distinct from c, d}
    {x_a + x_b + x_c - x_d}

(indices with repetition, sums mod 2 pi) and the chaoticity is its arc
distance to 0.  Sums are always associated as ``(x_a + x_b) +/- (...)``
so that the vectorized and the loop versions produce identical floats.
"""

from dataclasses import dataclass, field
import itertools

import numpy as np

from .errors import BandError, ConditionError, GuardError
from .lattice import diagonalize
from .seeding import parallel_map

TWO_PI = 2.0 * np.pi
DEFECT_TOL = 0.05
CHA_MIN = 0.01
N_MAX = 1_000_000


def circle_distance(a):
    """Arc distance of ``a`` (mod 2 pi) to 0."""
    r = np.mod(a, TWO_PI)
    return np.minimum(r, TWO_PI - r)


@dataclass(frozen=True)
class AngleSet:
    angles: np.ndarray

    def __post_init__(self):
        a = np.mod(np.asarray(self.angles, dtype=float).ravel(), TWO_PI)
        object.__setattr__(self, "angles", a)

    def __len__(self):
        return len(self.angles)


def _as_angles(X):
    return X.angles if isinstance(X, AngleSet) else AngleSet(X).angles


def chaoticity(X):
    """Vectorized O(m^4) enumeration of the resonance set."""
    x = _as_angles(X)
    m = len(x)
    if m == 0:
        raise GuardError("chaoticity of an empty angle set")
    pair = x[:, None] + x[None, :]
    diff = x[:, None] - x[None, :]
    best = circle_distance(pair[:, :, None, None] + pair[None, None, :, :]).min()
    best = min(best, circle_distance(pair[:, :, None, None] + diff[None, None, :, :]).min())
    idx = np.arange(m)
    # the minus pair (c, d) must avoid both plus indices (a, b)
    clash = (
        (idx[:, None, None, None] == idx[None, None, :, None])
        | (idx[:, None, None, None] == idx[None, None, None, :])
        | (idx[None, :, None, None] == idx[None, None, :, None])
        | (idx[None, :, None, None] == idx[None, None, None, :])
    )
    if not clash.all():
        mixed = circle_distance(pair[:, :, None, None] - pair[None, None, :, :])
        best = min(best, mixed[~clash].min())
    return float(best)


def chaoticity_bruteforce(X):
    """Reference loop implementation of ``chaoticity``."""
    x = [float(v) for v in _as_angles(X)]
    m = len(x)
    if m == 0:
        raise GuardError("chaoticity of an empty angle set")

    def dist(a):
        r = a % TWO_PI
        return min(r, TWO_PI - r)

    best = np.inf
    for a, b, c, d in itertools.product(range(m), repeat=4):
        best = min(best, dist((x[a] + x[b]) + (x[c] + x[d])))
        best = min(best, dist((x[a] + x[b]) + (x[c] - x[d])))
        if a not in (c, d) and b not in (c, d):
            best = min(best, dist((x[a] + x[b]) - (x[c] + x[d])))
    return float(best)


def critical_angles(lambda_star, r, d):
    """``arccos((lambda_star - r d_j) / 2)`` for each base eigenvalue."""
    arg = (float(lambda_star) - float(r) * np.asarray(d, dtype=float)) / 2.0
    if np.any(np.abs(arg) >= 1.0):
        j = int(np.argmax(np.abs(arg)))
        raise BandError(
            f"|lambda_star - r d_{j + 1}| = {2 * abs(arg[j]):.6g} is not below 2"
        )
    return AngleSet(np.arccos(arg))


def strange_condition(lambda_star, d, tol=1e-9):
    """``(2 - l) / (2 + l)`` differs from every ratio ``d_j / d_j'`` by > tol."""
    if lambda_star == -2:
        raise ConditionError("the ratio (2 - lambda_star) / (2 + lambda_star) is undefined at -2")
    target = (2.0 - lambda_star) / (2.0 + lambda_star)
    d = np.asarray(d, dtype=float)
    den = d[d != 0]
    if den.size == 0:
        return True
    ratios = d[:, None] / den[None, :]
    return bool(np.all(np.abs(target - ratios) > tol))


def defect_scan(q, n_max):
    """``max_j dist((n + 1) q_j, 0)`` for ``n = 1..n_max``."""
    q = np.asarray(q, dtype=float)
    out = np.zeros(n_max)
    step = 200_000
    for lo in range(0, n_max, step):
        n = np.arange(lo + 1, min(lo + step, n_max) + 1, dtype=float)
        out[lo:lo + len(n)] = circle_distance(np.outer(n + 1.0, q)).max(axis=1)
    return out


def defect(q, n):
    return float(circle_distance((n + 1.0) * np.asarray(q, dtype=float)).max())


@dataclass(frozen=True)
class ParameterCandidate:
    r: float
    n: int
    defect: float
    cha: float
    strange_ok: bool
    angles: tuple = ()

    @property
    def growth(self):
        """``n * cha(q)``: must grow along a good sequence (reported only)."""
        return self.n * self.cha

    @property
    def phase_defect(self):
        """``max_j |exp(i (n+1) q_j) - 1|``."""
        q = np.asarray(self.angles)
        return float(np.abs(np.exp(1j * (self.n + 1) * q) - 1.0).max()) if q.size else 0.0


@dataclass
class SearchResult:
    """Accepted candidates (best first) plus per-r diagnostics for every r tried."""

    candidates: list
    diagnostics: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self):
        return len(self.candidates)

    def __getitem__(self, i):
        return self.candidates[i]

    @property
    def empty(self):
        return not self.candidates


def _best_n(q, n_max):
    scan = defect_scan(q, n_max)
    low = scan.min()
    # smallest n within rounding of the minimum keeps the choice stable
    n = int(np.flatnonzero(scan <= low + 1e-12)[0]) + 1
    return n, float(scan[n - 1])


def search_parameters(lambda_star, G, r_grid, n_max=N_MAX, defect_tol=DEFECT_TOL,
                      cha_min=CHA_MIN, threads=None):
    """Scan ``r_grid`` and ``n <= n_max`` for near-resonant chaotic parameters."""
    d = np.array(diagonalize(G).d)
    if not strange_condition(lambda_star, d):
        raise ConditionError(
            f"lambda_star={lambda_star} violates (2-l)/(2+l) != d_j/d_j' for the base spectrum"
        )

    def one(r):
        row = {"r": float(r)}
        try:
            q = critical_angles(lambda_star, r, d).angles
        except BandError as exc:
            row["status"] = f"band: {exc}"
            return row, None
        cha = chaoticity(q)
        row["cha"] = cha
        if cha < cha_min:
            row["status"] = "cha below cha_min"
            return row, None
        n, dfct = _best_n(q, int(n_max))
        row.update(n=n, defect=dfct)
        if dfct > defect_tol:
            row["status"] = "defect above defect_tol"
            return row, None
        row["status"] = "accepted"
        return row, ParameterCandidate(float(r), n, dfct, cha, True, tuple(float(a) for a in q))

    results = parallel_map(one, list(r_grid), threads)
    diagnostics = [row for row, _ in results]
    found = [c for _, c in results if c is not None]
    found.sort(key=lambda c: c.defect)
    return SearchResult(found, diagnostics)
