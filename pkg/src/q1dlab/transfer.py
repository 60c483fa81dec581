"""Block transfer matrices and the regularized transfer-matrix evolution.

With ``T_k = [[lam - G - V_k, -I], [I, 0]]`` and the reference matrix
``T_*`` (``lam = lambda_star``, no noise), the frame change
``C = (O^T (+) O^T) Q`` diagonalizes ``T_*`` to ``W = diag(conj(Z), Z)``.
The regularized state is ``X_k = W^-k C^-1 T_k ... T_1 C`` and obeys

    X_k = W^-k (C^-1 T_k C) W^(k-1) X_(k-1).

Powers of ``Z`` are always taken from the stored angles reduced mod 2 pi.
"""

from dataclasses import dataclass
import warnings

import numpy as np

from .errors import DivergenceError, FrameError, GuardError, ResolutionWarning
from .lattice import SpectrumSample, SymmetricOperator, diagonalize

TWO_PI = 2.0 * np.pi
# extended-precision 2 pi keeps k * theta mod 2 pi accurate for large k
_TWO_PI_EXT = np.longdouble("6.28318530717958647692528676655900577")
EDGE_GUARD = 1e-3
DIVERGENCE_LIMIT = 1e12


def transfer_matrix(lam, rG, V_slice):
    """``[[lam I - rG - diag(V), -I], [I, 0]]``."""
    g = rG.entries if isinstance(rG, SymmetricOperator) else np.asarray(rG, dtype=float)
    m = g.shape[0]
    v = np.asarray(V_slice, dtype=float).reshape(m)
    eye = np.eye(m)
    top = lam * eye - g - np.diag(v)
    return np.block([[top, -eye], [eye, np.zeros((m, m))]]).astype(complex)


def phases(theta, k):
    """``exp(i k theta)`` with the angle reduced mod 2 pi first.

    The product and reduction run in long double so the phase error stays
    near machine epsilon instead of growing like ``k * eps``.
    """
    angle = np.multiply(np.asarray(k, dtype=np.longdouble), np.asarray(theta, dtype=np.longdouble))
    return np.exp(1j * np.mod(angle, _TWO_PI_EXT).astype(float))


@dataclass(frozen=True)
class RegularizationFrame:
    lambda_star: float
    d: np.ndarray
    theta: np.ndarray
    z: np.ndarray
    S_half: np.ndarray
    Q: np.ndarray
    Q_inv: np.ndarray
    O: np.ndarray
    edge_guard: float = EDGE_GUARD

    @property
    def m(self):
        return len(self.d)

    @property
    def Z(self):
        return np.diag(self.z)

    @property
    def S(self):
        return np.diag(np.concatenate([self.S_half, self.S_half]))

    def z_power(self, k):
        return phases(self.theta, k)

    def W_power(self, k):
        """Diagonal of ``diag(conj(Z), Z) ** k``."""
        zk = self.z_power(k)
        return np.concatenate([np.conj(zk), zk])

    def rotate_potential(self, v):
        """``V^O = O V O^T`` for diagonal ``V``; ``v`` may be batched ``(..., m)``."""
        return np.einsum("ir,...r,jr->...ij", self.O, v, self.O)

    def conjugate(self, T):
        """``Q^-1 (O (+) O) T (O^T (+) O^T) Q`` for a 2m x 2m matrix (or batch)."""
        m = self.m
        big = np.zeros((2 * m, 2 * m))
        big[:m, :m] = self.O
        big[m:, m:] = self.O
        return self.Q_inv @ (big @ T @ big.T) @ self.Q

    def band_margins(self):
        return 2.0 - np.abs(self.lambda_star - self.d)


def build_frame(lambda_star, rG, edge_guard=EDGE_GUARD):
    """Regularization frame of ``rG`` at the reference energy ``lambda_star``."""
    diag = diagonalize(rG)
    d = np.array(diag.d)
    lambda_star = float(lambda_star)
    gap = 2.0 - np.abs(lambda_star - d)
    if np.min(gap) <= edge_guard:
        j = int(np.argmin(gap))
        raise FrameError(
            f"|lambda_star - d_{j + 1}| = {abs(lambda_star - d[j]):.6g} is not below "
            f"2 - {edge_guard:g} (band edge; eigenvalue index {j + 1})",
            index=j,
        )
    theta = np.arccos((lambda_star - d) / 2.0)
    z = np.exp(1j * theta)
    s = (2.0 * np.sin(theta)) ** -0.5
    m = len(d)
    eye = np.eye(m)
    S = np.diag(np.concatenate([s, s]))
    Zd = np.diag(z)
    Q = np.block([[np.conj(Zd), Zd], [eye, eye]]) @ S
    Q_inv = 1j * S @ np.block([[eye, -Zd], [-eye, np.conj(Zd)]])
    return RegularizationFrame(
        lambda_star, d, theta, z, s, Q, Q_inv, np.array(diag.O), float(edge_guard)
    )


def _conjugated_correction(frame, lam, v):
    """Batched ``Q^-1 [[delta, 0], [0, 0]] Q`` in the eigenbasis of ``rG``.

    ``T_k - T_*`` only has the block ``delta = (lam - lambda_star) I - V^O``
    in its top-left corner, so ``Q^-1 T_k^{O} Q = diag(conj(Z), Z)`` plus
    this correction.  ``lam`` has shape ``(B,)``, ``v`` shape ``(B or 1, m)``.
    """
    m = frame.m
    B = max(len(lam), v.shape[0])
    delta = -frame.rotate_potential(v) * np.ones((B, 1, 1), dtype=complex)
    idx = np.arange(m)
    delta[:, idx, idx] += (lam - frame.lambda_star)[:, None]
    return frame.Q_inv[None, :, :m] @ delta @ frame.Q[None, :m, :]


def step_factor(frame, lam, v, k):
    """Exact one-step factor ``W^-k (C^-1 T_k C) W^(k-1)`` (batched).

    Written as ``I + W^-k E W^(k-1)`` with ``E`` the conjugated
    correction: the identity part carries no phase rounding at all.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    E = _conjugated_correction(frame, lam, v)
    left = frame.W_power(-k)
    right = frame.W_power(k - 1)
    out = left[None, :, None] * E * right[None, None, :]
    n2 = 2 * frame.m
    out[:, np.arange(n2), np.arange(n2)] += 1.0
    return out


@dataclass(frozen=True)
class TransferState:
    k: int
    X: np.ndarray
    lam: complex


def _prepare(frame, V_slices, lam):
    V = np.asarray(V_slices, dtype=float)
    if V.ndim == 2:
        V = V[None]
    if V.shape[-1] != frame.m:
        raise GuardError(f"slice potentials have width {V.shape[-1]}, frame has m={frame.m}")
    lam = np.atleast_1d(np.asarray(lam, dtype=complex))
    if V.shape[0] not in (1, len(lam)) and len(lam) != 1:
        raise GuardError("batch sizes of potentials and spectral parameters differ")
    return V, lam


BLOCK_MATRICES = 1 << 16


def _block_steps(frame, lam, V, k0, k1, basis, P0):
    """Step factors for steps ``k0..k1-1`` as ``(B, K, 2m, 2m)``.

    Same algebra as ``step_factor``: the rotated potential enters linearly
    through ``basis[r] = (Q^-1[:, :m] O)[:, r] (O^T Q[:m, :])[r, :]``.
    """
    m2 = 2 * frame.m
    k = np.arange(k0, k1)
    zl = phases(frame.theta[None, :], -k[:, None])
    zr = phases(frame.theta[None, :], (k - 1)[:, None])
    left = np.concatenate([np.conj(zl), zl], axis=1)
    right = np.concatenate([np.conj(zr), zr], axis=1)
    ph = left[:, :, None] * right[:, None, :]
    ev = (V[:, k0 - 1:k1 - 1, :] @ basis).reshape(V.shape[0], len(k), m2, m2)
    E = (lam - frame.lambda_star)[:, None, None, None] * P0 - ev
    out = ph[None] * E
    idx = np.arange(m2)
    out[:, :, idx, idx] += 1.0
    return out


def _ordered_product(M):
    """``M[:, K-1] @ ... @ M[:, 0]`` by pairwise reduction."""
    while M.shape[1] > 1:
        if M.shape[1] % 2:
            eye = np.broadcast_to(np.eye(M.shape[-1], dtype=M.dtype), (M.shape[0], 1) + M.shape[2:])
            M = np.concatenate([M, eye], axis=1)
        M = M[:, 1::2] @ M[:, 0::2]
    return M[:, 0]


def evolve_final(frame, V_slices, lam, check=None):
    """``X_n`` for a batch of (potential, lambda) pairs.

    ``V_slices``: ``(n, m)`` or ``(B, n, m)``; ``lam``: scalar or ``(B,)``.
    Either side may have batch size 1 and is then broadcast.  ``check``,
    if given, is called as ``check(k, X)`` after every step; without it the
    steps are multiplied in vectorized blocks.
    """
    V, lam = _prepare(frame, V_slices, lam)
    B = max(V.shape[0], len(lam))
    if len(lam) == 1 and B > 1:
        lam = np.repeat(lam, B)
    n = V.shape[1]
    m, m2 = frame.m, 2 * frame.m
    X = np.broadcast_to(np.eye(m2, dtype=complex), (B, m2, m2)).copy()
    if check is not None:
        for k in range(1, n + 1):
            X = step_factor(frame, lam, V[:, k - 1, :], k) @ X
            _check_growth(X, k)
            check(k, X)
        return X
    a = frame.Q_inv[:, :m] @ frame.O
    b = frame.O.T @ frame.Q[:m, :]
    basis = (a.T[:, :, None] * b[:, None, :]).reshape(m, m2 * m2)
    P0 = frame.Q_inv[:, :m] @ frame.Q[:m, :]
    K = max(1, min(n, BLOCK_MATRICES // B))
    for k0 in range(1, n + 1, K):
        k1 = min(k0 + K, n + 1)
        X = _ordered_product(_block_steps(frame, lam, V, k0, k1, basis, P0)) @ X
        _check_growth(X, k1 - 1)
    return X


def _check_growth(X, k):
    if not np.all(np.isfinite(X)) or np.abs(X).max() > DIVERGENCE_LIMIT:
        raise DivergenceError(
            f"regularized evolution exceeded {DIVERGENCE_LIMIT:g} at step {k}"
        )


def evolve(frame, V_slices, lam):
    """Full path ``X_0 = I, X_1, ..., X_n`` of one evolution."""
    V = np.asarray(V_slices, dtype=float)
    if V.ndim != 2:
        raise GuardError("evolve takes a single (n, m) potential sequence")
    lam = complex(lam)
    states = [TransferState(0, np.eye(2 * frame.m, dtype=complex), lam)]

    def record(k, X):
        states.append(TransferState(k, X[0].copy(), lam))

    evolve_final(frame, V, lam, check=record)
    return states


def secular_from_state(frame, X, n):
    """``det Im(conj(Z)^(n+1) (X_11 - X_12))`` for a batch of states."""
    m = frame.m
    zbar = np.conj(frame.z_power(n + 1))
    inner = zbar[None, :, None] * (X[:, :m, :m] - X[:, :m, m:])
    return np.linalg.det(inner.imag)


def secular_function(frame, V_slices, lam):
    """Real secular function; zeros in ``lam`` are the box eigenvalues.

    ``lam`` may be a real scalar or a 1-d array (evaluated in one batch).
    """
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    V = np.asarray(V_slices, dtype=float)
    n = V.shape[-2]
    X = evolve_final(frame, V, lam_arr.astype(complex))
    out = secular_from_state(frame, X, n)
    return out if np.ndim(lam) else float(out[0])


def _bisect(f, lo, hi, flo, tol):
    lo, hi, flo = lo.copy(), hi.copy(), flo.copy()
    while lo.size and np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
        exact = fm == 0
        lo = np.where(exact, mid, lo)
        hi = np.where(exact, mid, hi)
    return 0.5 * (lo + hi)


def find_sign_changes(f, grid, refine_depth=4, subdivisions=8):
    """Sign-change brackets of ``f`` on ``grid``, with local refinement.

    Each discrete local minimum of ``|f|`` is resampled on a finer grid
    (``subdivisions`` cells) across its two neighbouring cells, up to
    ``refine_depth`` times, so that a pair of close zeros sharing one
    coarse cell is still split into two brackets.
    """
    grid = np.asarray(grid, dtype=float)
    values = f(grid)
    xs, fs = [grid], [values]
    todo = _suspect_intervals(grid, values)
    for _ in range(refine_depth):
        if not todo:
            break
        pts = np.concatenate([np.linspace(a, b, subdivisions + 1)[1:-1] for a, b in todo])
        fp = f(pts)
        xs.append(pts)
        fs.append(fp)
        nxt = []
        for i, (a, b) in enumerate(todo):
            sub_x = np.concatenate([[a], pts[i * (subdivisions - 1):(i + 1) * (subdivisions - 1)], [b]])
            sub_f = np.concatenate([[_lookup(xs, fs, a)], fp[i * (subdivisions - 1):(i + 1) * (subdivisions - 1)], [_lookup(xs, fs, b)]])
            nxt.extend(_suspect_intervals(sub_x, sub_f, strict=True))
        todo = nxt
    x = np.concatenate(xs)
    fx = np.concatenate(fs)
    order = np.argsort(x, kind="stable")
    x, fx = x[order], fx[order]
    keep = np.concatenate([[True], np.diff(x) > 0])
    x, fx = x[keep], fx[keep]
    roots = x[fx == 0]
    s = np.sign(fx)
    change = (s[:-1] * s[1:]) < 0
    return x[:-1][change], x[1:][change], fx[:-1][change], roots


def _lookup(xs, fs, point):
    for x, fx in zip(xs, fs):
        hit = np.flatnonzero(x == point)
        if hit.size:
            return fx[hit[0]]
    raise KeyError(point)


def _suspect_intervals(x, fx, strict=False):
    """Intervals around interior local minima of ``|f|`` worth resampling."""
    a = np.abs(fx)
    out = []
    for i in range(1, len(x) - 1):
        if a[i] <= a[i - 1] and a[i] <= a[i + 1] and a[i] > 0:
            no_change = fx[i - 1] * fx[i] > 0 and fx[i] * fx[i + 1] > 0
            if strict and not no_change:
                continue
            out.append((x[i - 1], x[i + 1]))
    return out


def default_grid_points(window, dim):
    """Eight grid points per estimated mean spacing ``window / dim``."""
    return 8 * int(dim) + 1


def transfer_spectrum(frame, V_slices, window, grid_points=None, tol=1e-10,
                      expected_count=None, refine_depth=4, max_regrids=3):
    """Zeros of the secular function inside ``window``.

    Brackets come from sign changes on a uniform grid (plus local
    refinement near minima of ``|f|``) and are refined by bisection to
    ``tol``.  When ``expected_count`` is given and not met, the grid is
    refined four-fold up to ``max_regrids`` times before a
    ``ResolutionWarning`` is issued.
    """
    V = np.asarray(V_slices, dtype=float)
    if V.ndim != 2:
        raise GuardError("transfer_spectrum takes a single (n, m) potential sequence")
    n = V.shape[0]
    lo, hi = map(float, window)
    if not hi > lo:
        raise GuardError("window must satisfy lo < hi")
    if grid_points is None:
        grid_points = default_grid_points(hi - lo, n * frame.m)

    def f(lam):
        return secular_function(frame, V, np.asarray(lam, dtype=float))

    for attempt in range(max_regrids + 1):
        grid = np.linspace(lo, hi, int(grid_points))
        a, b, fa, exact = find_sign_changes(f, grid, refine_depth=refine_depth)
        roots = np.concatenate([_bisect(f, a, b, fa, tol), exact])
        roots = roots[(roots > lo) & (roots < hi)]
        if expected_count is None or len(roots) == expected_count:
            break
        if attempt < max_regrids:
            grid_points = 4 * (int(grid_points) - 1) + 1
    if expected_count is not None and len(roots) != expected_count:
        warnings.warn(
            f"found {len(roots)} zeros in ({lo}, {hi}), expected {expected_count}",
            ResolutionWarning,
            stacklevel=2,
        )
    return SpectrumSample(roots, "transfer", {"grid_points": int(grid_points), "tol": tol})


def coefficient_expansion(frame, V_slice, k, lambda_offset, n=1):
    """``R_k`` with ``I + R_k`` the one-step factor at step ``k``.

    The middle block is ``delta = lambda_offset / n - V / sqrt(n)`` (the
    unscaled step is ``n = 1``), so that

        R_k = i S [[Z^k d Z^-k,  Z^k d Z^k ],
                   [-Z^-k d Z^-k, -Z^-k d Z^k]] S,   d = delta^O.

    This matches ``step_factor`` at ``lam = lambda_star + lambda_offset / n``
    with potential ``V / sqrt(n)``.
    """
    m = frame.m
    v = np.asarray(V_slice, dtype=float).reshape(m) / np.sqrt(n)
    delta = (lambda_offset / n) * np.eye(m) - frame.rotate_potential(v)
    zk = frame.z_power(k)
    zi = np.conj(zk)
    s = frame.S_half
    blocks = np.block([
        [zk[:, None] * delta * zi[None, :], zk[:, None] * delta * zk[None, :]],
        [-zi[:, None] * delta * zi[None, :], -zi[:, None] * delta * zk[None, :]],
    ])
    ss = np.concatenate([s, s])
    return 1j * ss[:, None] * blocks * ss[None, :]


def drift_block(frame, k):
    """``S [[I, Z^2k], [-Z^-2k, -I]] S``: the drift term per unit offset."""
    m = frame.m
    z2 = frame.z_power(2 * k)
    s2 = frame.S_half ** 2
    out = np.zeros((2 * m, 2 * m), dtype=complex)
    idx = np.arange(m)
    out[idx, idx] = s2
    out[idx, m + idx] = s2 * z2
    out[m + idx, idx] = -s2 * np.conj(z2)
    out[m + idx, m + idx] = -s2
    return out
