"""Cyclic Jacobi eigensolver for dense real symmetric matrices.

Rotations are applied in round-robin (tournament) order: each round
annihilates ``n // 2`` disjoint off-diagonal pairs at once, so one round
is a handful of vectorized row/column updates and a sweep is ``n - 1``
rounds (``n`` padded to even).
"""

import numpy as np

from .errors import ConvergenceError

OFF_TOL = 1e-14
MAX_SWEEPS = 100


def _tournament(n):
    """Round-robin schedule on ``n`` (even) players: list of (p, q) arrays."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        p = np.array(players[: n // 2])
        q = np.array(players[n // 2:][::-1])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _off_norm(a):
    off = a - np.diag(np.diag(a))
    return np.sqrt(np.sum(off * off))


def jacobi_eigh(matrix, tol=OFF_TOL, max_sweeps=MAX_SWEEPS):
    """Return ``(w, v)`` with ``matrix @ v[:, k] == w[k] * v[:, k]``.

    Converged when the off-diagonal Frobenius norm is at most ``tol``
    times the Frobenius norm of the input.  Eigenvalues are returned in
    the order the sweeps leave them (unsorted).
    """
    a = np.array(matrix, dtype=float, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    size = n + (n % 2)
    if size != n:
        # a decoupled dummy row/column keeps the schedule simple
        a = np.pad(a, ((0, 1), (0, 1)))
        v = np.pad(v, ((0, 1), (0, 1)))
        v[n, n] = 1.0
    scale = np.sqrt(np.sum(a * a))
    threshold = tol * scale
    schedule = _tournament(size)
    for _ in range(max_sweeps):
        if _off_norm(a) <= threshold:
            break
        for p, q in schedule:
            apq = a[p, q]
            live = apq != 0.0
            if not live.any():
                continue
            p, q, apq = p[live], q[live], apq[live]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            huge = np.abs(theta) > 1e150
            theta_ok = np.where(huge, 1.0, theta)
            t = np.sign(theta_ok) / (np.abs(theta_ok) + np.sqrt(theta_ok * theta_ok + 1.0))
            t = np.where(huge, 0.5 / np.where(huge, theta, 1.0), t)
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rows_p, rows_q = a[p, :], a[q, :]
            a[p, :] = c[:, None] * rows_p - s[:, None] * rows_q
            a[q, :] = s[:, None] * rows_p + c[:, None] * rows_q
            cols_p, cols_q = a[:, p], a[:, q]
            a[:, p] = cols_p * c - cols_q * s
            a[:, q] = cols_p * s + cols_q * c
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p], v[:, q]
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c
    else:
        if _off_norm(a) > threshold:
            raise ConvergenceError(
                f"Jacobi iteration did not converge in {max_sweeps} sweeps"
            )
    return a.diagonal()[:n].copy(), v[:n, :n].copy()
