"""End-to-end desk-scale pipelines.

* ``transition_experiment``: locally rescaled eigenvalues ``n (E - lambda_star)``
  of the noisy box for a ladder of noise strengths, next to the zeros of
  the limiting secular function built from the SDE.
* ``sine1_pipeline``: parameter search, then the ``m`` eigenvalues closest
  to ``lambda_star`` rescaled by ``n / sigma``, compared with the limit
  random matrix and with GOE(m).
* ``higher_dim_gram``: overlap Gram of a product of paths, by the product
  formula and by brute force.
"""

from dataclasses import dataclass, field, asdict
import itertools
import warnings

import numpy as np

from .chaos import chaoticity, critical_angles, defect, search_parameters, strange_condition
from .errors import ConditionError, GuardError, InsufficientDataError, ResolutionWarning
from .lattice import (
    Diagonalization, NoiseSpec, SymmetricOperator, cartesian_product, diagonalize,
    kronecker_sum_spectrum, noise_slices, overlap_gram, path_graph, scale, window_spectrum,
)
from .oscillatory import CHAOS_EPS
from .rmt import goe_matrix, ks_distance
from .sde import limit_matrices, sde_secular_grid
from .seeding import mix64, parallel_map, rng_for
from .transfer import _bisect, build_frame, find_sign_changes, transfer_spectrum

SIGMA_FLOOR = 1e-3
SIGMA_CEIL = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run depends on.  ``base`` is ``("path", m)``,
    ``("product", (m1, ..., md))`` or ``("matrix", rows)``."""

    base: tuple = ("path", 3)
    r: float = 0.7
    lambda_star: float = 0.3
    n: int = 200
    sigmas: tuple = (0.0, 0.5)
    noise: NoiseSpec = NoiseSpec()
    window: float = 6.0
    grid_points: int = 256
    trials: int = 20
    sde_samples: int = 20
    sde_steps: int = 500
    master_seed: int = 0
    threads: int = None

    @property
    def sigma(self):
        return self.sigmas[-1]


@dataclass
class ExperimentReport:
    name: str
    config: dict
    diagnostics: dict
    tables: dict = field(default_factory=dict)


def base_graph(base):
    kind = base[0]
    if kind == "path":
        return path_graph(int(base[1]))
    if kind == "product":
        ms = [int(x) for x in base[1]]
        if not ms:
            raise GuardError("product base needs at least one factor")
        G = path_graph(ms[0])
        for m in ms[1:]:
            G = cartesian_product(G, path_graph(m))
        return G
    if kind == "matrix":
        return SymmetricOperator(np.asarray(base[1], dtype=float))
    raise GuardError(f"unknown base kind {kind!r}")


def config_dict(config):
    out = asdict(config)
    # thread count never changes results, so it stays out of the replay record
    del out["threads"]
    out["noise"] = asdict(config.noise)
    out["base"] = [config.base[0], np.asarray(config.base[1]).tolist()]
    out["sigmas"] = [float(s) for s in config.sigmas]
    return out


def guard_diagnostics(config):
    """Band margins, chaoticity, phase defect and the ratio condition, before any run."""
    G = base_graph(config.base)
    rG = scale(G, config.r)
    frame = build_frame(config.lambda_star, rG)
    theta = np.asarray(frame.theta)
    cha = chaoticity(theta)
    try:
        strange = strange_condition(config.lambda_star, np.asarray(frame.d))
    except ConditionError:
        strange = False
    diag = {
        "m": frame.m,
        "band_margin": float(frame.band_margins().min()),
        "chaoticity": cha,
        "chaotic": bool(cha > CHAOS_EPS),
        "defect": defect(theta, config.n),
        "phase_defect": float(np.abs(np.exp(1j * (config.n + 1) * theta) - 1.0).max()),
        "strange_condition": bool(strange),
        "n_times_cha": float(config.n * cha),
    }
    return frame, diag


def _gaps(points_per_sample):
    gaps = [np.diff(np.sort(p)) for p in points_per_sample if len(p) > 1]
    return np.concatenate(gaps) if gaps else np.zeros(0)


def _normalized(gaps):
    if gaps.size == 0:
        return gaps
    return gaps / gaps.mean()


def histogram_tv(a, b, bins=None):
    """Total variation distance between two normalized spacing histograms."""
    bins = np.linspace(0.0, 4.0, 21) if bins is None else bins
    ha, _ = np.histogram(np.clip(a, 0, bins[-1]), bins)
    hb, _ = np.histogram(np.clip(b, 0, bins[-1]), bins)
    if ha.sum() == 0 or hb.sum() == 0:
        return float("nan")
    return float(0.5 * np.abs(ha / ha.sum() - hb / hb.sum()).sum())


def _discrete_points(config, G, frame, sigma, rung):
    n = config.n
    lo = config.lambda_star - config.window / n
    hi = config.lambda_star + config.window / n
    noise = NoiseSpec(config.noise.distribution, config.noise.amplitude,
                      mix64(config.master_seed, 2 * rung))

    def one(t):
        V = noise_slices(noise.for_trial(t), frame.m, n, sigma / np.sqrt(n))
        oracle = window_spectrum(G, config.r, n, V, lo, hi).values
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ResolutionWarning)
            spec = transfer_spectrum(frame, V, (lo, hi), grid_points=config.grid_points,
                                     tol=1e-7 / n, expected_count=len(oracle))
        mismatch = len(spec) != len(oracle) or bool(caught)
        return n * (spec.values - config.lambda_star), mismatch

    out = parallel_map(one, range(config.trials), config.threads)
    return [p for p, _ in out], sum(int(bad) for _, bad in out)


def _sde_points(config, frame, gram, sigma, rung):
    W = config.window
    grid = np.linspace(-W, W, config.grid_points)
    zhat = np.conj(frame.z_power(config.n + 1))
    seed = mix64(config.master_seed, 2 * rung + 1)

    def one(s):
        f, _ = sde_secular_grid(frame.S_half, gram, sigma, grid, config.sde_steps,
                                rng_for(seed, s), Zhat=zhat)
        a, b, fa, exact = find_sign_changes(f, grid)
        roots = np.concatenate([_bisect(f, a, b, fa, 1e-7), exact])
        return np.sort(roots[(roots > -W) & (roots < W)])

    return parallel_map(one, range(config.sde_samples), config.threads)


LIMIT_SAMPLES = 2000


def _limit_comparison(config, frame, gram, disc, sigma, rung):
    """KS between the ``m`` points nearest 0 (scaled by ``1/sigma``) and limit-matrix spectra.

    Meaningful only when ``(r, n)`` makes ``Z^(n+1)`` close to ``I``, as
    returned by ``search_parameters``.
    """
    m = frame.m
    if m < 2:
        return float("nan")
    cluster = [np.sort(p[np.argsort(np.abs(p), kind="stable")[:m]]) / sigma
               for p in disc if len(p) >= m]
    # S drops out of the zeros, so the comparison uses S = I
    rng = rng_for(mix64(config.master_seed, 1_000_000 + rung))
    lim = np.linalg.eigvalsh(limit_matrices(np.ones(m), gram, rng, LIMIT_SAMPLES))
    gd, gl = _normalized(_gaps(cluster)), _normalized(_gaps(lim))
    return ks_distance(gd, gl) if gd.size and gl.size else float("nan")


def transition_experiment(config):
    """Rescaled local spectrum vs the SDE zero process along a noise ladder."""
    frame, diag = guard_diagnostics(config)
    if not diag["chaotic"]:
        raise GuardError(f"critical angles are resonant (chaoticity {diag['chaoticity']:.3g})")
    G = base_graph(config.base)
    gram = overlap_gram(Diagonalization(frame.O, frame.d)) * config.noise.amplitude ** 2
    rungs, points = [], []
    previous = None
    for rung, sigma in enumerate(config.sigmas):
        disc, mismatches = _discrete_points(config, G, frame, float(sigma), rung)
        sde = _sde_points(config, frame, gram, float(sigma), rung)
        gd, gs = _normalized(_gaps(disc)), _normalized(_gaps(sde))
        row = {
            "sigma": float(sigma),
            "discrete_points": int(sum(len(p) for p in disc)),
            "sde_points": int(sum(len(p) for p in sde)),
            "count_mismatches": mismatches,
            "ks_discrete_sde": ks_distance(gd, gs) if gd.size and gs.size else float("nan"),
            "tv_to_previous": histogram_tv(gd, previous) if previous is not None else float("nan"),
        }
        if sigma > 0:
            row["ks_discrete_limit"] = _limit_comparison(config, frame, gram, disc, float(sigma), rung)
        if sigma == 0:
            kron = config.n * (kronecker_sum_spectrum(frame.d, config.n) - config.lambda_star)
            kron = kron[np.abs(kron) < config.window]
            errs = [np.abs(p - kron).max() if len(p) == len(kron) else np.inf for p in disc]
            row["kronecker_error"] = float(max(errs)) if errs else float("nan")
        previous = gd
        rungs.append(row)
        for t, p in enumerate(disc):
            points.extend({"sigma": float(sigma), "source": "discrete", "sample": t, "mu": float(x)}
                          for x in p)
        for t, p in enumerate(sde):
            points.extend({"sigma": float(sigma), "source": "sde", "sample": t, "mu": float(x)}
                          for x in p)
    return ExperimentReport("transition", config_dict(config), diag,
                            {"rungs": rungs, "points": points})


def sigma_schedule(phase_defect, n, cha):
    """``clip(max(sqrt(phase_defect), (n cha)^-1/2), 1e-3, 1)``."""
    raw = max(np.sqrt(phase_defect), (n * cha) ** -0.5 if cha > 0 else SIGMA_CEIL)
    return float(np.clip(raw, SIGMA_FLOOR, SIGMA_CEIL))


def cluster_eigenvalues(G, r, n, V, lambda_star, m):
    """The ``m`` box eigenvalues closest to ``lambda_star``."""
    for width in (4.0, 16.0, 64.0):
        vals = window_spectrum(G, r, n, V, lambda_star - width / n, lambda_star + width / n).values
        if len(vals) >= m:
            near = vals[np.argsort(np.abs(vals - lambda_star), kind="stable")[:m]]
            return np.sort(near)
    raise InsufficientDataError(f"fewer than {m} eigenvalues near {lambda_star}")


DEFAULT_BUDGETS = {
    "r_grid": tuple(np.round(np.linspace(0.3, 1.0, 36), 10)),
    "n_max": 20_000,
    "trials": 200,
    "limit_samples": 2000,
    "goe_samples": 2000,
    "seed": 0,
    "threads": None,
}


def sine1_pipeline(lambda_star, m_list, budgets=None):
    """Per-m spacing comparison: discrete cluster vs limit matrix vs GOE(m)."""
    b = dict(DEFAULT_BUDGETS)
    b.update(budgets or {})
    rungs, candidates = [], []
    for m in m_list:
        G = path_graph(m)
        row = {"m": int(m)}
        d = np.array(diagonalize(G).d)
        if not strange_condition(lambda_star, d):
            row["status"] = "ratio condition fails"
            rungs.append(row)
            continue
        if m == 1:
            row["status"] = "insufficient m"
            rungs.append(row)
            continue
        result = search_parameters(lambda_star, G, b["r_grid"], n_max=b["n_max"], threads=b["threads"])
        for rank, c in enumerate(result):
            sig = sigma_schedule(c.phase_defect, c.n, c.cha)
            candidates.append({"m": int(m), "rank": rank, "r": c.r, "n": c.n, "defect": c.defect,
                               "cha": c.cha, "n_times_cha": c.growth,
                               "defect_ratio": c.phase_defect / sig, "sigma": sig})
        if result.empty:
            reasons = sorted({str(x.get("status")) for x in result.diagnostics})
            row["status"] = "search failed: " + "; ".join(reasons)
            rungs.append(row)
            continue
        best = result[0]
        sigma = sigma_schedule(best.phase_defect, best.n, best.cha)
        row.update(r=best.r, n=best.n, sigma=sigma, cha=best.cha, defect=best.defect,
                   defect_ratio=best.phase_defect / sigma, n_times_cha=best.growth)
        seed = mix64(b["seed"], m)
        noise = NoiseSpec(seed=mix64(seed, 0))

        def one(t, best=best, sigma=sigma, noise=noise, G=G, m=m):
            V = noise_slices(noise.for_trial(t), m, best.n, sigma / np.sqrt(best.n))
            E = cluster_eigenvalues(G, best.r, best.n, V, lambda_star, m)
            return best.n * (E - lambda_star) / sigma

        disc = parallel_map(one, range(b["trials"]), b["threads"])
        gram = overlap_gram(diagonalize(G))
        # the S factors of the frame drop out of the zeros, so compare to S = I
        lim = np.linalg.eigvalsh(limit_matrices(np.ones(m), gram, rng_for(seed, 1), b["limit_samples"]))
        grng = rng_for(seed, 2)
        goe = np.array([np.linalg.eigvalsh(goe_matrix(m, grng)) for _ in range(b["goe_samples"])])
        gd, gl, gg = _normalized(_gaps(disc)), _normalized(_gaps(lim)), _normalized(_gaps(goe))
        row.update(status="ok", ks_discrete_limit=ks_distance(gd, gl),
                   ks_discrete_goe=ks_distance(gd, gg), ks_limit_goe=ks_distance(gl, gg),
                   discrete_mean_gap=float(_gaps(disc).mean()))
        rungs.append(row)
    config = {"lambda_star": float(lambda_star), "m_list": [int(m) for m in m_list],
              "budgets": {k: (list(v) if isinstance(v, tuple) else v) for k, v in b.items()
                          if k != "threads"}}
    return ExperimentReport("sine1", config, {}, {"rungs": rungs, "candidates": candidates})


def product_eigensystem(m_list):
    """Explicit tensor-product eigenvectors (rows) and eigenvalues of a product of paths.

    Rows follow the lexicographic multi-index order, which matches the
    vertex layout of ``cartesian_product``.
    """
    factors = [diagonalize(path_graph(m)) for m in m_list]
    O = np.ones((1, 1))
    d = np.zeros(1)
    for f in factors:
        O = np.einsum("ia,jb->ijab", O, f.O).reshape(O.shape[0] * f.O.shape[0], -1)
        d = (d[:, None] + f.d[None, :]).ravel()
    return Diagonalization(O, d)


@dataclass
class ProductGram:
    multi_indices: list
    gram: np.ndarray
    formula: np.ndarray
    flags: list

    @property
    def agree(self):
        return not self.flags


def higher_dim_gram(m_list, tol=1e-12):
    """Brute-force Gram of the product eigenvectors, with formula disagreements flagged."""
    m_list = [int(m) for m in m_list]
    if not m_list or min(m_list) < 1:
        raise GuardError("need at least one path factor of length >= 1")
    gram = overlap_gram(product_eigensystem(m_list))
    idx = list(itertools.product(*[range(m) for m in m_list]))
    I = np.array(idx)
    same = I[:, None, :] == I[None, :, :]
    formula = np.prod(1.0 + 0.5 * same, axis=2) / np.prod(np.array(m_list) + 1.0)
    bad = np.argwhere(np.abs(gram - formula) > tol)
    flags = [(tuple(int(x) + 1 for x in idx[a]), tuple(int(x) + 1 for x in idx[c]))
             for a, c in bad]
    return ProductGram([tuple(x + 1 for x in i) for i in idx], gram, formula, flags)
