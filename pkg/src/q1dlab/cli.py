"""Command line: ``q1dlab <command> --config <file> [--seed N] [--out DIR] [--threads N]``.

Config files are INI-style (``[section]`` headers, ``key = value`` lines,
``#`` comments).  Shared sections:

    [model]   base = path | product | matrix, m, factors, matrix, r, lambda_star, n, sigma
    [noise]   distribution, amplitude
    [run]     seed, threads

plus one section named after the command.  Every output file is CSV
preceded by a ``# q1dlab ...`` comment line carrying the run digest;
floats are written as ``%.16e``, complex numbers as ``_re``/``_im`` pairs.
"""

import argparse
import configparser
import csv
import datetime
import hashlib
import os
import sys
import warnings

import numpy as np

from . import __version__
from .chaos import AngleSet, chaoticity, critical_angles, search_parameters
from .errors import ConfigError, Q1dError
from .experiments import (
    ExperimentConfig, base_graph, higher_dim_gram, sine1_pipeline, transition_experiment,
)
from .lattice import (
    Diagonalization, NoiseSpec, assemble_box, diagonalize, direct_spectrum, noise_slices,
    overlap_gram, scale,
)
from .oscillatory import covariance_experiment
from .rmt import (
    ensemble_spacings, ks_distance, sample_goe, sample_modified_goe, wigner_surmise_distance,
)
from .sde import discrete_vs_sde_experiment, drift_solution, integrate, integrate_paths, limit_matrices
from .seeding import default_threads, mix64, rng_for
from .transfer import build_frame, transfer_spectrum

COMMANDS = ("spectrum", "noise-cov", "chaoticity", "search", "sde", "gaps", "experiment")
REQUIRED = object()


def digest(data):
    if isinstance(data, str):
        data = data.encode()
    return hashlib.blake2b(data, digest_size=8).hexdigest()


class Config:
    """Typed access to a parsed config with field-level error messages."""

    def __init__(self, parser, path="<config>"):
        self.parser = parser
        self.path = path

    @classmethod
    def from_text(cls, text, path="<config>"):
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
        try:
            parser.read_string(text, source=path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls(parser, path)

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text, path)

    def canonical(self):
        """Comment- and whitespace-free text used for the config digest."""
        lines = []
        for section in sorted(self.parser.sections()):
            lines.append(f"[{section}]")
            for key in sorted(self.parser[section]):
                lines.append(f"{key}={self.parser[section][key].strip()}")
        return "\n".join(lines) + "\n"

    def raw(self, section, key, default=REQUIRED):
        if self.parser.has_option(section, key):
            return self.parser.get(section, key).strip()
        if default is REQUIRED:
            raise ConfigError(f"{self.path}: missing required field '{key}' in section [{section}]")
        return default

    def _typed(self, section, key, default, kind, convert):
        raw = self.raw(section, key, default)
        if raw is default and default is not REQUIRED:
            return default
        try:
            return convert(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                f"{self.path}: [{section}] {key} = {raw!r} is not a valid {kind}"
            ) from exc

    def float(self, section, key, default=REQUIRED):
        return self._typed(section, key, default, "number", float)

    def int(self, section, key, default=REQUIRED):
        def conv(s):
            v = float(s)
            if v != int(v):
                raise ValueError(s)
            return int(v)
        return self._typed(section, key, default, "integer", conv)

    def str(self, section, key, default=REQUIRED):
        return self.raw(section, key, default)

    def floats(self, section, key, default=REQUIRED):
        return self._typed(section, key, default, "list of numbers",
                           lambda s: tuple(float(x) for x in s.replace(",", " ").split()))

    def bool(self, section, key, default=REQUIRED):
        def conv(s):
            t = s.lower()
            if t in ("1", "true", "yes", "on"):
                return True
            if t in ("0", "false", "no", "off"):
                return False
            raise ValueError(s)
        return self._typed(section, key, default, "boolean", conv)


def model_base(cfg):
    kind = cfg.str("model", "base", "path")
    if kind == "path":
        return ("path", cfg.int("model", "m"))
    if kind == "product":
        return ("product", tuple(int(x) for x in cfg.floats("model", "factors")))
    if kind == "matrix":
        text = cfg.str("model", "matrix")
        try:
            rows = [[float(x) for x in row.replace(",", " ").split()] for row in text.split(";")]
            return ("matrix", np.array(rows))
        except ValueError as exc:
            raise ConfigError(f"{cfg.path}: [model] matrix = {text!r} is not a matrix") from exc
    raise ConfigError(f"{cfg.path}: [model] base = {kind!r}; expected path, product or matrix")


def noise_spec(cfg, seed):
    return NoiseSpec(cfg.str("noise", "distribution", "gaussian"),
                     cfg.float("noise", "amplitude", 1.0), seed)


# ---------------------------------------------------------------- output


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.16e}"
    if v is None:
        return ""
    return str(v)


def flatten(row):
    out = {}
    for key, value in row.items():
        if isinstance(value, (complex, np.complexfloating)):
            out[f"{key}_re"] = float(np.real(value))
            out[f"{key}_im"] = float(np.imag(value))
        elif isinstance(value, (tuple, list)):
            out[key] = " ".join(fmt(x) for x in value)
        else:
            out[key] = value
    return out


class Writer:
    """Writes CSV files into ``out`` with the run digest as a comment header."""

    def __init__(self, out, command, run_digest):
        self.out = out
        self.command = command
        self.run_digest = run_digest
        self.files = []
        os.makedirs(out, exist_ok=True)

    def table(self, name, rows, columns=None):
        rows = [flatten(r) for r in rows]
        if columns is None:
            columns = []
            for r in rows:
                columns.extend(k for k in r if k not in columns)
        path = os.path.join(self.out, name)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# q1dlab {self.command} run={self.run_digest}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([fmt(r.get(c)) for c in columns])
        self.files.append(name)
        return path

    def manifest(self, config_digest, seed, started, finished):
        lines = [
            f"command={self.command}",
            f"config_digest={config_digest}",
            f"master_seed={seed}",
            f"version={__version__}",
            f"run_digest={self.run_digest}",
            f"started={started}",
            f"finished={finished}",
        ]
        for name in self.files:
            with open(os.path.join(self.out, name), "rb") as fh:
                lines.append(f"output={name} {digest(fh.read())}")
        with open(os.path.join(self.out, "manifest.txt"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


# --------------------------------------------------------------- commands


def _frame(cfg):
    G = base_graph(model_base(cfg))
    r = cfg.float("model", "r")
    return G, r, build_frame(cfg.float("model", "lambda_star"), scale(G, r))


def cmd_spectrum(cfg, seed, threads, w):
    G, r, frame = _frame(cfg)
    n = cfg.int("model", "n")
    sigma = cfg.float("model", "sigma", 0.0)
    lam = frame.lambda_star
    half = cfg.float("spectrum", "halfwidth", 1.5)
    lo = cfg.float("spectrum", "window_lo", lam - half)
    hi = cfg.float("spectrum", "window_hi", lam + half)
    noise = noise_spec(cfg, seed)
    V = noise_slices(noise, G.dim, n, sigma / np.sqrt(n))
    M = assemble_box(G, r, n, noise, sigma / np.sqrt(n))
    direct = direct_spectrum(M).within(lo, hi)
    transfer = transfer_spectrum(frame, V, (lo, hi), expected_count=len(direct))
    w.table("spectrum_direct.csv", [{"index": i + 1, "eigenvalue": x} for i, x in enumerate(direct.values)])
    w.table("spectrum_transfer.csv", [{"index": i + 1, "eigenvalue": x} for i, x in enumerate(transfer.values)])
    same = len(direct) == len(transfer)
    err = float(np.abs(direct.values - transfer.values).max()) if same and len(direct) else (0.0 if same else float("inf"))
    w.table("comparison.csv", [{"count_direct": len(direct), "count_transfer": len(transfer),
                                "counts_equal": same, "max_pairing_error": err,
                                "window_lo": lo, "window_hi": hi}])


def cmd_noise_cov(cfg, seed, threads, w):
    _, _, frame = _frame(cfg)
    n = cfg.int("model", "n")
    trials = cfg.int("noise-cov", "trials")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = covariance_experiment(frame, n, trials, noise_spec(cfg, seed), threads=threads)
    rows = [{"kind": r.kind, "i": r.first[0], "j": r.first[1], "i2": r.second[0], "j2": r.second[1],
             "empirical": r.empirical, "theoretical": r.theoretical,
             "standard_error": r.standard_error, "deviation_se": r.deviation,
             "n_steps": r.n_steps, "n_trials": r.n_trials} for r in report.rows]
    w.table("covariance.csv", rows)
    verdict = report.verdict
    w.table("summary.csv", [{"chaoticity": report.chaoticity, "warning": report.warning,
                             "verdict": "none" if verdict is None else verdict,
                             "max_deviation_se": max(r.deviation for r in report.rows)}])


def cmd_chaoticity(cfg, seed, threads, w):
    if cfg.parser.has_option("chaoticity", "angles"):
        angles = AngleSet(cfg.floats("chaoticity", "angles"))
    else:
        G = base_graph(model_base(cfg))
        angles = critical_angles(cfg.float("model", "lambda_star"), cfg.float("model", "r"),
                                 diagonalize(G).d)
    value = chaoticity(angles)
    w.table("angles.csv", [{"index": i + 1, "angle": a} for i, a in enumerate(angles.angles)])
    w.table("chaoticity.csv", [{"m": len(angles), "chaoticity": value}])


def _r_grid(cfg):
    if cfg.parser.has_option("search", "r_grid"):
        return cfg.floats("search", "r_grid")
    lo = cfg.float("search", "r_min", 0.3)
    hi = cfg.float("search", "r_max", 1.0)
    count = cfg.int("search", "r_count", 71)
    return tuple(np.linspace(lo, hi, count))


def cmd_search(cfg, seed, threads, w):
    G = base_graph(model_base(cfg))
    result = search_parameters(
        cfg.float("model", "lambda_star"), G, _r_grid(cfg),
        n_max=cfg.int("search", "n_max", 1_000_000),
        defect_tol=cfg.float("search", "defect_tol", 0.05),
        cha_min=cfg.float("search", "cha_min", 0.01),
        threads=threads,
    )
    w.table("candidates.csv", [{"rank": i + 1, "r": c.r, "n": c.n, "defect": c.defect, "cha": c.cha,
                                "n_times_cha": c.growth, "phase_defect": c.phase_defect}
                               for i, c in enumerate(result)],
            columns=["rank", "r", "n", "defect", "cha", "n_times_cha", "phase_defect"])
    cols = ["r", "status", "cha", "n", "defect"]
    w.table("diagnostics.csv", result.diagnostics, columns=cols)


def cmd_sde(cfg, seed, threads, w):
    G, r, frame = _frame(cfg)
    gram = overlap_gram(Diagonalization(frame.O, frame.d))
    lam = cfg.float("sde", "lambda", 1.0)
    sigma = cfg.float("model", "sigma", 0.5)
    steps = cfg.int("sde", "steps", 2000)
    paths = cfg.int("sde", "paths", 1000)
    s = frame.S_half
    exact = drift_solution(s, lam)
    path = integrate(s, gram, lam, 0.0, cfg.int("sde", "closed_form_steps", 10_000), rng_for(seed, 0))
    w.table("closed_form.csv", [{"steps": len(path.times) - 1,
                                 "max_error": float(np.abs(path.Y[-1] - exact).max())}])
    Y = integrate_paths(s, gram, lam, sigma, steps, paths, mix64(seed, 1), threads=threads)[0]
    mean = Y.mean(axis=0)
    se = np.hypot(Y.real.std(axis=0, ddof=1), Y.imag.std(axis=0, ddof=1)) / np.sqrt(paths)
    m2 = 2 * frame.m
    w.table("mean_Y.csv", [{"i": i + 1, "j": j + 1, "empirical": complex(mean[i, j]),
                            "theoretical": complex(exact[i, j]), "standard_error": float(se[i, j])}
                           for i in range(m2) for j in range(m2)])
    samples = cfg.int("sde", "limit_samples", 0)
    if samples:
        ev = np.linalg.eigvalsh(limit_matrices(s, gram, rng_for(seed, 2), samples,
                                               cfg.str("sde", "part", "real")))
        w.table("limit_eigenvalues.csv", [{"sample": k + 1, **{f"e{j + 1}": ev[k, j] for j in range(frame.m)}}
                                          for k in range(samples)])
    trials = cfg.int("sde", "discrete_trials", 0)
    if trials:
        report = discrete_vs_sde_experiment(frame, cfg.int("model", "n"), lam, sigma, trials,
                                            seed=mix64(seed, 3), steps=steps, threads=threads,
                                            noise=noise_spec(cfg, mix64(seed, 4)))
        w.table("moments.csv", [{"i": r_.entry[0], "j": r_.entry[1], "moment": r_.moment,
                                 "discrete": r_.discrete, "continuum": r_.continuum,
                                 "joint_se": r_.joint_se, "deviation_se": r_.deviation}
                                for r_ in report.rows])


def cmd_gaps(cfg, seed, threads, w):
    n = cfg.int("gaps", "n", 300)
    samples = cfg.int("gaps", "samples", 200)
    center = cfg.float("gaps", "center", 0.0)
    half = cfg.float("gaps", "halfwidth", 0.2)
    goe = ensemble_spacings(sample_goe, n, samples, rng_for(seed, 0), center, half)
    mod = ensemble_spacings(sample_modified_goe, n, samples, rng_for(seed, 1), center, half)
    w.table("spacings.csv", [{"ensemble": "goe", "spacing": x} for x in goe.spacings]
            + [{"ensemble": "modified-goe", "spacing": x} for x in mod.spacings])
    w.table("ks.csv", [
        {"comparison": "goe_vs_modified-goe", "distance": ks_distance(goe, mod)},
        {"comparison": "goe_vs_wigner", "distance": wigner_surmise_distance(goe)},
        {"comparison": "modified-goe_vs_wigner", "distance": wigner_surmise_distance(mod)},
        {"comparison": "goe_mean_spacing", "distance": goe.mean},
        {"comparison": "modified-goe_mean_spacing", "distance": mod.mean},
    ])


def _report_files(report, w):
    w.table("config.csv", [{"key": k, "value": repr(v)} for k, v in sorted(report.config.items())])
    w.table("diagnostics.csv", [{"key": k, "value": v} for k, v in sorted(report.diagnostics.items())],
            columns=["key", "value"])
    for name in sorted(report.tables):
        w.table(f"{name}.csv", report.tables[name])


def cmd_experiment(cfg, seed, threads, w):
    kind = cfg.str("experiment", "kind", "transition")
    if kind == "transition":
        config = ExperimentConfig(
            base=model_base(cfg), r=cfg.float("model", "r"),
            lambda_star=cfg.float("model", "lambda_star"), n=cfg.int("model", "n"),
            sigmas=cfg.floats("experiment", "sigmas", (0.0, 0.1, 0.5)),
            noise=noise_spec(cfg, 0), window=cfg.float("experiment", "window", 6.0),
            grid_points=cfg.int("experiment", "grid_points", 256),
            trials=cfg.int("experiment", "trials", 20),
            sde_samples=cfg.int("experiment", "sde_samples", 20),
            sde_steps=cfg.int("experiment", "sde_steps", 500),
            master_seed=seed, threads=threads,
        )
        _report_files(transition_experiment(config), w)
    elif kind == "sine1":
        budgets = {"trials": cfg.int("experiment", "trials", 200),
                   "n_max": cfg.int("experiment", "n_max", 20_000),
                   "limit_samples": cfg.int("experiment", "limit_samples", 2000),
                   "goe_samples": cfg.int("experiment", "goe_samples", 2000),
                   "seed": seed, "threads": threads}
        if cfg.parser.has_option("experiment", "r_grid"):
            budgets["r_grid"] = cfg.floats("experiment", "r_grid")
        m_list = [int(x) for x in cfg.floats("experiment", "m_list", (1, 2, 3))]
        _report_files(sine1_pipeline(cfg.float("model", "lambda_star"), m_list, budgets), w)
    elif kind == "gram":
        factors = [int(x) for x in cfg.floats("experiment", "factors")]
        res = higher_dim_gram(factors)
        rows = []
        for a, ia in enumerate(res.multi_indices):
            for b, ib in enumerate(res.multi_indices):
                rows.append({"i": ia, "j": ib, "brute_force": res.gram[a, b],
                             "formula": res.formula[a, b], "flagged": (ia, ib) in res.flags})
        w.table("gram.csv", rows)
    else:
        raise ConfigError(f"{cfg.path}: [experiment] kind = {kind!r}; expected transition, sine1 or gram")


HANDLERS = {
    "spectrum": cmd_spectrum,
    "noise-cov": cmd_noise_cov,
    "chaoticity": cmd_chaoticity,
    "search": cmd_search,
    "sde": cmd_sde,
    "gaps": cmd_gaps,
    "experiment": cmd_experiment,
}


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def run(command, cfg, seed=None, out="out", threads=None):
    """Execute one command; returns the list of written files."""
    if seed is None:
        seed = cfg.int("run", "seed", 0)
    if threads is None:
        threads = cfg.int("run", "threads", default_threads())
    config_digest = digest(cfg.canonical())
    run_digest = digest(f"{command}\n{config_digest}\n{seed}\n{__version__}\n")
    w = Writer(out, command, run_digest)
    started = _now()
    HANDLERS[command](cfg, int(seed), threads, w)
    w.manifest(config_digest, seed, started, _now())
    return w.files


def build_parser():
    p = argparse.ArgumentParser(prog="q1dlab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="INI-style configuration file")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides [run] seed)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $Q1DLAB_THREADS or 1); never changes results")
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        cfg = Config.from_file(args.config)
        files = run(args.command, cfg, args.seed, args.out, args.threads)
    except Q1dError as exc:
        print(f"q1dlab {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    for name in files:
        print(os.path.join(args.out, name))
    return 0


if __name__ == "__main__":
    sys.exit(main())
