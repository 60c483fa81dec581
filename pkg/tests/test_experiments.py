import itertools

import numpy as np
import pytest

from q1dlab.errors import GuardError
from q1dlab.experiments import (
    ExperimentConfig, base_graph, guard_diagnostics, higher_dim_gram, histogram_tv,
    product_eigensystem, sigma_schedule, sine1_pipeline, transition_experiment,
)

from conftest import brute_gram


def coincident(i, j, m):
    """1-based indices that hit a reflection or center entry of the path Gram."""
    return i + j == m + 1


# product Gram

def test_single_factor_is_path_gram():
    for m in (1, 2, 5):
        assert np.allclose(higher_dim_gram([m]).gram, brute_gram(m), atol=1e-14)


def test_two_by_two_corner_pair():
    pg = higher_dim_gram([2, 2])
    a, b = pg.multi_indices.index((1, 1)), pg.multi_indices.index((2, 2))
    assert pg.formula[a, b] == pytest.approx(1 / 9, abs=1e-15)
    assert pg.gram[a, b] == pytest.approx(brute_gram(2)[0, 1] ** 2, abs=1e-14)
    assert ((1, 1), (2, 2)) in pg.flags
    assert not pg.agree


@pytest.mark.parametrize("ms", [(2, 3), (3, 3), (1, 2, 2)])
def test_diagonal_formula(ms):
    pg = higher_dim_gram(ms)
    expected = 1.5 ** len(ms) / np.prod(np.array(ms) + 1.0)
    assert np.allclose(np.diag(pg.formula), expected, atol=1e-15)


@pytest.mark.parametrize("ms", list(itertools.product([1, 2, 3], repeat=2)))
def test_brute_force_factorizes_and_flags(ms):
    pg = higher_dim_gram(ms)
    flagged = set(pg.flags)
    for a, ia in enumerate(pg.multi_indices):
        for b, ib in enumerate(pg.multi_indices):
            oracle = np.prod([brute_gram(m)[x - 1, y - 1] for m, x, y in zip(ms, ia, ib)])
            assert abs(pg.gram[a, b] - oracle) < 1e-14
            special = any(coincident(x, y, m) for m, x, y in zip(ms, ia, ib))
            if not special:
                assert abs(pg.gram[a, b] - pg.formula[a, b]) < 1e-12
                assert (ia, ib) not in flagged


def test_product_eigensystem_diagonalizes_product_graph():
    ms = (2, 3)
    es = product_eigensystem(ms)
    G = base_graph(("product", ms)).entries
    assert np.allclose(es.O @ G @ es.O.T, np.diag(es.d), atol=1e-12)


def test_gram_guard():
    with pytest.raises(GuardError):
        higher_dim_gram([])


# transition

SMALL = ExperimentConfig(base=("path", 2), r=0.7, lambda_star=0.3, n=60, sigmas=(0.0, 0.5),
                         trials=3, sde_samples=2, sde_steps=100, grid_points=128, window=6.0)


@pytest.fixture(scope="module")
def small_report():
    return transition_experiment(SMALL)


def test_zero_noise_rung_is_kronecker_lattice(small_report):
    row = small_report.tables["rungs"][0]
    assert row["sigma"] == 0.0
    assert row["count_mismatches"] == 0
    assert row["kronecker_error"] < 1e-5


def test_report_embeds_config_and_guards(small_report):
    assert small_report.config["n"] == 60 and small_report.config["master_seed"] == 0
    for key in ("chaoticity", "defect", "strange_condition", "band_margin", "n_times_cha"):
        assert key in small_report.diagnostics
    noisy = small_report.tables["rungs"][1]
    assert {"ks_discrete_sde", "ks_discrete_limit", "tv_to_previous"} <= set(noisy)
    assert {p["source"] for p in small_report.tables["points"]} == {"discrete", "sde"}


def test_transition_reproducible(small_report):
    from dataclasses import replace
    again = transition_experiment(replace(SMALL, threads=3))
    assert repr(again.tables) == repr(small_report.tables)
    assert again.diagnostics == small_report.diagnostics


def test_resonant_config_refused():
    with pytest.raises(GuardError):
        transition_experiment(ExperimentConfig(base=("path", 1), lambda_star=0.0, trials=1))


def test_zero_sigma_continuity():
    cfg = ExperimentConfig(base=("path", 2), r=0.7, lambda_star=0.3, n=60,
                           sigmas=(0.0, 0.01, 0.5), trials=6, sde_samples=1, sde_steps=50,
                           grid_points=128)
    rows = transition_experiment(cfg).tables["rungs"]
    assert rows[1]["tv_to_previous"] < rows[2]["tv_to_previous"]


@pytest.mark.slow
def test_small_sigma_matches_limit_matrix():
    # (r, n) as returned by search_parameters for path m=3 at lambda_star=0.3
    cfg = ExperimentConfig(base=("path", 3), r=0.74, lambda_star=0.3, n=3087, sigmas=(0.1,),
                           trials=200, sde_samples=2, grid_points=64)
    row = transition_experiment(cfg).tables["rungs"][0]
    assert row["count_mismatches"] == 0
    assert row["ks_discrete_limit"] < 0.1


def test_guard_diagnostics_values():
    frame, diag = guard_diagnostics(SMALL)
    assert diag["m"] == 2 and diag["chaotic"]
    assert diag["band_margin"] == pytest.approx(float(frame.band_margins().min()))


def test_histogram_tv():
    a = np.array([0.5, 1.0, 1.5])
    assert histogram_tv(a, a) == 0
    assert histogram_tv(np.array([0.1]), np.array([3.9])) == 1


# sine1 pipeline

def test_sigma_schedule():
    assert sigma_schedule(0.01, 100, 0.1) == pytest.approx(0.1 ** 0.5 * 1.0)
    assert sigma_schedule(4.0, 100, 0.1) == 1.0
    assert sigma_schedule(0.0, 10**12, 1.0) == 1e-3


def test_single_site_is_insufficient():
    rep = sine1_pipeline(0.3, [1], {"trials": 2})
    assert rep.tables["rungs"] == [{"m": 1, "status": "insufficient m"}]


def test_ratio_condition_reported():
    rep = sine1_pipeline(0.0, [2], {"trials": 2})
    assert rep.tables["rungs"][0]["status"] == "ratio condition fails"


def test_search_failure_reported():
    rep = sine1_pipeline(0.3, [2], {"n_max": 3, "r_grid": (0.5, 0.7), "trials": 2})
    status = rep.tables["rungs"][0]["status"]
    assert status.startswith("search failed") and "defect" in status


@pytest.fixture(scope="module")
def sine1_m3():
    return sine1_pipeline(0.3, [3], {"r_grid": tuple(np.round(np.linspace(0.3, 1.0, 36), 10)),
                                     "trials": 200, "n_max": 20_000})


@pytest.mark.slow
def test_sine1_m3_limit_agreement(sine1_m3):
    row = sine1_m3.tables["rungs"][0]
    assert row["status"] == "ok"
    assert row["ks_discrete_limit"] < 0.15
    assert {"n_times_cha", "defect_ratio", "sigma"} <= set(row)


@pytest.mark.slow
def test_sine1_candidates_sorted(sine1_m3):
    defects = [c["defect"] for c in sine1_m3.tables["candidates"]]
    assert defects == sorted(defects) and defects
    assert all(c["n_times_cha"] == pytest.approx(c["n"] * c["cha"]) for c in sine1_m3.tables["candidates"])
