import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.special import ndtr

from dta_sa.errors import EmptySelection, InputError, UnknownScenario
from dta_sa.scenarios import SCENARIO_TABLE, all_scenarios, get_scenario, load_scenario_file
from dta_sa.simulation import (
    METHODS,
    apply_selection,
    calibrate_alpha,
    generate_population,
    mean_selection_probability,
    misspecified_c1,
    replication_streams,
    run_replication,
    run_study,
    study_frame,
    summarize_method,
    track_operating_points,
)
from dta_sa.studies import StudySummary


def test_catalog_has_every_variant():
    scenarios = all_scenarios()
    assert len(scenarios) == 36
    for s in scenarios:
        assert s.tau12 == pytest.approx(s.rho * s.tau1 * s.tau2, abs=1e-12)
        assert s.beta == 0.5
        assert s.S == 200


def test_small_heterogeneity_scenarios():
    s = get_scenario(9, "se")
    assert s.tau1 == pytest.approx(math.sqrt(0.5))
    assert s.contrast.c1 == 1.0
    assert s.alpha == -0.698


def test_unknown_scenario():
    with pytest.raises(UnknownScenario, match="catalog"):
        get_scenario(13)
    with pytest.raises(UnknownScenario):
        get_scenario(1, "npv")


def test_inconsistent_covariance_rejected():
    with pytest.raises(InputError):
        replace(get_scenario(1), tau12=0.1)


def test_scenario_file(tmp_path):
    path = tmp_path / "custom.toml"
    path.write_text('id = 99\nmu1 = 1.386\nmu2 = 1.386\ntau1 = 1.0\ntau2 = 2.0\nrho = -0.3\nbeta = 0.5\nalpha = -0.766\ncontrast = "dor"\nS = 50\n')
    scenario = load_scenario_file(path)
    assert scenario.S == 50
    assert scenario.tau12 == pytest.approx(-0.6)
    assert scenario.sauc_true == pytest.approx(0.828, abs=2e-3)


def test_scenario_file_missing_field(tmp_path):
    path = tmp_path / "custom.json"
    path.write_text('{"mu1": 0.0}')
    with pytest.raises(InputError, match="missing field"):
        load_scenario_file(path)


def test_population_is_deterministic():
    scenario = get_scenario(3).with_size(25)
    first = generate_population(scenario, seed=42)
    second = generate_population(scenario, seed=42)
    assert first == second
    assert len(first) == 25
    assert first != generate_population(scenario, seed=43)


def test_random_selection_population():
    scenario = replace(get_scenario(5), beta=0.0).with_size(40)
    probabilities = [p for _, p in generate_population(scenario, seed=1)]
    np.testing.assert_allclose(probabilities, ndtr(scenario.alpha))


def test_population_variances_positive():
    population = generate_population(get_scenario(1).with_size(500), seed=9)
    assert all(s.s1_sq > 0 and s.s2_sq > 0 for s, _ in population)


def _flat_population(n, p):
    return [(StudySummary(0.0, 0.0, 1.0, 1.0, id=str(i)), p) for i in range(n)]


def test_selection_keeps_everything_at_probability_one():
    population = _flat_population(30, 1.0)
    selected, p_hat = apply_selection(population, seed=1)
    assert len(selected) == 30
    assert p_hat == 1.0


def test_selection_concentration():
    selected, p_hat = apply_selection(_flat_population(10_000, 0.5), seed=4)
    assert abs(len(selected) - 5000) <= 150
    assert p_hat == 0.5


def test_empty_selection():
    with pytest.raises(EmptySelection):
        apply_selection(_flat_population(5, 0.0), seed=1)


def test_scenario_1_selects_about_seventy_percent():
    counts = []
    for seed in range(40):
        population = generate_population(get_scenario(1).with_size(50), seed=seed)
        selected, _ = apply_selection(population, seed=1000 + seed)
        counts.append(len(selected))
    assert np.mean(counts) == pytest.approx(35, abs=3)


def test_replication_streams_are_keyed():
    a_pop, a_sel = replication_streams(1, 3, 7)
    b_pop, b_sel = replication_streams(1, 3, 7)
    assert a_pop.random() == b_pop.random()
    assert a_sel.random() == b_sel.random()
    c_pop, _ = replication_streams(1, 3, 8)
    d_pop, _ = replication_streams(1, 3, 7)
    assert c_pop.random() != d_pop.random()


def test_misspecified_contrast_mapping():
    assert misspecified_c1(get_scenario(1, "dor")) == 1.0
    assert misspecified_c1(get_scenario(1, "se")) == 0.0
    assert misspecified_c1(get_scenario(1, "sp")) == 1.0


def test_summary_counts_failures():
    summary = summarize_method(get_scenario(3), "reitsma_o", [0.8, math.nan, 0.9, 0.85])
    assert summary.convergence_rate == pytest.approx(75.0)
    assert summary.median == pytest.approx(0.85)
    assert summary.label == "Reitsma_O"


def test_replication_reports_every_method():
    results = run_replication(get_scenario(3).with_size(60), 0, METHODS, base_seed=5)
    assert set(results) == set(METHODS)
    assert math.isfinite(results["reitsma_p"])
    assert math.isfinite(results["reitsma_o"])


def test_study_is_deterministic_across_workers():
    scenario = get_scenario(3).with_size(40)
    methods = ["reitsma_o", "reitsma_p"]
    serial = study_frame(run_study(scenario, reps=4, methods=methods, base_seed=1, workers=1))
    again = study_frame(run_study(scenario, reps=4, methods=methods, base_seed=1, workers=1))
    parallel = study_frame(run_study(scenario, reps=4, methods=methods, base_seed=1, workers=2))
    assert serial.equals(again)
    assert serial.equals(parallel)
    assert list(serial.columns) == ["scenario", "method", "S", "median", "q1", "q3", "cr"]
    assert list(serial.method) == methods


def test_study_rejects_unknown_method():
    with pytest.raises(InputError):
        run_study(get_scenario(3), reps=1, methods=["copas"])


def test_track_operating_points():
    studies, trajectory = track_operating_points(get_scenario(3).with_size(80), p_grid=(1.0, 0.8), seed=2)
    assert len(studies) == 80
    assert studies.selected.dtype == bool
    assert 0 < studies.selected.sum() < 80
    assert list(trajectory.p) == [1.0, 0.8]


@pytest.mark.parametrize("target", [0.3, 0.5, 0.9])
def test_calibrated_alpha_hits_target_selection(target):
    scenario = get_scenario(3)
    alpha = calibrate_alpha(scenario, target, n_draws=50_000, seed=4)
    assert alpha < scenario.alpha if target < 0.7 else alpha > scenario.alpha
    assert mean_selection_probability(scenario.with_alpha(alpha), n_draws=50_000, seed=4) == pytest.approx(target, abs=1e-8)
    assert mean_selection_probability(scenario.with_alpha(alpha), n_draws=100_000, seed=9) == pytest.approx(target, abs=0.01)


def test_calibrated_alpha_without_slope_is_normal_quantile():
    scenario = replace(get_scenario(3), beta=0.0)
    assert calibrate_alpha(scenario, 0.5) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("target", [0.0, 1.0, 1.5])
def test_calibrated_alpha_rejects_invalid_target(target):
    with pytest.raises(InputError):
        calibrate_alpha(get_scenario(3), target)


def test_track_operating_points_at_half_publication():
    studies, trajectory = track_operating_points(get_scenario(3).with_size(50), p_grid=(1.0, 0.5), seed=2, select_p=0.5)
    assert len(studies) == 50
    assert studies.p_select.mean() == pytest.approx(0.5, abs=0.1)
    assert list(trajectory.p) == [1.0, 0.5]


@pytest.mark.slow
def test_scenario_3_reproduces_published_medians():
    summaries = {s.method: s for s in run_study(get_scenario(3), reps=200, base_seed=1, workers=4)}
    assert abs(summaries["reitsma_p"].median - 0.828) <= 0.01
    assert 0.862 <= summaries["reitsma_o"].median <= 0.882
    assert 0.814 <= summaries["proposed_correct"].median <= 0.844


@pytest.mark.slow
def test_sensitivity_contrast_on_scenario_3_keeps_bias():
    scenario = get_scenario(3)
    assert misspecified_c1(scenario) == 1.0
    (summary,) = run_study(scenario, reps=200, methods=["proposed_misspecified"], base_seed=1, workers=4)
    assert summary.median == pytest.approx(0.863, abs=0.01)


def test_catalog_ids():
    assert sorted(SCENARIO_TABLE) == list(range(1, 13))
