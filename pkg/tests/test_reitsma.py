import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import expit

from dta_sa.errors import DomainError, InputError
from dta_sa.inference import numerical_gradient
from dta_sa.optimize import maximize_box, pinned_mask
from dta_sa.reitsma import (
    SAUC_HALF_WIDTH,
    BivariateParams,
    _sroc_line,
    fit_reitsma,
    initial_params,
    reitsma_loglik,
    sauc,
    sroc,
    sroc_curve,
    sroc_points,
)
from dta_sa.scenarios import SCENARIO_TABLE, get_scenario
from dta_sa.simulation import population_arrays, replication_streams
from dta_sa.studies import StudySummary, as_arrays

LOG_2PI = math.log(2 * math.pi)
UNIT = BivariateParams(0.0, 0.0, 1.0, 1.0, 0.0)


def test_loglik_single_study_at_mean(one_study):
    assert reitsma_loglik(UNIT, one_study) == pytest.approx(-math.log(2) - LOG_2PI, abs=1e-12)


def test_loglik_single_study_off_mean():
    data = [StudySummary(1.0, 0.0, 1.0, 1.0)]
    assert reitsma_loglik(UNIT, data) == pytest.approx(-0.25 - math.log(2) - LOG_2PI, abs=1e-12)


def test_loglik_is_additive(one_study):
    assert reitsma_loglik(UNIT, one_study * 2) == pytest.approx(2 * reitsma_loglik(UNIT, one_study), abs=1e-12)


def test_params_validation():
    with pytest.raises(InputError):
        BivariateParams(0, 0, 0.0, 1, 0)
    with pytest.raises(InputError):
        BivariateParams(0, 0, 1, 1, 1.5)


def test_sroc_flat_without_covariance():
    params = BivariateParams(0.7, 1.2, 1.0, 2.0, 0.0)
    assert np.allclose(sroc(params, [0.01, 0.3, 0.99]), expit(0.7))


def test_sroc_passes_through_summary_point():
    params = BivariateParams(1.1, 0.9, 0.8, 1.3, -0.4)
    assert sroc(params, expit(-0.9)) == pytest.approx(expit(1.1), abs=1e-12)


def test_sroc_scenario_1_at_half():
    params = get_scenario(1).biv
    assert sroc(params, 0.5) == pytest.approx(0.5647, abs=1e-4)


@pytest.mark.parametrize("fpr", [0.0, 1.0, -0.2, 1.3])
def test_sroc_domain(fpr):
    with pytest.raises(DomainError):
        sroc(UNIT, fpr)


def test_sroc_curve_frame():
    curve = sroc_curve(get_scenario(3).biv)
    assert list(curve.columns) == ["fpr", "tpr"]
    assert len(curve) == 201
    assert ((curve.tpr > 0) & (curve.tpr < 1)).all()
    assert sroc_points(UNIT, [0.5])[0].tpr == pytest.approx(0.5)


@pytest.mark.parametrize("scenario_id", sorted(SCENARIO_TABLE))
def test_sauc_matches_scenario_catalog(scenario_id):
    scenario = get_scenario(scenario_id)
    assert sauc(scenario.biv) == pytest.approx(scenario.sauc_true, abs=2e-3)


def test_sauc_flat_curve_is_half():
    assert sauc(BivariateParams(0.0, 1.3, 1.0, 2.0, 0.0)) == pytest.approx(0.5, abs=1e-12)


def test_sauc_steep_slope_stays_in_unit_interval():
    params = BivariateParams(1.0, 1.0, 3.0, 0.05, -0.99)
    value = sauc(params)
    assert 0 < value < 1


def adaptive_sauc(params):
    intercept, slope = _sroc_line(params)
    half = SAUC_HALF_WIDTH
    centre = -intercept / slope
    band = half / abs(slope)
    points = [p for p in (centre - band, centre, centre + band) if -half < p < half]
    value, _ = quad(
        lambda u: expit(intercept + slope * u) * expit(u) * expit(-u),
        -half,
        half,
        points=points,
        limit=500,
        epsabs=1e-12,
    )
    return value


@pytest.mark.parametrize("tau2", [0.01, 1e-3, 1e-6])
def test_sauc_near_step_sroc_matches_adaptive_quadrature(tau2):
    params = BivariateParams(1.0, 0.7, 3.0, tau2, -0.9)
    assert sauc(params) == pytest.approx(adaptive_sauc(params), abs=1e-6)


def test_sauc_near_step_sroc_is_area_right_of_summary_fpr():
    params = BivariateParams(1.0, 0.7, 3.0, 1e-6, -0.9)
    # SROC is ~0 left of FPR = expit(-mu2) and ~1 right of it
    assert sauc(params) == pytest.approx(expit(0.7), abs=1e-5)


@pytest.mark.parametrize("scenario_id", sorted(SCENARIO_TABLE))
def test_sauc_matches_midpoint_sum(scenario_id):
    params = get_scenario(scenario_id).biv
    n = 1_000_000
    x = (np.arange(n) + 0.5) / n
    assert sauc(params) == pytest.approx(float(np.mean(sroc(params, x))), abs=2e-6)


@pytest.mark.parametrize("rho, rising", [(-0.6, True), (-0.05, True), (0.05, False), (0.6, False)])
def test_sroc_direction_follows_covariance_sign(rho, rising):
    params = BivariateParams(1.2, 0.8, 1.1, 0.9, rho)
    steps = np.diff(sroc(params, np.linspace(0.01, 0.99, 99)))
    assert np.all(steps > 0) if rising else np.all(steps < 0)


def test_initial_params_are_inside_box(summaries):
    start = initial_params(summaries)
    assert 0.05 <= start.tau1 <= 3
    assert -0.95 <= start.rho <= 0.95


def test_fit_identical_studies_collapses_heterogeneity():
    data = [StudySummary(1.0, 1.0, 0.5, 0.5) for _ in range(10)]
    fit = fit_reitsma(data)
    assert fit.params.mu1 == pytest.approx(1.0, abs=1e-3)
    assert fit.params.mu2 == pytest.approx(1.0, abs=1e-3)
    assert fit.params.tau1 < 0.05
    assert fit.params.tau2 < 0.05


def test_fit_recovers_population_mean():
    scenario = get_scenario(3)
    population_rng, _ = replication_streams(3, scenario.id, 0)
    arrays, _ = population_arrays(scenario, population_rng)
    fit = fit_reitsma(arrays)
    assert fit.converged
    assert fit.params.mu1 == pytest.approx(1.386, abs=0.3)
    assert fit.params.mu2 == pytest.approx(1.386, abs=0.4)
    assert fit.loglik == pytest.approx(reitsma_loglik(fit.params, arrays), abs=1e-6)


def test_fit_is_a_local_maximum_in_the_means(summaries):
    fit = fit_reitsma(summaries)
    x = fit.params.as_vector()
    for i in range(2):
        for delta in (-1e-3, 1e-3):
            moved = x.copy()
            moved[i] += delta
            assert reitsma_loglik(BivariateParams.from_vector(moved), summaries) <= fit.loglik + 1e-7


def loglik_gradient(params, arrays):
    """Closed-form score of the marginal log-likelihood in (mu1, mu2, tau1, tau2, rho)."""
    t1, t2, r = params.tau1, params.tau2, params.rho
    omega_steps = [
        np.array([[2 * t1, r * t2], [r * t2, 0.0]]),
        np.array([[0.0, r * t1], [r * t1, 2 * t2]]),
        np.array([[0.0, t1 * t2], [t1 * t2, 0.0]]),
    ]
    grad = np.zeros(5)
    for y1, y2, v1, v2 in zip(arrays.y1, arrays.y2, arrays.s1_sq, arrays.s2_sq):
        inv = np.linalg.inv(np.diag([v1, v2]) + params.omega)
        e = np.array([y1 - params.mu1, y2 - params.mu2])
        w = inv @ e
        grad[:2] += w
        for k, step in enumerate(omega_steps):
            grad[2 + k] += 0.5 * w @ step @ w - 0.5 * np.trace(inv @ step)
    return grad


def test_loglik_gradient_matches_finite_differences(summaries):
    arrays = as_arrays(summaries)
    rng = np.random.Generator(np.random.Philox(31))
    for _ in range(50):
        point = np.concatenate([rng.uniform(-2, 3, 2), rng.uniform(0.2, 2.5, 2), rng.uniform(-0.9, 0.9, 1)])
        params = BivariateParams.from_vector(point)
        numeric = numerical_gradient(lambda x: reitsma_loglik(BivariateParams.from_vector(x), arrays), point)
        np.testing.assert_allclose(numeric, loglik_gradient(params, arrays), rtol=1e-5, atol=1e-5)


def test_fit_does_not_depend_on_study_order(summaries):
    reference = fit_reitsma(summaries)
    order = np.random.Generator(np.random.Philox(5)).permutation(len(summaries))
    shuffled = fit_reitsma([summaries[i] for i in order])
    assert shuffled.loglik == pytest.approx(reference.loglik, abs=1e-6)
    np.testing.assert_allclose(shuffled.params.as_vector(), reference.params.as_vector(), atol=1e-3)


def test_mean_only_optimum_agrees_with_grid_search(summaries):
    tau1, tau2, rho = 0.7, 0.9, -0.2

    arrays = as_arrays(summaries)

    def loglik(mu):
        return reitsma_loglik(BivariateParams(mu[0], mu[1], tau1, tau2, rho), arrays)

    result = maximize_box(loglik, [0.0, 0.0], [(-5, 5), (-5, 5)])

    grid = np.linspace(-5, 5, 200)
    best, best_mu = -np.inf, None
    for m1 in grid:
        for m2 in grid:
            value = loglik((m1, m2))
            if value > best:
                best, best_mu = value, (m1, m2)
    spacing = grid[1] - grid[0]
    assert abs(result.x[0] - best_mu[0]) <= spacing
    assert abs(result.x[1] - best_mu[1]) <= spacing


def test_pinned_mask_flags_bounds():
    bounds = [(-5, 5), (1e-6, 3)]
    assert pinned_mask([0.0, 1e-6], bounds).tolist() == [False, True]
