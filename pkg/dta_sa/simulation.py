"""Simulated publication process and replicated comparison of estimators."""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.optimize import brentq
from scipy.special import expit, ndtr, ndtri

from dta_sa.errors import DtaSaError, EmptySelection, InputError
from dta_sa.likelihood import SaConfig, fit_sa, operating_point_trajectory, sa_grid
from dta_sa.reitsma import fit_reitsma, sauc
from dta_sa.scenarios import MISSPECIFIED_C1, Scenario
from dta_sa.selection import t_scores
from dta_sa.studies import StudyArrays, StudySummary

logger = logging.getLogger(__name__)

METHODS = ("proposed_estimated", "proposed_correct", "proposed_misspecified", "reitsma_o", "reitsma_p")
METHOD_LABELS = {
    "proposed_estimated": "Proposed-estimated",
    "proposed_correct": "Proposed-correct",
    "proposed_misspecified": "Proposed-misspecified",
    "reitsma_o": "Reitsma_O",
    "reitsma_p": "Reitsma_P",
}
DEFAULT_REPS = 200

WITHIN_SD_MEAN = 0.5
WITHIN_SD_SD = 0.5


@dataclass(frozen=True)
class SimSummary:
    scenario_id: int
    method: str
    S: int
    median: float
    q1: float
    q3: float
    convergence_rate: float
    n_reps: int

    @property
    def label(self):
        return METHOD_LABELS.get(self.method, self.method)


def replication_streams(base_seed: int, scenario_id: int, replication: int):
    """Population and selection generators for one replication.

    Philox streams keyed by (base_seed, scenario_id, replication), so a
    replication draws the same numbers no matter which worker runs it.
    """
    seq = np.random.SeedSequence([int(base_seed) % 2**64, int(scenario_id), int(replication)])
    population_seq, selection_seq = seq.spawn(2)
    return np.random.Generator(np.random.Philox(population_seq)), np.random.Generator(np.random.Philox(selection_seq))


def _generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed) % 2**64)))


def _within_sd(rng, size):
    s = rng.normal(WITHIN_SD_MEAN, WITHIN_SD_SD, size)
    zero = s == 0
    while zero.any():
        s[zero] = rng.normal(WITHIN_SD_MEAN, WITHIN_SD_SD, int(zero.sum()))
        zero = s == 0
    return s


def population_arrays(scenario: Scenario, rng, size=None):
    """(StudyArrays, p_i) for ``size`` population studies drawn from the marginal model."""
    size = scenario.S if size is None else int(size)
    s1 = _within_sd(rng, size)
    s2 = _within_sd(rng, size)
    s1_sq, s2_sq = s1 * s1, s2 * s2

    chol = np.linalg.cholesky(scenario.biv.omega)
    between = rng.standard_normal((size, 2)) @ chol.T
    within = rng.standard_normal((size, 2))
    y1 = scenario.mu1 + between[:, 0] + s1 * within[:, 0]
    y2 = scenario.mu2 + between[:, 1] + s2 * within[:, 1]

    arrays = StudyArrays(y1, y2, s1_sq, s2_sq)
    t = t_scores(y1, y2, s1_sq, s2_sq, scenario.contrast)
    p_select = ndtr(scenario.beta * t + scenario.alpha)
    return arrays, p_select


def _population_t(scenario: Scenario, rng, size):
    arrays, _ = population_arrays(scenario, rng, size=size)
    return t_scores(arrays.y1, arrays.y2, arrays.s1_sq, arrays.s2_sq, scenario.contrast)


def generate_population(scenario: Scenario, seed) -> list:
    """S population studies as (StudySummary, p_i) pairs."""
    arrays, p_select = population_arrays(scenario, _generator(seed))
    return [
        (StudySummary(float(a), float(b), float(c), float(d), id=f"pop_{i + 1}"), float(p))
        for i, (a, b, c, d, p) in enumerate(zip(arrays.y1, arrays.y2, arrays.s1_sq, arrays.s2_sq, p_select))
    ]


def _select_mask(p_select, rng):
    return rng.random(len(p_select)) < p_select


def apply_selection(population: Sequence, seed):
    """Bernoulli thinning; p_hat is the population mean of p_i, not the realized fraction."""
    if len(population) == 0:
        raise InputError("❌ Population is empty")
    p_select = np.array([p for _, p in population], dtype=float)
    mask = _select_mask(p_select, _generator(seed))
    if not mask.any():
        raise EmptySelection("❌ No study was selected")
    selected = [summary for (summary, _), keep in zip(population, mask) if keep]
    return selected, float(p_select.mean())


def mean_selection_probability(scenario: Scenario, n_draws: int = 100_000, seed: int = 1) -> float:
    _, p_select = population_arrays(scenario, _generator(seed), size=n_draws)
    return float(p_select.mean())


def calibrate_alpha(scenario: Scenario, target_p: float, n_draws: int = 100_000, seed: int = 1) -> float:
    """alpha giving marginal selection probability ``target_p`` under the scenario's beta and contrast.

    The same population draws are reused for every candidate alpha, so the
    root is taken on a smooth monotone function.
    """
    if not 0 < target_p < 1:
        raise InputError(f"❌ Target selection probability must lie in (0, 1), got {target_p}")
    if scenario.beta == 0:
        return float(ndtri(target_p))
    t = _population_t(scenario, _generator(seed), n_draws)

    def gap(alpha):
        return float(ndtr(scenario.beta * t + alpha).mean()) - target_p

    lo, hi = -20.0, 20.0
    if gap(lo) > 0 or gap(hi) < 0:
        raise InputError(f"❌ No alpha in [{lo}, {hi}] reaches selection probability {target_p}")
    alpha = brentq(gap, lo, hi, xtol=1e-10)
    logger.info(f"✅ Scenario {scenario.id}: alpha {alpha:.4f} for selection probability {target_p}")
    return float(alpha)


def _subset(arrays: StudyArrays, mask):
    return StudyArrays(arrays.y1[mask], arrays.y2[mask], arrays.s1_sq[mask], arrays.s2_sq[mask])


def misspecified_c1(scenario: Scenario) -> float:
    if scenario.variant in MISSPECIFIED_C1:
        return MISSPECIFIED_C1[scenario.variant]
    return 1.0 if scenario.contrast.c1 < 0.99 else 0.0


def run_replication(scenario: Scenario, replication: int, methods: Sequence[str], base_seed: int) -> dict:
    """SAUC estimate per method for one replication (NaN when the fit did not converge)."""
    population_rng, selection_rng = replication_streams(base_seed, scenario.id, replication)
    arrays, p_select = population_arrays(scenario, population_rng)
    mask = _select_mask(p_select, selection_rng)
    p_hat = float(p_select.mean())
    results = {method: math.nan for method in methods}

    if "reitsma_p" in methods:
        try:
            fit = fit_reitsma(arrays)
            if fit.converged:
                results["reitsma_p"] = sauc(fit.params)
        except DtaSaError as e:
            logger.warning(f"⚠️ Replication {replication}: Reitsma_P failed: {e}")

    if not mask.any():
        logger.warning(f"⚠️ Replication {replication}: no study selected")
        return results

    selected = _subset(arrays, mask)
    try:
        reitsma_o = fit_reitsma(selected)
    except DtaSaError as e:
        logger.warning(f"⚠️ Replication {replication}: Reitsma_O failed: {e}")
        return results
    if "reitsma_o" in methods and reitsma_o.converged:
        results["reitsma_o"] = sauc(reitsma_o.params)

    configs = {
        "proposed_estimated": SaConfig(p=p_hat, contrast_mode="estimate"),
        "proposed_correct": SaConfig(p=p_hat, contrast_mode="fixed", fixed_c1=scenario.contrast.c1),
        "proposed_misspecified": SaConfig(p=p_hat, contrast_mode="fixed", fixed_c1=misspecified_c1(scenario)),
    }
    for method, config in configs.items():
        if method not in methods:
            continue
        try:
            fit = fit_sa(selected, config, reitsma_fit=reitsma_o)
        except DtaSaError as e:
            logger.warning(f"⚠️ Replication {replication}: {method} failed: {e}")
            continue
        if fit.converged and math.isfinite(fit.sauc):
            results[method] = fit.sauc
    return results


def _replication_task(args):
    scenario, replication, methods, base_seed = args
    return replication, run_replication(scenario, replication, methods, base_seed)


def summarize_method(scenario: Scenario, method: str, estimates: Sequence[float]) -> SimSummary:
    """Median and quartiles over converged replications; failures only lower the convergence rate."""
    values = np.asarray(estimates, dtype=float)
    ok = values[np.isfinite(values)]
    if len(ok):
        q1, median, q3 = np.percentile(ok, [25, 50, 75])
    else:
        q1 = median = q3 = math.nan
    return SimSummary(
        scenario_id=scenario.id,
        method=method,
        S=scenario.S,
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        convergence_rate=100.0 * len(ok) / len(values) if len(values) else 0.0,
        n_reps=len(values),
    )


def run_study(
    scenario: Scenario,
    reps: int = DEFAULT_REPS,
    methods: Sequence[str] = METHODS,
    base_seed: int = 1,
    workers: int = 1,
) -> list:
    """Replicate the publication process ``reps`` times and summarize SAUC per method."""
    if reps < 1:
        raise InputError(f"❌ reps must be >= 1, got {reps}")
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise InputError(f"❌ Unknown methods {unknown}; choose from {', '.join(METHODS)}")

    tasks = [(scenario, r, tuple(methods), base_seed) for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_replication_task, tasks, chunksize=max(1, reps // (4 * workers))))
    else:
        outcomes = [_replication_task(task) for task in tasks]
    outcomes.sort(key=lambda item: item[0])

    summaries = []
    for method in methods:
        estimates = [result[method] for _, result in outcomes]
        summary = summarize_method(scenario, method, estimates)
        logger.info(
            f"✅ Scenario {scenario.id} {summary.label}: median {summary.median:.3f} "
            f"({summary.q1:.3f}, {summary.q3:.3f}), CR {summary.convergence_rate:.1f}%"
        )
        summaries.append(summary)
    return summaries


def study_frame(summaries: Sequence[SimSummary]) -> pd.DataFrame:
    """Results table with columns scenario,method,S,median,q1,q3,cr."""
    return pd.DataFrame(
        {
            "scenario": [s.scenario_id for s in summaries],
            "method": [s.method for s in summaries],
            "S": [s.S for s in summaries],
            "median": [s.median for s in summaries],
            "q1": [s.q1 for s in summaries],
            "q3": [s.q3 for s in summaries],
            "cr": [s.convergence_rate for s in summaries],
        }
    )


def track_operating_points(
    scenario: Scenario,
    p_grid: Sequence[float] = (1.0, 0.9, 0.7, 0.5),
    seed: int = 1,
    select_p: float | None = None,
):
    """Fit one simulated meta-analysis over ``p_grid`` with the true contrast.

    With ``select_p`` the scenario's alpha is replaced by the one that makes
    the marginal selection probability equal ``select_p``.

    Returns the population studies in ROC space with a ``selected`` flag
    and the per-p summary operating points.
    """
    if select_p is not None:
        scenario = scenario.with_alpha(calibrate_alpha(scenario, select_p, seed=seed))
    population_rng, selection_rng = replication_streams(seed, scenario.id, 0)
    arrays, p_select = population_arrays(scenario, population_rng)
    mask = _select_mask(p_select, selection_rng)
    if not mask.any():
        raise EmptySelection("❌ No study was selected")

    config = SaConfig(contrast_mode="fixed", fixed_c1=scenario.contrast.c1)
    fits = sa_grid(_subset(arrays, mask), p_grid, config)

    studies = pd.DataFrame(
        {
            "fpr": 1.0 - expit(arrays.y2),
            "tpr": expit(arrays.y1),
            "p_select": p_select,
            "selected": mask,
        }
    )
    return studies, operating_point_trajectory(fits)
