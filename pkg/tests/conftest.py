import numpy as np
import pandas as pd
import pytest
from scipy.special import expit

from dta_sa.scenarios import get_scenario
from dta_sa.simulation import _select_mask, _subset, population_arrays, replication_streams
from dta_sa.studies import DiagnosticStudy, StudySummary, summarize_all


def make_studies(n=33, seed=7):
    """2x2 tables shaped like a typical diagnostic meta-analysis."""
    rng = np.random.Generator(np.random.Philox(seed))
    studies = []
    for i in range(n):
        n_diseased = int(rng.integers(20, 120))
        n_healthy = int(rng.integers(40, 200))
        se = expit(rng.normal(1.4, 0.6))
        sp = expit(rng.normal(1.8, 0.7))
        tp = int(rng.binomial(n_diseased, se))
        tn = int(rng.binomial(n_healthy, sp))
        studies.append(DiagnosticStudy(f"s{i + 1}", tp, n_diseased - tp, tn, n_healthy - tn))
    return studies


@pytest.fixture
def studies():
    return make_studies()


@pytest.fixture
def summaries(studies):
    return summarize_all(studies)


@pytest.fixture
def studies_csv(tmp_path, studies):
    path = tmp_path / "studies.csv"
    pd.DataFrame(
        {
            "id": [s.id for s in studies],
            "tp": [int(s.tp) for s in studies],
            "fn": [int(s.fn_) for s in studies],
            "tn": [int(s.tn) for s in studies],
            "fp": [int(s.fp) for s in studies],
        }
    ).to_csv(path, index=False)
    return path


@pytest.fixture
def one_study():
    return [StudySummary(0.0, 0.0, 1.0, 1.0, id="one")]


@pytest.fixture
def scenario3():
    return get_scenario(3, "dor")


@pytest.fixture
def selected_scenario3(scenario3):
    """Studies published from one Scenario 3 population (S=200)."""
    population_rng, selection_rng = replication_streams(11, scenario3.id, 0)
    arrays, p_select = population_arrays(scenario3, population_rng)
    mask = _select_mask(p_select, selection_rng)
    return _subset(arrays, mask), float(p_select.mean())
