"""Bivariate meta-analysis of diagnostic accuracy with a sensitivity analysis for selective publication."""

from dta_sa.likelihood import SaConfig, SaFit, conditional_loglik, fit_sa, sa_grid
from dta_sa.reitsma import BivariateParams, fit_reitsma, reitsma_loglik, sauc, sroc
from dta_sa.studies import DiagnosticStudy, StudySummary, read_studies, summarize

__all__ = [
    "BivariateParams",
    "DiagnosticStudy",
    "SaConfig",
    "SaFit",
    "StudySummary",
    "conditional_loglik",
    "fit_reitsma",
    "fit_sa",
    "read_studies",
    "reitsma_loglik",
    "sa_grid",
    "sauc",
    "sroc",
    "summarize",
]
