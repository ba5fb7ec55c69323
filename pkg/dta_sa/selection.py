"""Probit selection on a t-type statistic of a contrast of logit sensitivity and specificity."""

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import log_ndtr, logsumexp, ndtr, ndtri

from dta_sa.errors import BracketingFailed, InputError
from dta_sa.reitsma import BivariateParams
from dta_sa.studies import StudySummary

logger = logging.getLogger(__name__)

ALPHA_BRACKET = (-50.0, 50.0)
ALPHA_BRACKET_LIMIT = 1e4
ALPHA_XTOL = 1e-13

# Phi and log Phi come from scipy.special: ndtr is built on erfc and log_ndtr
# switches to an asymptotic series in the far left tail.
norm_cdf = ndtr
log_norm_cdf = log_ndtr


@dataclass(frozen=True)
class ContrastVector:
    c1: float
    c2: float

    def __post_init__(self):
        if not (-1e-12 <= self.c1 <= 1 + 1e-12 and -1e-12 <= self.c2 <= 1 + 1e-12):
            raise InputError(f"❌ Contrast weights must lie in [0, 1], got ({self.c1}, {self.c2})")
        if abs(self.c1**2 + self.c2**2 - 1.0) > 1e-9:
            raise InputError(f"❌ Contrast vector must have unit norm, got ({self.c1}, {self.c2})")

    @classmethod
    def from_c1(cls, c1: float) -> "ContrastVector":
        c1 = float(np.clip(c1, 0.0, 1.0))
        return cls(c1, math.sqrt(max(0.0, 1.0 - c1 * c1)))

    @classmethod
    def normalized(cls, w1: float, w2: float) -> "ContrastVector":
        """Unit-norm contrast proportional to (w1, w2)."""
        norm = math.hypot(w1, w2)
        if norm == 0:
            raise InputError("❌ Contrast weights cannot both be zero")
        return cls(w1 / norm, w2 / norm)


DOR_CONTRAST = ContrastVector(math.sqrt(0.5), math.sqrt(0.5))
SENSITIVITY_CONTRAST = ContrastVector(1.0, 0.0)
SPECIFICITY_CONTRAST = ContrastVector(0.0, 1.0)


@dataclass(frozen=True)
class SelectionParams:
    contrast: ContrastVector
    beta: float
    alpha: float

    def __post_init__(self):
        if self.beta < 0:
            raise InputError(f"❌ Selection slope beta must be >= 0, got {self.beta}")


def t_scores(y1, y2, s1_sq, s2_sq, contrast: ContrastVector):
    """Vectorized t-type statistic c'y / sqrt(c' Sigma c)."""
    c1, c2 = contrast.c1, contrast.c2
    return (c1 * y1 + c2 * y2) / np.sqrt(c1 * c1 * s1_sq + c2 * c2 * s2_sq)


def t_statistic(summary: StudySummary, contrast: ContrastVector) -> float:
    return float(t_scores(summary.y1, summary.y2, summary.s1_sq, summary.s2_sq, contrast))


def select_prob_a(t, beta: float, alpha: float):
    """a(t) = Phi(beta * t + alpha)."""
    value = ndtr(beta * np.asarray(t, dtype=float) + alpha)
    return float(value) if np.ndim(value) == 0 else value


def b_argument(s1_sq, s2_sq, biv: BivariateParams, contrast: ContrastVector, beta: float, alpha: float):
    """Argument of Phi in b(Sigma)."""
    c1, c2 = contrast.c1, contrast.c2
    c_sigma_c = c1 * c1 * s1_sq + c2 * c2 * s2_sq
    c_omega_c = c1 * c1 * biv.tau1**2 + 2.0 * c1 * c2 * biv.tau12 + c2 * c2 * biv.tau2**2
    c_mu = c1 * biv.mu1 + c2 * biv.mu2
    numerator = beta * c_mu / np.sqrt(c_sigma_c) + alpha
    return numerator / np.sqrt(1.0 + beta * beta * (1.0 + c_omega_c / c_sigma_c))


def marginal_prob_b(summary_var: Tuple[float, float], biv: BivariateParams, sel: SelectionParams):
    """b(Sigma): selection probability given the within-study variances only."""
    s1_sq, s2_sq = summary_var
    value = ndtr(b_argument(np.asarray(s1_sq, dtype=float), np.asarray(s2_sq, dtype=float), biv, sel.contrast, sel.beta, sel.alpha))
    return float(value) if np.ndim(value) == 0 else value


def _split_vars(data_vars):
    arr = np.asarray(data_vars, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise InputError("❌ data_vars must be a non-empty list of (s1_sq, s2_sq) pairs")
    return arr[:, 0], arr[:, 1]


def implied_p(alpha: float, data_vars, biv: BivariateParams, contrast: ContrastVector, beta: float) -> float:
    """N / sum(1 / b(Sigma_i)) at the given alpha."""
    s1_sq, s2_sq = _split_vars(data_vars)
    z = b_argument(s1_sq, s2_sq, biv, contrast, beta, alpha)
    return float(np.exp(math.log(len(z)) - logsumexp(-log_ndtr(z))))


def solve_alpha_p(
    p: float,
    data_vars: Sequence[Tuple[float, float]],
    biv: BivariateParams,
    contrast: ContrastVector,
    beta: float,
    hint: float = None,
) -> float:
    """Selection intercept alpha_p with N / sum(1 / b(Sigma_i; alpha_p)) = p.

    Returns ``math.inf`` for p = 1, which callers treat as a = b = 1.
    ``hint`` (e.g. the previous solution inside an optimizer) only seeds
    the bracket; the root is unique because b is increasing in alpha.
    """
    if not 0 < p <= 1:
        raise InputError(f"❌ Marginal selection probability must lie in (0, 1], got {p}")
    if p == 1:
        return math.inf
    if beta == 0:
        return float(ndtri(p))

    s1_sq, s2_sq = _split_vars(data_vars)
    log_target = math.log(len(s1_sq)) - math.log(p)

    def excess(alpha):
        z = b_argument(s1_sq, s2_sq, biv, contrast, beta, alpha)
        # log N - log sum 1/b - log p, increasing in alpha
        return log_target - logsumexp(-log_ndtr(z))

    if hint is not None and math.isfinite(hint):
        lo, hi = hint - 1.0, hint + 1.0
    else:
        lo, hi = ALPHA_BRACKET
    f_lo, f_hi = excess(lo), excess(hi)
    while f_lo > 0 or f_hi < 0:
        width = hi - lo
        if f_lo > 0:
            lo -= width
            f_lo = excess(lo)
        if f_hi < 0:
            hi += width
            f_hi = excess(hi)
        if lo < -ALPHA_BRACKET_LIMIT or hi > ALPHA_BRACKET_LIMIT:
            raise BracketingFailed(f"❌ No root for alpha_p in [{lo:.1f}, {hi:.1f}] with p={p}, beta={beta}")

    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi
    return float(brentq(excess, lo, hi, xtol=ALPHA_XTOL, maxiter=500))
