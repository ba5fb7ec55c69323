"""Bivariate normal (Reitsma) model, SROC curve and SAUC."""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy.special import expit, logit

from dta_sa.errors import DomainError, InputError, SingularCovariance
from dta_sa.optimize import maximize_box, pinned_mask
from dta_sa.studies import StudyData, as_arrays

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)

MU_BOUNDS = (-5.0, 5.0)
TAU_BOUNDS = (1e-6, 3.0)
RHO_BOUNDS = (-0.999, 0.999)

SAUC_NODES = 64
SAUC_MAX_NODES = 4096
SAUC_TOL = 1e-9
# logit-scale half width of the SAUC integral; the weight expit(u)expit(-u) is below 5e-18 outside it
SAUC_HALF_WIDTH = 40.0

DEFAULT_FPR_GRID = np.linspace(0.005, 0.995, 201)

BIVARIATE_NAMES = ("mu1", "mu2", "tau1", "tau2", "rho")


@dataclass(frozen=True)
class BivariateParams:
    mu1: float
    mu2: float
    tau1: float
    tau2: float
    rho: float

    def __post_init__(self):
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise InputError(f"❌ tau1 and tau2 must be positive, got ({self.tau1}, {self.tau2})")
        if not -1.0 <= self.rho <= 1.0:
            raise InputError(f"❌ rho must lie in [-1, 1], got {self.rho}")
        if not (math.isfinite(self.mu1) and math.isfinite(self.mu2)):
            raise InputError("❌ mu1 and mu2 must be finite")

    @property
    def tau12(self):
        return self.rho * self.tau1 * self.tau2

    @property
    def omega(self):
        return np.array([[self.tau1**2, self.tau12], [self.tau12, self.tau2**2]])

    @property
    def se_hat(self):
        return float(expit(self.mu1))

    @property
    def sp_hat(self):
        return float(expit(self.mu2))

    def as_vector(self):
        return np.array([self.mu1, self.mu2, self.tau1, self.tau2, self.rho], dtype=float)

    @classmethod
    def from_vector(cls, x):
        return cls(*(float(v) for v in x[:5]))


@dataclass(frozen=True)
class SrocPoint:
    fpr: float
    tpr: float


class ReitsmaFit(NamedTuple):
    params: BivariateParams
    loglik: float
    converged: bool


def _loglik_terms(mu1, mu2, tau1, tau2, rho, arrays):
    """Per-study marginal bivariate normal log-densities, 2x2 algebra in closed form."""
    a = arrays.s1_sq + tau1 * tau1
    d = arrays.s2_sq + tau2 * tau2
    b = rho * tau1 * tau2
    det = a * d - b * b
    if np.any(det <= 0):
        raise SingularCovariance("❌ Sigma_i + Omega is not positive definite")
    e1 = arrays.y1 - mu1
    e2 = arrays.y2 - mu2
    quad = (d * e1 * e1 - 2.0 * b * e1 * e2 + a * e2 * e2) / det
    return -0.5 * quad - 0.5 * np.log(det) - LOG_2PI


def reitsma_loglik(params: BivariateParams, data: StudyData) -> float:
    """Marginal Reitsma log-likelihood.

    Includes the -log(2*pi) constant per study, so the value is the full
    bivariate normal log-density summed over studies.
    """
    arrays = as_arrays(data)
    terms = _loglik_terms(params.mu1, params.mu2, params.tau1, params.tau2, params.rho, arrays)
    return float(np.sum(terms))


def reitsma_bounds(mu_bounds=MU_BOUNDS, tau_bounds=TAU_BOUNDS, rho_bounds=RHO_BOUNDS):
    return [mu_bounds, mu_bounds, tau_bounds, tau_bounds, rho_bounds]


def initial_params(data: StudyData) -> BivariateParams:
    """Moment starts: means, SDs clamped to [0.05, 3], correlation clamped to [-0.95, 0.95]."""
    arrays = as_arrays(data)
    if arrays.n > 1:
        sd1 = float(np.std(arrays.y1, ddof=1))
        sd2 = float(np.std(arrays.y2, ddof=1))
    else:
        sd1 = sd2 = 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = float(np.corrcoef(arrays.y1, arrays.y2)[0, 1]) if arrays.n > 2 else 0.0
    if not math.isfinite(rho):
        rho = 0.0
    return BivariateParams(
        mu1=float(np.clip(np.mean(arrays.y1), *MU_BOUNDS)),
        mu2=float(np.clip(np.mean(arrays.y2), *MU_BOUNDS)),
        tau1=float(np.clip(sd1, 0.05, 3.0)),
        tau2=float(np.clip(sd2, 0.05, 3.0)),
        rho=float(np.clip(rho, -0.95, 0.95)),
    )


def fit_reitsma(data: StudyData, init: BivariateParams = None) -> ReitsmaFit:
    """Maximum likelihood fit of the Reitsma model with known within-study variances."""
    arrays = as_arrays(data)
    if arrays.n < 3:
        logger.warning(f"⚠️ Only {arrays.n} studies: between-study covariance is weakly identified")

    start = init if init is not None else initial_params(arrays)
    bounds = reitsma_bounds()

    def loglik(x):
        return float(np.sum(_loglik_terms(x[0], x[1], x[2], x[3], x[4], arrays)))

    result = maximize_box(loglik, start.as_vector(), bounds)
    params = BivariateParams.from_vector(result.x)

    pinned = [name for name, flag in zip(BIVARIATE_NAMES, pinned_mask(result.x, bounds)) if flag]
    if pinned:
        logger.warning(f"⚠️ Reitsma fit on the boundary for: {', '.join(pinned)}")
    if result.converged:
        logger.info(f"✅ Reitsma fit converged: loglik={result.value:.4f}, SAUC={sauc(params):.4f}")
    else:
        logger.warning(f"⚠️ Reitsma fit did not report convergence: {result.message}")

    return ReitsmaFit(params=params, loglik=result.value, converged=result.converged)


def _sroc_line(params: BivariateParams):
    """SROC in logit space is a + b*logit(x)."""
    slope = -params.tau12 / params.tau2**2
    return params.mu1 + slope * params.mu2, slope


def sroc(params: BivariateParams, fpr):
    """SROC value(s) at false positive rate(s) ``fpr``."""
    x = np.asarray(fpr, dtype=float)
    if np.any(~((x > 0) & (x < 1))):
        raise DomainError(f"❌ FPR must lie strictly inside (0, 1), got {fpr}")
    intercept, slope = _sroc_line(params)
    tpr = expit(intercept + slope * logit(x))
    return float(tpr) if np.ndim(tpr) == 0 else tpr


def sroc_points(params: BivariateParams, grid=DEFAULT_FPR_GRID) -> list:
    return [SrocPoint(float(x), float(y)) for x, y in zip(grid, sroc(params, grid))]


def sroc_curve(params: BivariateParams, grid=DEFAULT_FPR_GRID) -> pd.DataFrame:
    grid = np.asarray(grid, dtype=float)
    return pd.DataFrame({"fpr": grid, "tpr": sroc(params, grid)})


@lru_cache(maxsize=None)
def _legendre(n):
    return np.polynomial.legendre.leggauss(n)


def _sauc_segments(intercept, slope):
    """Breakpoints on the logit scale around the step of expit(intercept + slope * u).

    Beyond u* +/- 40/|slope| the SROC factor is flat to double precision,
    so every piece is smooth once the transition band is its own segment.
    """
    points = [-SAUC_HALF_WIDTH, SAUC_HALF_WIDTH]
    if slope != 0:
        centre = -intercept / slope
        band = SAUC_HALF_WIDTH / abs(slope)
        points += [centre - band, centre, centre + band]
    points = np.unique(np.clip(points, -SAUC_HALF_WIDTH, SAUC_HALF_WIDTH))
    return [(lo, hi) for lo, hi in zip(points[:-1], points[1:]) if hi > lo]


def _sauc_rule(intercept, slope, segments, n):
    nodes, weights = _legendre(n)
    total = 0.0
    for lo, hi in segments:
        half = 0.5 * (hi - lo)
        u = 0.5 * (hi + lo) + half * nodes
        # x = expit(u), dx = expit(u) * expit(-u) du
        total += half * float(np.sum(weights * expit(intercept + slope * u) * expit(u) * expit(-u)))
    return total


def sauc(params: BivariateParams) -> float:
    """Area under the SROC curve over FPR in (0, 1).

    Piecewise Gauss-Legendre on the logit-substituted integrand, split
    where the SROC crosses 0.5, doubling the node count until successive
    estimates agree.
    """
    intercept, slope = _sroc_line(params)
    segments = _sauc_segments(intercept, slope)
    n = SAUC_NODES
    previous = _sauc_rule(intercept, slope, segments, n)
    while n < SAUC_MAX_NODES:
        n *= 2
        current = _sauc_rule(intercept, slope, segments, n)
        if abs(current - previous) <= SAUC_TOL:
            return current
        previous = current
    logger.warning(f"⚠️ SAUC quadrature did not settle at {n} nodes (slope {slope:.3g})")
    return previous
