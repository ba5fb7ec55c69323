"""Observed information and delta-method intervals for SAUC."""

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, logit, ndtri

from dta_sa.errors import InputError, NonInvertibleHessian

logger = logging.getLogger(__name__)

MIN_STEP = 1e-5
REL_STEP = 1e-5


@dataclass(frozen=True)
class CiResult:
    estimate: float
    lo: float
    hi: float
    level: float = 0.95
    se_sauc: float = 0.0
    # true when boundary-pinned parameters were held fixed
    conditional_on_boundary: bool = False


def fd_steps(at) -> np.ndarray:
    return np.maximum(MIN_STEP, REL_STEP * np.abs(np.asarray(at, dtype=float)))


def _active(n, exclude):
    excluded = set(int(i) for i in exclude)
    return [i for i in range(n) if i not in excluded]


def observed_information(loglik_fn: Callable[[np.ndarray], float], at: Sequence[float], exclude: Sequence[int] = ()) -> np.ndarray:
    """Negative central-difference Hessian of ``loglik_fn`` at ``at``.

    Coordinates listed in ``exclude`` (boundary-pinned ones) are held at
    their value and left out of the matrix; the rows that remain follow
    the order of the other coordinates.
    """
    at = np.asarray(at, dtype=float)
    idx = _active(len(at), exclude)
    h = fd_steps(at)
    k = len(idx)
    f0 = loglik_fn(at)
    hess = np.zeros((k, k))

    def shifted(pairs):
        x = at.copy()
        for i, delta in pairs:
            x[i] += delta
        return loglik_fn(x)

    for a, i in enumerate(idx):
        hess[a, a] = (shifted([(i, h[i])]) - 2.0 * f0 + shifted([(i, -h[i])])) / (h[i] * h[i])
        for b in range(a):
            j = idx[b]
            value = (
                shifted([(i, h[i]), (j, h[j])])
                - shifted([(i, h[i]), (j, -h[j])])
                - shifted([(i, -h[i]), (j, h[j])])
                + shifted([(i, -h[i]), (j, -h[j])])
            ) / (4.0 * h[i] * h[j])
            hess[a, b] = hess[b, a] = value

    info = -0.5 * (hess + hess.T)
    if not np.all(np.isfinite(info)):
        raise NonInvertibleHessian("❌ Observed information has non-finite entries")
    if k:
        try:
            np.linalg.cholesky(info)
        except np.linalg.LinAlgError:
            raise NonInvertibleHessian("❌ Observed information is not positive definite")
    return info


def numerical_gradient(fn: Callable[[np.ndarray], float], at: Sequence[float], exclude: Sequence[int] = ()) -> np.ndarray:
    at = np.asarray(at, dtype=float)
    idx = _active(len(at), exclude)
    h = fd_steps(at)
    grad = np.zeros(len(idx))
    for a, i in enumerate(idx):
        up, down = at.copy(), at.copy()
        up[i] += h[i]
        down[i] -= h[i]
        grad[a] = (fn(up) - fn(down)) / (2.0 * h[i])
    return grad


def covariance(info: np.ndarray) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        raise NonInvertibleHessian("❌ Observed information is not positive definite")
    inv_chol = np.linalg.inv(chol)
    return inv_chol.T @ inv_chol


def _z(level):
    if not 0 < level < 1:
        raise InputError(f"❌ Confidence level must lie in (0, 1), got {level}")
    return float(ndtri(0.5 + level / 2.0))


def ci_from_se(estimate: float, se_sauc: float, level: float = 0.95, conditional_on_boundary: bool = False) -> CiResult:
    """logit^-1(logit(SAUC) +/- z * se / (SAUC (1 - SAUC)))."""
    if not 0 < estimate < 1:
        raise InputError(f"❌ SAUC estimate must lie in (0, 1), got {estimate}")
    half_width = _z(level) * se_sauc / (estimate * (1.0 - estimate))
    centre = logit(estimate)
    return CiResult(
        estimate=estimate,
        lo=float(expit(centre - half_width)),
        hi=float(expit(centre + half_width)),
        level=level,
        se_sauc=float(se_sauc),
        conditional_on_boundary=conditional_on_boundary,
    )


def sauc_ci(estimate: float, gradient: np.ndarray, info: np.ndarray, level: float = 0.95, conditional_on_boundary: bool = False) -> CiResult:
    """Delta-method interval; ``gradient`` is dSAUC/dtheta over the rows of ``info``."""
    cov = covariance(info)
    gradient = np.asarray(gradient, dtype=float)
    se_sauc = float(np.sqrt(max(0.0, gradient @ cov @ gradient)))
    return ci_from_se(estimate, se_sauc, level, conditional_on_boundary)


def wald_interval(estimate: float, variance: float, level: float = 0.95):
    half_width = _z(level) * np.sqrt(max(0.0, variance))
    return float(estimate - half_width), float(estimate + half_width)
