"""Box-constrained maximization shared by the Reitsma and selection-model fits."""

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from dta_sa.errors import DtaSaError, OptimizationFailed

logger = logging.getLogger(__name__)

# stand-in for -loglik where the likelihood cannot be evaluated
PENALTY = 1e300

XATOL = 1e-8
FATOL = 1e-10
BOUNDARY_TOL = 1e-4


@dataclass(frozen=True)
class MaxResult:
    x: np.ndarray
    value: float
    converged: bool
    n_evals: int
    message: str = ""


def pinned_mask(x, bounds, tol=BOUNDARY_TOL) -> np.ndarray:
    """True for coordinates within ``tol`` (relative to the box width) of a bound."""
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    margin = tol * (hi - lo)
    x = np.asarray(x, dtype=float)
    return (x - lo <= margin) | (hi - x <= margin)


def _perturbed_starts(x0, bounds, n_starts, rng):
    starts = [np.asarray(x0, dtype=float)]
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    for _ in range(n_starts - 1):
        step = rng.uniform(-0.1, 0.1, size=len(x0)) * (hi - lo)
        starts.append(np.clip(starts[0] + step, lo, hi))
    return starts


def maximize_box(
    fn: Callable[[np.ndarray], float],
    x0: Sequence[float],
    bounds: Sequence[tuple],
    n_starts: int = 3,
    seed: int = 0,
    maxfev: int = 20000,
) -> MaxResult:
    """Maximize ``fn`` over a box.

    Nelder-Mead from ``x0`` and ``n_starts - 1`` perturbed copies of it,
    then an L-BFGS-B polish from the best vertex. Package errors raised
    by ``fn`` count as infeasible points.
    """
    n_evals = 0

    def objective(x):
        nonlocal n_evals
        n_evals += 1
        try:
            value = fn(x)
        except DtaSaError:
            return PENALTY
        if not np.isfinite(value):
            return PENALTY
        return -value

    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    x0 = np.clip(np.asarray(x0, dtype=float), lo, hi)
    rng = np.random.default_rng(seed)

    best = None
    for start in _perturbed_starts(x0, bounds, n_starts, rng):
        res = minimize(
            objective,
            start,
            method="Nelder-Mead",
            bounds=list(bounds),
            options={"xatol": XATOL, "fatol": FATOL, "maxfev": maxfev, "adaptive": len(start) > 4},
        )
        if best is None or res.fun < best.fun:
            best = res

    if best is None or best.fun >= PENALTY:
        logger.error("❌ Optimizer found no feasible point from any start")
        raise OptimizationFailed("❌ Log-likelihood could not be evaluated from any start")

    x_best, f_best, converged, message = best.x, best.fun, bool(best.success), str(best.message)

    polish = minimize(objective, x_best, method="L-BFGS-B", bounds=list(bounds), options={"ftol": 1e-14, "gtol": 1e-9})
    if np.isfinite(polish.fun) and polish.fun <= f_best:
        x_best, f_best = polish.x, polish.fun
        converged = converged or bool(polish.success)
        message = f"{message}; polish: {polish.message}"

    return MaxResult(x=np.clip(x_best, lo, hi), value=-f_best, converged=converged, n_evals=n_evals, message=message)
