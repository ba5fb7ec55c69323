"""Conditional likelihood of the selected studies at a given marginal selection probability p."""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import log_ndtr

from dta_sa.errors import DtaSaError, InputError, NonInvertibleHessian
from dta_sa.inference import CiResult, numerical_gradient, observed_information, sauc_ci, covariance, wald_interval
from dta_sa.optimize import maximize_box, pinned_mask
from dta_sa.reitsma import (
    MU_BOUNDS,
    RHO_BOUNDS,
    TAU_BOUNDS,
    BivariateParams,
    ReitsmaFit,
    _loglik_terms,
    fit_reitsma,
    reitsma_bounds,
    sauc,
)
from dta_sa.selection import ContrastVector, SelectionParams, b_argument, solve_alpha_p, t_scores
from dta_sa.studies import StudyArrays, StudyData, as_arrays

logger = logging.getLogger(__name__)

PARAM_NAMES = ("mu1", "mu2", "tau1", "tau2", "rho", "beta", "c1")
CONTRAST_MODES = ("estimate", "fixed")


@dataclass(frozen=True)
class SaConfig:
    p: float = 1.0
    contrast_mode: str = "estimate"
    fixed_c1: Optional[float] = None
    beta_bounds: tuple = (0.0, 2.0)
    mu_bounds: tuple = MU_BOUNDS
    tau_bounds: tuple = TAU_BOUNDS
    rho_bounds: tuple = RHO_BOUNDS
    initial_beta: float = 1.0
    initial_c1: float = 0.5
    level: float = 0.95

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise InputError(f"❌ p must lie in (0, 1], got {self.p}")
        if self.contrast_mode not in CONTRAST_MODES:
            raise InputError(f"❌ contrast_mode must be one of {CONTRAST_MODES}, got {self.contrast_mode!r}")
        if self.contrast_mode == "fixed" and (self.fixed_c1 is None or not 0 <= self.fixed_c1 <= 1):
            raise InputError(f"❌ A fixed contrast needs c1 in [0, 1], got {self.fixed_c1}")
        for name in ("beta_bounds", "mu_bounds", "tau_bounds", "rho_bounds"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise InputError(f"❌ {name} must be a non-degenerate interval, got ({lo}, {hi})")
        if self.beta_bounds[0] < 0:
            raise InputError("❌ beta must be non-negative")
        if self.tau_bounds[0] <= 0:
            raise InputError("❌ tau lower bound must be positive")

    @property
    def estimate_contrast(self):
        return self.contrast_mode == "estimate"

    def with_p(self, p):
        return replace(self, p=p)


@dataclass(frozen=True)
class SaFit:
    p: float
    biv: BivariateParams
    sel: Optional[SelectionParams]
    loglik: float
    sauc: float
    sauc_ci: Optional[CiResult]
    converged: bool
    n_studies: int
    beta_ci: Optional[tuple] = None
    boundary: tuple = ()
    message: str = ""

    @property
    def se_hat(self):
        return self.biv.se_hat

    @property
    def sp_hat(self):
        return self.biv.sp_hat

    @property
    def n_unpublished(self):
        """Implied number of unselected studies, round(N (1 - p) / p)."""
        return int(round(self.n_studies * (1.0 - self.p) / self.p))

    @classmethod
    def failed(cls, p, n_studies, biv, message):
        return cls(
            p=p, biv=biv, sel=None, loglik=math.nan, sauc=math.nan, sauc_ci=None,
            converged=False, n_studies=n_studies, message=message,
        )

    def to_record(self) -> dict:
        sel = self.sel
        ci = self.sauc_ci
        return {
            "p": self.p,
            "mu1": self.biv.mu1,
            "mu2": self.biv.mu2,
            "tau1": self.biv.tau1,
            "tau2": self.biv.tau2,
            "rho": self.biv.rho,
            "c1": sel.contrast.c1 if sel else None,
            "c2": sel.contrast.c2 if sel else None,
            "beta": sel.beta if sel else None,
            "beta_lo": self.beta_ci[0] if self.beta_ci else None,
            "beta_hi": self.beta_ci[1] if self.beta_ci else None,
            "alpha": sel.alpha if sel else None,
            "loglik": self.loglik,
            "sauc": self.sauc,
            "sauc_lo": ci.lo if ci else None,
            "sauc_hi": ci.hi if ci else None,
            "se_sauc": ci.se_sauc if ci else None,
            "se_hat": self.se_hat,
            "sp_hat": self.sp_hat,
            "n_studies": self.n_studies,
            "n_unpublished": self.n_unpublished,
            "boundary": list(self.boundary),
            "converged": self.converged,
        }


def _conditional_terms(theta, c1, p, arrays: StudyArrays, alpha_hint=None):
    """Log-likelihood and alpha_p at theta = (mu1, mu2, tau1, tau2, rho, beta)."""
    mu1, mu2, tau1, tau2, rho, beta = theta[:6]
    reitsma_part = float(np.sum(_loglik_terms(mu1, mu2, tau1, tau2, rho, arrays)))
    if p >= 1:
        return reitsma_part, math.inf

    biv = BivariateParams(mu1, mu2, tau1, tau2, rho)
    contrast = ContrastVector.from_c1(c1)
    data_vars = np.column_stack([arrays.s1_sq, arrays.s2_sq])
    alpha = solve_alpha_p(p, data_vars, biv, contrast, beta, hint=alpha_hint)

    t = t_scores(arrays.y1, arrays.y2, arrays.s1_sq, arrays.s2_sq, contrast)
    selected_part = float(np.sum(log_ndtr(beta * t + alpha)))
    marginal_part = float(np.sum(log_ndtr(b_argument(arrays.s1_sq, arrays.s2_sq, biv, contrast, beta, alpha))))
    return reitsma_part + selected_part - marginal_part, alpha


def conditional_loglik(biv: BivariateParams, contrast: ContrastVector, beta: float, p: float, data: StudyData) -> float:
    """Reitsma log-likelihood plus the selection terms with alpha re-solved from p.

    At p = 1 the selection terms vanish and the value equals reitsma_loglik.
    """
    arrays = as_arrays(data)
    theta = np.array([biv.mu1, biv.mu2, biv.tau1, biv.tau2, biv.rho, beta], dtype=float)
    value, _ = _conditional_terms(theta, contrast.c1, p, arrays)
    return value


class _Objective:
    """Conditional log-likelihood over the free coordinates of one fit."""

    def __init__(self, arrays, config):
        self.arrays = arrays
        self.config = config
        self.alpha_hint = None

    def unpack(self, x):
        c1 = x[6] if self.config.estimate_contrast else self.config.fixed_c1
        return x[:6], float(np.clip(c1, 0.0, 1.0))

    def __call__(self, x):
        theta, c1 = self.unpack(x)
        value, alpha = _conditional_terms(theta, c1, self.config.p, self.arrays, self.alpha_hint)
        self.alpha_hint = alpha
        return value


def _sa_bounds(config: SaConfig):
    bounds = reitsma_bounds(config.mu_bounds, config.tau_bounds, config.rho_bounds) + [config.beta_bounds]
    if config.estimate_contrast:
        bounds.append((0.0, 1.0))
    return bounds


def _fit_at_p_one(arrays, config, init, reitsma_fit):
    fit = reitsma_fit if reitsma_fit is not None else fit_reitsma(arrays, init=init)
    bounds = reitsma_bounds(config.mu_bounds, config.tau_bounds, config.rho_bounds)
    x = fit.params.as_vector()
    pinned = pinned_mask(x, bounds)

    def loglik(v):
        return float(np.sum(_loglik_terms(v[0], v[1], v[2], v[3], v[4], arrays)))

    estimate = sauc(fit.params)
    ci = _delta_ci(loglik, lambda v: sauc(BivariateParams.from_vector(v)), x, pinned, estimate, config.level)
    return SaFit(
        p=1.0,
        biv=fit.params,
        sel=None,
        loglik=fit.loglik,
        sauc=estimate,
        sauc_ci=ci[0],
        converged=fit.converged,
        n_studies=arrays.n,
        boundary=tuple(n for n, f in zip(PARAM_NAMES, pinned) if f),
    )


def _delta_ci(loglik, sauc_fn, x, pinned, estimate, level, beta_index=None):
    """SAUC interval and, when ``beta_index`` is active, the Wald interval for beta."""
    exclude = np.flatnonzero(pinned)
    try:
        info = observed_information(loglik, x, exclude=exclude)
        grad = numerical_gradient(sauc_fn, x, exclude=exclude)
        ci = sauc_ci(estimate, grad, info, level, conditional_on_boundary=bool(pinned.any()))
    except NonInvertibleHessian as e:
        logger.warning(f"⚠️ SAUC confidence interval dropped: {e}")
        return None, None

    beta_ci = None
    if beta_index is not None and not pinned[beta_index]:
        active = [i for i in range(len(x)) if not pinned[i]]
        row = active.index(beta_index)
        beta_ci = wald_interval(float(x[beta_index]), covariance(info)[row, row], level)
    return ci, beta_ci


def fit_sa(
    data: StudyData,
    config: SaConfig,
    init: Optional[BivariateParams] = None,
    init_beta: Optional[float] = None,
    init_c1: Optional[float] = None,
    reitsma_fit: Optional[ReitsmaFit] = None,
) -> SaFit:
    """Maximize the conditional log-likelihood at ``config.p``.

    (mu, Omega) start from the Reitsma fit unless ``init`` is given; beta
    and c1 start from the config unless overridden (warm starts).
    """
    arrays = as_arrays(data)
    if arrays.n < 3:
        logger.warning(f"⚠️ Only {arrays.n} studies available for the selection model")

    if config.p >= 1:
        return _fit_at_p_one(arrays, config, init, reitsma_fit)

    if init is None:
        if reitsma_fit is None:
            reitsma_fit = fit_reitsma(arrays)
        init = reitsma_fit.params

    bounds = _sa_bounds(config)
    x0 = list(init.as_vector()) + [config.initial_beta if init_beta is None else init_beta]
    if config.estimate_contrast:
        x0.append(config.initial_c1 if init_c1 is None else init_c1)

    objective = _Objective(arrays, config)
    result = maximize_box(objective, x0, bounds)

    x = result.x
    theta, c1 = objective.unpack(x)
    loglik, alpha = _conditional_terms(theta, c1, config.p, arrays)
    biv = BivariateParams.from_vector(theta)
    sel = SelectionParams(ContrastVector.from_c1(c1), beta=float(theta[5]), alpha=alpha)
    estimate = sauc(biv)

    pinned = pinned_mask(x, bounds)
    boundary = tuple(name for name, flag in zip(PARAM_NAMES, pinned) if flag)
    if boundary:
        logger.warning(f"⚠️ p={config.p:g}: solution on the boundary for {', '.join(boundary)}")

    def frozen_loglik(v):
        return _conditional_terms(*objective.unpack(v), config.p, arrays, alpha)[0]

    ci, beta_ci = _delta_ci(
        frozen_loglik,
        lambda v: sauc(BivariateParams.from_vector(v)),
        x,
        pinned,
        estimate,
        config.level,
        beta_index=5,
    )

    if result.converged:
        logger.info(f"✅ p={config.p:g}: SAUC={estimate:.4f}, beta={sel.beta:.3f}, c1={c1:.3f}, alpha_p={alpha:.3f}")
    else:
        logger.warning(f"⚠️ p={config.p:g}: optimizer did not report convergence ({result.message})")

    return SaFit(
        p=config.p,
        biv=biv,
        sel=sel,
        loglik=loglik,
        sauc=estimate,
        sauc_ci=ci,
        converged=result.converged,
        n_studies=arrays.n,
        beta_ci=beta_ci,
        boundary=boundary,
        message=result.message,
    )


def _fit_grid_entry(args):
    arrays, config, init, reitsma_fit = args
    try:
        return fit_sa(arrays, config, init=init, reitsma_fit=reitsma_fit)
    except DtaSaError as e:
        logger.error(f"❌ p={config.p:g}: fit failed: {e}")
        return SaFit.failed(config.p, arrays.n, init or reitsma_fit.params, str(e))


def sa_grid(
    data: StudyData,
    p_grid: Sequence[float],
    config: SaConfig,
    warm_start: bool = True,
    workers: int = 1,
) -> list:
    """One SaFit per p.

    With ``warm_start`` (the default) entries run in order, each starting
    from the previous converged estimates. Without it every entry starts
    from the Reitsma fit and entries may run on ``workers`` processes.
    """
    arrays = as_arrays(data)
    for p in p_grid:
        if not 0 < p <= 1:
            raise InputError(f"❌ p-grid values must lie in (0, 1], got {p}")

    reitsma_fit = fit_reitsma(arrays)

    if not warm_start:
        tasks = [(arrays, config.with_p(p), reitsma_fit.params if p < 1 else None, reitsma_fit) for p in p_grid]
        if workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(_fit_grid_entry, tasks))
        return [_fit_grid_entry(task) for task in tasks]

    fits = []
    previous = None
    for p in p_grid:
        entry_config = config.with_p(p)
        try:
            if p >= 1:
                fit = fit_sa(arrays, entry_config, reitsma_fit=reitsma_fit)
            elif previous is not None and previous.sel is not None:
                fit = fit_sa(
                    arrays,
                    entry_config,
                    init=previous.biv,
                    init_beta=previous.sel.beta,
                    init_c1=previous.sel.contrast.c1,
                    reitsma_fit=reitsma_fit,
                )
            else:
                start = previous.biv if previous is not None else reitsma_fit.params
                fit = fit_sa(arrays, entry_config, init=start, reitsma_fit=reitsma_fit)
        except DtaSaError as e:
            logger.error(f"❌ p={p:g}: fit failed: {e}")
            fit = SaFit.failed(p, arrays.n, (previous.biv if previous else reitsma_fit.params), str(e))
        fits.append(fit)
        if fit.converged:
            previous = fit
    return fits


def operating_point_trajectory(fits: Sequence[SaFit]) -> pd.DataFrame:
    """Summary operating points (FPR, TPR) = (1 - sp_hat, se_hat) per p."""
    return pd.DataFrame(
        {
            "p": [f.p for f in fits],
            "fpr": [1.0 - f.sp_hat for f in fits],
            "tpr": [f.se_hat for f in fits],
            "sauc": [f.sauc for f in fits],
            "converged": [f.converged for f in fits],
        }
    )


def grid_frame(fits: Sequence[SaFit]) -> pd.DataFrame:
    return pd.DataFrame([f.to_record() for f in fits])
