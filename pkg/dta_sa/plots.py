"""SVG figures for a sensitivity-analysis grid."""

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy.special import expit, ndtr  # noqa: E402

from dta_sa.reitsma import DEFAULT_FPR_GRID, sroc  # noqa: E402
from dta_sa.selection import t_scores  # noqa: E402

logger = logging.getLogger(__name__)

T_GRID = np.linspace(-4.0, 8.0, 241)
# SVG ids and dates vary between runs otherwise
SVG_METADATA = {"Date": None}


def _save(fig, path):
    path = Path(path)
    plt.rcParams["svg.hashsalt"] = "dta-sa"
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    logger.info(f"✅ Figure saved to {path}")


def plot_sroc_family(fits, arrays, path, title="SROC over p"):
    """Observed studies, one SROC per converged p and the summary operating point trajectory."""
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    ax.scatter(1.0 - expit(arrays.y2), expit(arrays.y1), s=14, facecolors="none", edgecolors="grey", label="studies")

    converged = [f for f in fits if f.converged]
    for fit in converged:
        ax.plot(DEFAULT_FPR_GRID, sroc(fit.biv, DEFAULT_FPR_GRID), lw=1.2, label=f"p = {fit.p:g} (SAUC {fit.sauc:.3f})")
    if converged:
        ax.plot([1 - f.sp_hat for f in converged], [f.se_hat for f in converged], "k-o", ms=3, lw=0.8, label="summary points")

    ax.set(xlim=(0, 1), ylim=(0, 1), xlabel="FPR", ylabel="TPR", title=title)
    ax.legend(fontsize=7, loc="lower right")
    _save(fig, path)


def plot_selection_functions(fits, arrays, path):
    """Fitted a(t) per p with the selected studies' t-scores as a rug."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for fit in fits:
        if not fit.converged or fit.sel is None:
            continue
        sel = fit.sel
        ax.plot(T_GRID, ndtr(sel.beta * T_GRID + sel.alpha), lw=1.2, label=f"p = {fit.p:g}")
        t = t_scores(arrays.y1, arrays.y2, arrays.s1_sq, arrays.s2_sq, sel.contrast)
        ax.plot(t, ndtr(sel.beta * t + sel.alpha), "|", ms=8, color=ax.lines[-1].get_color())
    ax.set(ylim=(0, 1.02), xlabel="t-score", ylabel="selection probability", title="Estimated selection functions")
    if ax.lines:
        ax.legend(fontsize=7, loc="lower right")
    _save(fig, path)


def plot_sauc_over_p(fits, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    rows = [f for f in fits if f.converged]
    p = np.array([f.p for f in rows])
    est = np.array([f.sauc for f in rows])
    ax.plot(p, est, "o-", color="black", ms=4)
    with_ci = [f for f in rows if f.sauc_ci is not None]
    if with_ci:
        ax.vlines(
            [f.p for f in with_ci],
            [f.sauc_ci.lo for f in with_ci],
            [f.sauc_ci.hi for f in with_ci],
            color="grey",
        )
    ax.set(xlabel="p", ylabel="SAUC", ylim=(0, 1), title="SAUC with confidence intervals over p")
    ax.invert_xaxis()
    _save(fig, path)
