"""Posterior summaries: the causality test, residual correlation, fit report.

The causality statistic is not a sampled parameter: for every retained draw
the common values are plugged into the observation equation and the direct
valuation -> price coefficient is re-estimated by a centered residual
regression. Quantiles of those re-estimates form the hybrid confidence set;
the null of no direct arrow is rejected when the set misses zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import TooFewDraws
from .gibbs import MONITORED_KEYS, PosteriorChain, pooled, split_rhat
from .structure import TslhDataset


@dataclass
class CausalityResult:
    estimate: float
    lower: float
    upper: float
    reject: bool
    n_draws: int

    def describe(self) -> str:
        verdict = "reject" if self.reject else "accept"
        return (f"direct valuation->price coefficient {self.estimate:.6f}, "
                f"95% hybrid set ({self.lower:.6f}, {self.upper:.6f}) -> "
                f"{verdict} conditional independence")


def causality_test(chains, min_draws: int = 100) -> CausalityResult:
    """Hybrid confidence set for the residualized regression coefficient."""
    draws = pooled(chains, "gamma_pv_tilde")
    if len(draws) < min_draws:
        raise TooFewDraws(len(draws), min_draws)
    lo, hi = np.quantile(draws, [0.025, 0.975])
    return CausalityResult(
        estimate=float(draws.mean()), lower=float(lo), upper=float(hi),
        reject=not (lo <= 0.0 <= hi), n_draws=len(draws))


@dataclass
class ResidualCorrelation:
    posterior_mean: float
    raw_correlation: float
    log_correlation: float
    n_draws: int


def residual_correlation_rpv(chains, dataset: TslhDataset,
                             min_draws: int = 1) -> ResidualCorrelation:
    """Posterior mean of the per-draw residual correlation, next to the
    unadjusted Pearson correlations of (valuation, price) raw and logged."""
    draws = pooled(chains, "r_pv")
    if len(draws) < min_draws:
        raise TooFewDraws(len(draws), min_draws)
    y = dataset.y
    log_corr = float(np.corrcoef(y[:, 0], y[:, 1])[0, 1])
    raw_corr = float(np.corrcoef(np.exp(y[:, 0]), np.exp(y[:, 1]))[0, 1])
    return ResidualCorrelation(float(draws.mean()), raw_corr, log_corr, len(draws))


@dataclass
class FitReport:
    predicted_log: np.ndarray        # (M, 2) posterior-mean log predictions
    residual_log: np.ndarray         # (M, 2)
    residual_rupees: np.ndarray      # (M, 2) on the raw price scale
    half_width_80: tuple             # rupees, (valuation, price)
    half_width_95: tuple
    qq_theoretical: np.ndarray
    qq_valuation: np.ndarray
    qq_price: np.ndarray

    def describe(self) -> str:
        return (f"valuation error {self.half_width_80[0]:.2f} Rs at 80%"
                f" / {self.half_width_95[0]:.2f} Rs at 95%; "
                f"price error {self.half_width_80[1]:.2f} Rs at 80%"
                f" / {self.half_width_95[1]:.2f} Rs at 95%")


def fit_report(chains, dataset: TslhDataset) -> FitReport:
    """Posterior-predictive point accuracy in rupees plus Q-Q data.

    The point prediction of each lot is the posterior mean of
    W + gamma u on the log scale; rupee errors compare exp of that against
    the observed raw values, and the half-widths are the 80%/95% quantiles
    of the absolute errors.
    """
    if not chains:
        raise TooFewDraws(0, 1)
    yhat = np.mean([c.yhat_mean for c in chains], axis=0)
    y = dataset.y
    resid_log = y - yhat
    resid_rupees = np.exp(y) - np.exp(yhat)
    abs_err = np.abs(resid_rupees)
    hw80 = tuple(float(np.quantile(abs_err[:, k], 0.80)) for k in range(2))
    hw95 = tuple(float(np.quantile(abs_err[:, k], 0.95)) for k in range(2))
    n = len(y)
    probs = (np.arange(1, n + 1) - 0.5) / n
    theo = stats.norm.ppf(probs)

    def standardized(col):
        sd = col.std()
        return np.sort(col / sd) if sd > 0 else np.sort(col)

    return FitReport(
        predicted_log=yhat, residual_log=resid_log, residual_rupees=resid_rupees,
        half_width_80=hw80, half_width_95=hw95,
        qq_theoretical=theo,
        qq_valuation=standardized(resid_log[:, 0]),
        qq_price=standardized(resid_log[:, 1]))


# ---------------------------------------------------------------------------
# summary table
# ---------------------------------------------------------------------------

_PARAM_DESCRIPTIONS = {
    "phi0": "stage-2 intercept",
    "phi": "previous common value effect",
    "beta1": "own-cell market state loading",
    "beta2": "same-source-cluster substitution loading",
    "beta3": "same-grade-cluster substitution loading",
    "R": "stage-2 innovation variance",
    "gamma_v": "log-volume loading on log valuation",
    "gamma_p": "log-volume loading on log price",
    "S_vv": "log-valuation observation variance",
    "S_vp": "observation covariance",
    "S_pp": "log-price observation variance",
}


def summary_table(chains) -> list:
    """Rows of (name, description, lower CL, estimate, upper CL) for every
    scalar parameter plus the stage-2 exogenous loadings."""
    rows = []
    for key, desc in _PARAM_DESCRIPTIONS.items():
        draws = pooled(chains, key)
        lo, hi = np.quantile(draws, [0.025, 0.975])
        rows.append((key, desc, float(lo), float(draws.mean()), float(hi)))
    h_all = np.concatenate([c.draws["H"] for c in chains], axis=0)
    for j, col in enumerate(chains[0].x_columns):
        lo, hi = np.quantile(h_all[:, j], [0.025, 0.975])
        rows.append((f"H[{col}]", "stage-2 exogenous loading",
                     float(lo), float(h_all[:, j].mean()), float(hi)))
    return rows


def credible_interval(chains, key, level: float = 0.95) -> tuple:
    draws = pooled(chains, key)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(draws, [alpha, 1.0 - alpha])
    return float(lo), float(hi)
