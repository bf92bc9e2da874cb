"""Logistic regression by IRLS, one-way ANOVA, and a spline-basis logistic fit.

Deviance bookkeeping follows the standard GLM convention: the saturated
model gives each observation its own parameter, so for Bernoulli outcomes
its log-likelihood is zero and deviance is minus twice the model
log-likelihood. The reported pseudo R^2 is McFadden's
1 - residual_deviance / null_deviance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.interpolate import BSpline

from .errors import RankDeficient, SeparationWarning, SingleLevel


# ---------------------------------------------------------------------------
# design matrices
# ---------------------------------------------------------------------------

@dataclass
class DesignMatrix:
    """n x p matrix with per-column names; factors are dummy-coded.

    The baseline of a factor is "Regular" when present, otherwise the
    alphabetically first level, so intercepts read as the Regular-level mean.
    """
    X: np.ndarray
    columns: list[str]
    factor_levels: dict = field(default_factory=dict)  # factor -> ordered levels

    @property
    def shape(self):
        return self.X.shape


def _baseline_first(levels):
    levels = sorted(set(levels), key=str)
    if "Regular" in levels:
        levels.remove("Regular")
        levels.insert(0, "Regular")
    return levels


def build_design(n: int, numeric: Optional[dict] = None,
                 factors: Optional[dict] = None,
                 intercept: bool = True) -> DesignMatrix:
    """Assemble intercept + numeric columns + dummy-coded factors.

    ``numeric`` maps name -> array, ``factors`` maps name -> sequence of
    labels. Dummy columns for levels that never occur are dropped.
    """
    cols = []
    names = []
    levels_map = {}
    if intercept:
        cols.append(np.ones(n))
        names.append("(Intercept)")
    for name, values in (numeric or {}).items():
        arr = np.asarray(values, dtype=float)
        if arr.shape != (n,):
            raise ValueError(f"numeric column {name!r} has shape {arr.shape}")
        cols.append(arr)
        names.append(name)
    for name, labels in (factors or {}).items():
        labels = list(labels)
        if len(labels) != n:
            raise ValueError(f"factor {name!r} has length {len(labels)}")
        levels = _baseline_first(labels)
        levels_map[name] = levels
        for level in levels[1:]:
            cols.append(np.array([1.0 if l == level else 0.0 for l in labels]))
            names.append(f"{name}[{level}]")
    X = np.column_stack(cols) if cols else np.empty((n, 0))
    return DesignMatrix(X, names, levels_map)


def _check_rank(X):
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise RankDeficient(int(rank), X.shape[1])


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------

@dataclass
class GlmFit:
    coefficients: np.ndarray
    std_errors: np.ndarray
    columns: list[str]
    null_deviance: float
    null_df: int
    residual_deviance: float
    residual_df: int
    pseudo_r2: float
    fitted: np.ndarray
    n_iter: int

    def coef(self, name: str) -> float:
        return float(self.coefficients[self.columns.index(name)])

    def summary_rows(self):
        z = self.coefficients / self.std_errors
        p = 2.0 * stats.norm.sf(np.abs(z))
        return [
            (name, float(b), float(se), float(zz), float(pp))
            for name, b, se, zz, pp in zip(self.columns, self.coefficients,
                                           self.std_errors, z, p)
        ]


def bernoulli_log_likelihood(y, p) -> float:
    y = np.asarray(y, dtype=float)
    p = np.clip(np.asarray(p, dtype=float), 1e-300, 1.0 - 1e-16)
    return float(np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def fit_logistic(design: DesignMatrix, y, weights=None,
                 max_iter: int = 100, grad_tol: float = 1e-10) -> GlmFit:
    """Binomial GLM with logit link by iteratively reweighted least squares.

    ``weights`` are optional prior observation weights (used by the mixture
    EM). Quasi-separation (|beta| > 30 on the standardized scale) triggers a
    ridge (1e-6) refit and a SeparationWarning.
    """
    X = design.X
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    w0 = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if not (0.0 < y @ w0 / w0.sum() < 1.0):
        raise ValueError("both outcome classes must be present")
    _check_rank(X)

    beta, n_iter = _irls(X, y, w0, max_iter, grad_tol, ridge=0.0)
    scale = np.where(X.std(axis=0) > 0, X.std(axis=0), 1.0)
    if np.any(np.abs(beta * scale) > 30.0):
        warnings.warn("quasi-separation detected; refitting with ridge 1e-6",
                      SeparationWarning)
        beta, n_iter = _irls(X, y, w0, max_iter, grad_tol, ridge=1e-6)

    eta = X @ beta
    fitted = _sigmoid(eta)
    info = X.T @ (X * (w0 * fitted * (1.0 - fitted))[:, None])
    cov = np.linalg.inv(info)
    std_errors = np.sqrt(np.diag(cov))

    ll_model = _weighted_bernoulli_ll(y, fitted, w0)
    pbar = float(y @ w0 / w0.sum())
    ll_null = _weighted_bernoulli_ll(y, np.full(n, pbar), w0)
    null_dev = -2.0 * ll_null
    res_dev = -2.0 * ll_model
    return GlmFit(
        coefficients=beta,
        std_errors=std_errors,
        columns=list(design.columns),
        null_deviance=null_dev,
        null_df=n - 1,
        residual_deviance=res_dev,
        residual_df=n - p,
        pseudo_r2=1.0 - res_dev / null_dev if null_dev > 0 else 0.0,
        fitted=fitted,
        n_iter=n_iter,
    )


def _sigmoid(eta):
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _weighted_bernoulli_ll(y, p, w):
    p = np.clip(p, 1e-300, 1.0 - 1e-16)
    return float(np.sum(w * (y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def _irls(X, y, w0, max_iter, grad_tol, ridge):
    n, p = X.shape
    beta = np.zeros(p)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        mu = _sigmoid(X @ beta)
        grad = X.T @ (w0 * (y - mu)) - ridge * beta
        if np.max(np.abs(grad)) < grad_tol:
            break
        w = w0 * np.maximum(mu * (1.0 - mu), 1e-12)
        H = X.T @ (X * w[:, None]) + ridge * np.eye(p)
        step = np.linalg.solve(H, grad)
        # step halving keeps the penalized likelihood moving uphill
        ll_old = _weighted_bernoulli_ll(y, mu, w0) - 0.5 * ridge * beta @ beta
        for _ in range(30):
            cand = beta + step
            ll_new = (_weighted_bernoulli_ll(y, _sigmoid(X @ cand), w0)
                      - 0.5 * ridge * cand @ cand)
            if ll_new >= ll_old - 1e-12:
                break
            step *= 0.5
        beta = beta + step
    return beta, n_iter


# ---------------------------------------------------------------------------
# one-way ANOVA with treatment contrasts
# ---------------------------------------------------------------------------

@dataclass
class AnovaOneWay:
    levels: list
    rows: list            # (label, estimate, std_error, t, p)
    f_statistic: float
    f_df: tuple
    f_p_value: float
    between_ss: float
    within_ss: float
    total_ss: float


def anova_oneway(y, treatment) -> AnovaOneWay:
    """One-way ANOVA with treatment contrasts against the baseline level.

    The intercept row is the baseline-level mean; every other row is a mean
    difference with its classical OLS standard error, t and two-sided p.
    A zero residual variance yields infinite t statistics (p reported 0).
    """
    y = np.asarray(y, dtype=float)
    labels = list(treatment)
    levels = _baseline_first(labels)
    if len(levels) < 2:
        raise SingleLevel()
    n = y.size
    k = len(levels)
    design = build_design(n, factors={"level": labels})
    X = design.X
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    within = float(resid @ resid)
    dof = n - k
    sigma2 = within / dof if dof > 0 else 0.0
    xtx_inv = np.linalg.inv(X.T @ X)
    se = np.sqrt(np.maximum(sigma2 * np.diag(xtx_inv), 0.0))

    rows = []
    for i, level in enumerate(levels):
        label = f"{level} (Intercept)" if i == 0 else level
        b = float(beta[i])
        s = float(se[i])
        if s > 0:
            t = b / s
            pval = float(2.0 * stats.t.sf(abs(t), dof))
        else:
            t = math.inf if b != 0 else 0.0
            pval = 0.0 if b != 0 else 1.0
        rows.append((label, b, s, t, pval))

    grand = y.mean()
    total = float(np.sum((y - grand) ** 2))
    between = total - within
    if sigma2 > 0:
        f = (between / (k - 1)) / sigma2
        f_p = float(stats.f.sf(f, k - 1, dof))
    else:
        f = math.inf
        f_p = 0.0
    return AnovaOneWay(levels, rows, f, (k - 1, dof), f_p, between, within, total)


# ---------------------------------------------------------------------------
# spline-basis logistic regression
# ---------------------------------------------------------------------------

def cubic_spline_basis(x, n_interior: int = 8):
    """Unpenalized cubic B-spline basis with interior knots at quantiles.

    Knots sit at the i/(n_interior+1) empirical quantiles; boundary knots at
    the data range. The first basis column is dropped (the basis sums to one,
    so it is collinear with an intercept) and linear functions stay inside
    the span.
    """
    x = np.asarray(x, dtype=float)
    probs = np.arange(1, n_interior + 1) / (n_interior + 1)
    interior = np.quantile(x, probs)
    lo, hi = float(x.min()), float(x.max())
    knots = np.concatenate([[lo] * 4, interior, [hi] * 4])
    n_basis = len(knots) - 4
    design = BSpline.design_matrix(np.clip(x, lo, hi), knots, 3).toarray()
    assert design.shape[1] == n_basis
    return design[:, 1:], interior


def fit_spline_logistic(valuation, y, factors: Optional[dict] = None,
                        n_interior: int = 8) -> GlmFit:
    """Logistic fit on a cubic spline basis of valuation plus factor dummies."""
    valuation = np.asarray(valuation, dtype=float)
    if np.unique(valuation).size < 20:
        raise ValueError("need at least 20 distinct valuation values")
    basis, _ = cubic_spline_basis(valuation, n_interior=n_interior)
    numeric = {f"spline_{j + 1}": basis[:, j] for j in range(basis.shape[1])}
    design = build_design(valuation.size, numeric=numeric, factors=factors or {})
    return fit_logistic(design, y)


# ---------------------------------------------------------------------------
# probability metrics over covariate combinations
# ---------------------------------------------------------------------------

def prob_metrics(predicted, observed, combination_keys: Sequence) -> dict:
    """RMSE / MAE between model probabilities and empirical sold proportions.

    Lots sharing a combination key are pooled: the empirical proportion is
    the mean outcome, the model probability the mean prediction (constant
    within a combination when the covariates are).
    """
    predicted = np.asarray(predicted, dtype=float)
    observed = np.asarray(observed, dtype=float)
    keys = list(combination_keys)
    if not keys:
        raise ValueError("empty combination set")
    sums: dict = {}
    for key, p, o in zip(keys, predicted, observed):
        s = sums.setdefault(key, [0.0, 0.0, 0])
        s[0] += p
        s[1] += o
        s[2] += 1
    diffs = np.array([s[0] / s[2] - s[1] / s[2] for s in sums.values()])
    return {
        "rmse": float(np.sqrt(np.mean(diffs ** 2))),
        "mae": float(np.mean(np.abs(diffs))),
        "n_combinations": len(sums),
    }
