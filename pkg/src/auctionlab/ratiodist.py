"""Log-normal mixture fits for price/valuation ratios and goodness-of-fit.

The ratio r = price/valuation of a sold lot is modelled on the log scale:
log r is a (mixture of) normal(s), so each component contributes
expectation exp(mu + sigma^2/2) and variance
exp(2 mu + sigma^2) (exp(sigma^2) - 1) on the ratio scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize, stats
from scipy.special import kolmogorov

from .errors import DegenerateComponent, NonPositiveRatio, TooFewObservations

_SIGMA_FLOOR = 1e-6


@dataclass
class LogNormalMixture:
    weights: np.ndarray    # (K,)
    mus: np.ndarray        # (K,) log-scale means
    sigmas: np.ndarray     # (K,) log-scale sds, > 0

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def component_expectations(self) -> np.ndarray:
        return np.exp(self.mus + self.sigmas ** 2 / 2.0)

    def component_variances(self) -> np.ndarray:
        s2 = self.sigmas ** 2
        return np.exp(2.0 * self.mus + s2) * (np.exp(s2) - 1.0)

    def mean(self) -> float:
        return float(self.weights @ self.component_expectations())

    def variance(self) -> float:
        m = self.component_expectations()
        v = self.component_variances()
        mixture_mean = self.weights @ m
        return float(self.weights @ (v + m ** 2) - mixture_mean ** 2)

    def pdf(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        pos = r > 0
        for w, mu, sg in zip(self.weights, self.mus, self.sigmas):
            out[pos] += w * stats.norm.pdf(np.log(r[pos]), mu, sg) / r[pos]
        return out

    def cdf(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        pos = r > 0
        for w, mu, sg in zip(self.weights, self.mus, self.sigmas):
            out[pos] += w * stats.norm.cdf(np.log(r[pos]), mu, sg)
        return out

    def ppf(self, q: float) -> float:
        """Quantile by bisection on the (strictly increasing) mixture cdf."""
        if not 0.0 < q < 1.0:
            raise ValueError("q must lie strictly inside (0, 1)")
        # per-component quantile bounds bracket the mixture quantile
        lo = float(np.exp(np.min(self.mus + self.sigmas * stats.norm.ppf(q))))
        hi = float(np.exp(np.max(self.mus + self.sigmas * stats.norm.ppf(q))))
        if lo == hi:
            return lo
        return float(optimize.brentq(lambda r: self.cdf(r) - q, lo, hi,
                                     xtol=1e-14, rtol=1e-14))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(self.n_components, size=n, p=self.weights / self.weights.sum())
        return np.exp(rng.normal(self.mus[comp], self.sigmas[comp]))


def fit_lognormal_mixture(ratios, K: int = 1, seed: int = 0, restarts: int = 10,
                          max_iter: int = 500, tol: float = 1e-10) -> LogNormalMixture:
    """Fit a K-component log-normal mixture to positive ratios.

    K=1 is the closed-form MLE on logs; K>=2 runs a univariate EM on logs
    (best of ``restarts``). A component whose log-scale sd collapses below
    the 1e-6 floor raises DegenerateComponent.
    """
    ratios = np.asarray(ratios, dtype=float)
    bad = np.where(~(ratios > 0))[0]
    if bad.size:
        raise NonPositiveRatio(int(bad[0]))
    if K not in (1, 2, 3):
        raise ValueError("K must be 1, 2 or 3")
    if ratios.size < 10 * K:
        raise TooFewObservations(ratios.size, 10 * K, f"K={K} mixture")
    logs = np.log(ratios)
    if K == 1:
        sigma = float(logs.std())
        if sigma < _SIGMA_FLOOR:
            raise DegenerateComponent(0, "all ratios (nearly) equal")
        return LogNormalMixture(np.array([1.0]), np.array([logs.mean()]),
                                np.array([sigma]))
    if logs.std() < _SIGMA_FLOOR:
        raise DegenerateComponent(0, "all ratios (nearly) equal")

    best = None
    best_ll = -np.inf
    for ss in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(ss)
        try:
            mix, ll = _em_logs(logs, K, rng, max_iter, tol)
        except DegenerateComponent:
            continue
        if ll > best_ll:
            best, best_ll = mix, ll
    if best is None:
        raise DegenerateComponent(0, "every EM restart collapsed")
    return best


def _em_logs(logs, K, rng, max_iter, tol):
    n = logs.size
    order = np.sort(logs)
    cuts = np.array_split(order, K)
    mus = np.array([c.mean() for c in cuts])
    mus += rng.normal(0.0, 0.1 * (logs.std() + 1e-12), size=K)
    sigmas = np.full(K, logs.std())
    weights = np.full(K, 1.0 / K)
    prev = -np.inf
    for _ in range(max_iter):
        log_p = (np.log(weights)[None, :]
                 + stats.norm.logpdf(logs[:, None], mus[None, :], sigmas[None, :]))
        m = log_p.max(axis=1, keepdims=True)
        log_norm = m[:, 0] + np.log(np.exp(log_p - m).sum(axis=1))
        ll = float(log_norm.sum())
        r = np.exp(log_p - log_norm[:, None])
        nk = np.maximum(r.sum(axis=0), 1e-300)
        weights = nk / n
        mus = (r * logs[:, None]).sum(axis=0) / nk
        sigmas = np.sqrt((r * (logs[:, None] - mus[None, :]) ** 2).sum(axis=0) / nk)
        if np.any(sigmas < _SIGMA_FLOOR):
            raise DegenerateComponent(int(np.argmin(sigmas)), "sigma below floor")
        if np.isfinite(prev) and abs(ll - prev) <= tol * (abs(prev) + 1.0):
            break
        prev = ll
    order = np.argsort(mus)
    return LogNormalMixture(weights[order], mus[order], sigmas[order]), ll


def log_likelihood(mix: LogNormalMixture, ratios) -> float:
    return float(np.sum(np.log(mix.pdf(np.asarray(ratios, dtype=float)))))


@dataclass
class GofResult:
    statistic: float
    p_value: float
    df: Optional[int] = None
    description: str = ""


def default_bin_count(n: int) -> int:
    return int(math.ceil(2.0 * n ** 0.4))


def chi_square_gof(sample, model: LogNormalMixture, bins: Optional[int] = None,
                   fitted_params: int = 0) -> GofResult:
    """Pearson chi-square test against equal-probability bins of ``model``.

    Bins start at ceil(2 n^{2/5}) (or ``bins``) and are reduced until the
    expected count per bin is at least 5; degrees of freedom subtract one
    plus the number of parameters estimated from this sample.
    """
    sample = np.sort(np.asarray(sample, dtype=float))
    n = sample.size
    b = bins if bins is not None else default_bin_count(n)
    b = min(b, n // 5 if n >= 10 else 2)
    while b >= 2 and n / b < 5.0:
        b -= 1
    df = b - 1 - fitted_params
    if b < 2 or df < 1:
        raise TooFewObservations(n, 5 * (2 + fitted_params), "chi-square binning")
    edges = [model.ppf(i / b) for i in range(1, b)]
    counts = np.diff(np.concatenate([[0], np.searchsorted(sample, edges, side="right"),
                                     [n]]))
    expected = np.full(b, n / b)
    statistic = float(np.sum((counts - expected) ** 2 / expected))
    p = float(stats.chi2.sf(statistic, df))
    return GofResult(statistic, p, df=df,
                     description=f"{b} equal-probability bins, E={n / b:.1f} per bin")


def ks_test(sample, model: LogNormalMixture) -> GofResult:
    """One-sample Kolmogorov-Smirnov test with the asymptotic p-value.

    D is the two-sided sup distance between the empirical cdf and the model
    cdf; the p-value evaluates the Kolmogorov distribution at sqrt(n) D.
    """
    sample = np.sort(np.asarray(sample, dtype=float))
    n = sample.size
    if n < 1:
        raise TooFewObservations(0, 1, "KS test")
    cdf = model.cdf(sample)
    i = np.arange(1, n + 1)
    d_plus = np.max(i / n - cdf)
    d_minus = np.max(cdf - (i - 1) / n)
    d = float(max(d_plus, d_minus))
    p = float(kolmogorov(math.sqrt(n) * d))
    return GofResult(d, p, df=None, description=f"sup distance over {n} points")
