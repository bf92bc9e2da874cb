"""Mixture of binomial logistic regressions with concomitant mixing weights.

Each component s models grouped sold counts y out of T trials through
logit(theta_s) = beta0_s + beta1_s * valuation; the mixing proportions are a
multinomial logit in the concomitant vector w (source cluster, grade
cluster, month dummies), with the first component's coefficients pinned to
zero for identifiability. Estimation is EM with multiple seeded restarts;
model size is chosen by BIC with p = 2S + (S-1) dim(w).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import EmptyComponent, UnknownLevel
from .glm import _irls, _sigmoid, build_design


@dataclass
class LogitMixtureModel:
    betas: np.ndarray           # (S, 2): intercept, valuation slope
    alphas: np.ndarray          # (S, q) concomitant coefficients, alphas[0] == 0
    concomitant_columns: list[str]
    log_likelihood: float
    bic: float
    n_params: int
    n_groups: int
    beta_std_errors: Optional[np.ndarray] = None   # observed-information SEs
    factor_levels: Optional[dict] = None

    @property
    def n_components(self) -> int:
        return len(self.betas)

    def mixing_proportions(self, w) -> np.ndarray:
        w = np.atleast_2d(np.asarray(w, dtype=float))
        logits = w @ self.alphas.T
        logits -= logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        return e / e.sum(axis=1, keepdims=True)

    def component_probabilities(self, valuation) -> np.ndarray:
        v = np.atleast_1d(np.asarray(valuation, dtype=float))
        eta = self.betas[:, 0][None, :] + np.outer(v, self.betas[:, 1])
        return _sigmoid(eta)

    def predict(self, valuation, w) -> np.ndarray:
        """Mixture sold probability sum_s pi_s(w) sigma(beta_s . x)."""
        pi = self.mixing_proportions(w)
        theta = self.component_probabilities(valuation)
        return np.sum(pi * theta, axis=1)

    def permuted(self, perm: Sequence[int]) -> "LogitMixtureModel":
        """Relabel components; predictions and likelihood are unchanged."""
        perm = list(perm)
        alphas = self.alphas[perm] - self.alphas[perm][0]
        return LogitMixtureModel(
            self.betas[perm].copy(), alphas, list(self.concomitant_columns),
            self.log_likelihood, self.bic, self.n_params, self.n_groups,
            None if self.beta_std_errors is None else self.beta_std_errors[perm],
            self.factor_levels)


def group_trials(valuation, sold, concomitant_rows: Sequence[tuple]):
    """Aggregate lots sharing (valuation, concomitants) into binomial trials."""
    sums: dict = {}
    for v, s, key in zip(valuation, sold, concomitant_rows):
        k = (float(v), tuple(key))
        acc = sums.setdefault(k, [0, 0])
        acc[0] += int(bool(s))
        acc[1] += 1
    vals = np.array([k[0] for k in sums], dtype=float)
    keys = [k[1] for k in sums]
    y = np.array([a[0] for a in sums.values()], dtype=float)
    trials = np.array([a[1] for a in sums.values()], dtype=float)
    return vals, trials, y, keys


def _binomial_log_pmf_matrix(y, T, theta):
    """(n, S) log Bi(y | T, theta_s) including the binomial coefficient."""
    logc = gammaln(T + 1.0) - gammaln(y + 1.0) - gammaln(T - y + 1.0)
    t = np.clip(theta, 1e-12, 1.0 - 1e-12)
    return logc[:, None] + y[:, None] * np.log(t) + (T - y)[:, None] * np.log1p(-t)


def _log_pi(W, alphas):
    logits = W @ alphas.T
    m = logits.max(axis=1, keepdims=True)
    return logits - (m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True)))


def _alpha_objective(W, alphas, resp):
    return float(np.sum(resp * _log_pi(W, alphas)))


def _update_alphas(W, alphas, resp, max_newton: int = 25, tol: float = 1e-10):
    """Newton ascent for the concomitant multinomial logit (alpha_1 = 0)."""
    n, q = W.shape
    S = resp.shape[1]
    if S == 1:
        return alphas
    free = S - 1
    obj = _alpha_objective(W, alphas, resp)
    for _ in range(max_newton):
        pi = np.exp(_log_pi(W, alphas))
        grad = np.empty(free * q)
        for s in range(1, S):
            grad[(s - 1) * q:s * q] = W.T @ (resp[:, s] - pi[:, s])
        if np.max(np.abs(grad)) < tol:
            break
        H = np.zeros((free * q, free * q))
        for s in range(1, S):
            for t in range(s, S):
                coef = pi[:, s] * ((1.0 if s == t else 0.0) - pi[:, t])
                block = W.T @ (W * coef[:, None])
                H[(s - 1) * q:s * q, (t - 1) * q:t * q] = block
                if t != s:
                    H[(t - 1) * q:t * q, (s - 1) * q:s * q] = block
        H += 1e-10 * np.eye(free * q)
        step = np.linalg.solve(H, grad).reshape(free, q)
        # halve until the objective does not decrease
        for _ in range(30):
            cand = alphas.copy()
            cand[1:] += step
            new_obj = _alpha_objective(W, cand, resp)
            if new_obj >= obj - 1e-12:
                break
            step *= 0.5
        alphas = cand
        if new_obj - obj < tol * (abs(obj) + 1.0):
            obj = new_obj
            break
        obj = new_obj
    return alphas


def fit_mixlogit(valuation, trials, successes, W, S: int,
                 concomitant_columns: Optional[list] = None,
                 seed: int = 0, restarts: int = 10, max_iter: int = 300,
                 tol: float = 1e-8, factor_levels: Optional[dict] = None):
    """EM fit of the S-component mixture; returns the best restart.

    Responsibilities are computed in log space; each accepted EM step cannot
    decrease the observed-data log-likelihood. A restart whose smallest
    component holds responsibility mass below one row is abandoned with
    EmptyComponent; the error propagates only when every restart fails.
    """
    x = np.asarray(valuation, dtype=float)
    T = np.asarray(trials, dtype=float)
    y = np.asarray(successes, dtype=float)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    n, q = W.shape
    if S < 1:
        raise ValueError("S must be >= 1")
    if np.any(T < 1) or np.any(y < 0) or np.any(y > T):
        raise ValueError("need 0 <= successes <= trials, trials >= 1")
    Xcomp = np.column_stack([np.ones(n), x])

    best = None
    best_trace = None
    last_error = None
    for ss in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(ss)
        try:
            model, trace = _em_once(Xcomp, x, T, y, W, S, rng, max_iter, tol)
        except EmptyComponent as exc:
            last_error = exc
            continue
        if best is None or model.log_likelihood > best.log_likelihood:
            best, best_trace = model, trace
    if best is None:
        raise last_error if last_error is not None else RuntimeError("no restart succeeded")
    best.concomitant_columns = (concomitant_columns
                                or [f"w{j}" for j in range(q)])
    best.factor_levels = factor_levels
    return best, best_trace


def _em_once(Xcomp, x, T, y, W, S, rng, max_iter, tol):
    n, q = W.shape
    resp = rng.dirichlet(np.ones(S), size=n)
    betas = np.zeros((S, 2))
    alphas = np.zeros((S, q))
    ybar = y / T
    prev_ll = -np.inf
    trace = []
    for _ in range(max_iter):
        # M-step: per-component weighted binomial logistic + concomitant logit
        for s in range(S):
            w_s = resp[:, s] * T
            if w_s.sum() < 1.0:
                raise EmptyComponent(s, float(w_s.sum()))
            betas[s], _ = _irls(Xcomp, ybar, w_s, max_iter=50,
                                grad_tol=1e-10, ridge=1e-10)
        alphas = _update_alphas(W, alphas, resp)
        # E-step
        log_b = _binomial_log_pmf_matrix(y, T, _theta_matrix(Xcomp, betas))
        log_post = _log_pi(W, alphas) + log_b
        m = log_post.max(axis=1, keepdims=True)
        log_norm = m[:, 0] + np.log(np.exp(log_post - m).sum(axis=1))
        ll = float(log_norm.sum())
        resp = np.exp(log_post - log_norm[:, None])
        trace.append(ll)
        if np.isfinite(prev_ll) and abs(ll - prev_ll) <= tol * (abs(prev_ll) + 1.0):
            break
        prev_ll = ll
    if np.any(resp.sum(axis=0) < 1.0):
        s_bad = int(np.argmin(resp.sum(axis=0)))
        raise EmptyComponent(s_bad, float(resp.sum(axis=0)[s_bad]))
    n_params = 2 * S + (S - 1) * q
    model = LogitMixtureModel(
        betas=betas.copy(), alphas=alphas.copy(), concomitant_columns=[],
        log_likelihood=ll, bic=-2.0 * ll + n_params * math.log(n),
        n_params=n_params, n_groups=n,
        beta_std_errors=_beta_std_errors(Xcomp, T, resp, betas))
    return model, trace


def _theta_matrix(Xcomp, betas):
    return _sigmoid(Xcomp @ betas.T)


def _beta_std_errors(Xcomp, T, resp, betas):
    """Observed-information standard errors treating responsibilities as
    fixed weights (the complete-data information of the M-step fits)."""
    S = len(betas)
    out = np.empty((S, 2))
    theta = _theta_matrix(Xcomp, betas)
    for s in range(S):
        w = resp[:, s] * T * theta[:, s] * (1.0 - theta[:, s])
        info = Xcomp.T @ (Xcomp * w[:, None])
        try:
            out[s] = np.sqrt(np.diag(np.linalg.inv(info)))
        except np.linalg.LinAlgError:
            out[s] = np.nan
    return out


def responsibilities(model: LogitMixtureModel, valuation, trials, successes, W):
    x = np.asarray(valuation, dtype=float)
    T = np.asarray(trials, dtype=float)
    y = np.asarray(successes, dtype=float)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    Xcomp = np.column_stack([np.ones(x.size), x])
    log_b = _binomial_log_pmf_matrix(y, T, _theta_matrix(Xcomp, model.betas))
    log_post = _log_pi(W, model.alphas) + log_b
    m = log_post.max(axis=1, keepdims=True)
    log_norm = m + np.log(np.exp(log_post - m).sum(axis=1, keepdims=True))
    return np.exp(log_post - log_norm)


def effective_components(model: LogitMixtureModel, valuation, W=None,
                         prob_tol: float = 0.01, min_mass: float = 1.0) -> int:
    """Number of distinguishable components.

    A component is pruned when its success curve theta_s(x) stays within
    ``prob_tol`` of an already-kept component over the observed valuations
    (a collapsed duplicate), or when its total mixing mass over the observed
    concomitants falls below ``min_mass`` rows.
    """
    theta = model.component_probabilities(valuation)
    if W is not None:
        mass = model.mixing_proportions(W).sum(axis=0)
    else:
        mass = np.full(model.n_components, np.inf)
    kept = []
    for s in range(model.n_components):
        if mass[s] < min_mass:
            continue
        duplicate = any(
            np.max(np.abs(theta[:, s] - theta[:, k])) <= prob_tol for k in kept)
        if not duplicate:
            kept.append(s)
    return len(kept)


def select_s_bic(valuation, trials, successes, W, s_range: Iterable[int] = (2, 3, 4, 5),
                 seed: int = 0, restarts: int = 10, **kwargs):
    """Pick S by BIC, then report the winner's effective component count.

    Duplicate (collapsed) components are pruned from the report, so a
    single-logistic truth fitted with S=2 is reported as one component.
    """
    results = {}
    for S in sorted(set(s_range)):
        model, _ = fit_mixlogit(valuation, trials, successes, W, S,
                                seed=seed, restarts=restarts, **kwargs)
        results[S] = model
    best_s = min(results, key=lambda S: (results[S].bic, S))
    model = results[best_s]
    s_effective = effective_components(model, valuation, W)
    return s_effective, {S: m.bic for S, m in results.items()}, model


@dataclass
class Rootogram:
    bin_edges: np.ndarray        # 11 edges over [0, 1]
    counts: np.ndarray           # (S, 10) histogram of responsibilities
    sqrt_counts: np.ndarray

    def rows(self):
        out = []
        for s in range(self.counts.shape[0]):
            for b in range(self.counts.shape[1]):
                out.append((s + 1, float(self.bin_edges[b]), float(self.bin_edges[b + 1]),
                            int(self.counts[s, b]), float(self.sqrt_counts[s, b])))
        return out


def rootogram(model: LogitMixtureModel, valuation, trials, successes, W,
              n_bins: int = 10) -> Rootogram:
    """Histogram of posterior membership probabilities on a sqrt-count scale."""
    resp = responsibilities(model, valuation, trials, successes, W)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    counts = np.empty((model.n_components, n_bins), dtype=int)
    for s in range(model.n_components):
        counts[s] = np.histogram(resp[:, s], bins=edges)[0]
    return Rootogram(edges, counts, np.sqrt(counts.astype(float)))


def predict_from_levels(model: LogitMixtureModel, valuation: float,
                        levels: dict) -> float:
    """Predict from raw factor levels using the training dummy layout."""
    if model.factor_levels is None:
        raise ValueError("model carries no factor metadata")
    w = np.zeros(len(model.concomitant_columns))
    w[model.concomitant_columns.index("(Intercept)")] = 1.0
    for factor, level in levels.items():
        known = model.factor_levels.get(factor)
        if known is None or level not in known:
            raise UnknownLevel(factor, level)
        col = f"{factor}[{level}]"
        if col in model.concomitant_columns:
            w[model.concomitant_columns.index(col)] = 1.0
    return float(model.predict([valuation], w[None, :])[0])


def concomitant_design(assignments, months) -> tuple:
    """Dummy design for (source cluster, grade cluster, month) concomitants."""
    n = len(assignments)
    factors = {
        "source": [f"S{a.source_cluster}" for a in assignments],
        "grade": [f"G{a.grade_cluster}" for a in assignments],
        "month": [f"M{m:02d}" for m in months],
    }
    design = build_design(n, factors=factors)
    return design.X, design.columns, design.factor_levels
