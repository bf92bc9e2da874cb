"""Gibbs sampler for the three-stage latent hierarchical model.

One systematic-scan sweep updates the state block (Z_t for every t), the
common-value block (W for every observed (group, time)), then the parameter
blocks theta, R, F, Q, Gamma, S. Inside the two latent blocks the sites are
visited in a fixed red-black order (odd times before even times, odd chain
positions before even ones): neighbouring sites in the same half are
conditionally independent, which lets every half-step draw in one batched
operation without changing any conditional.

The state is renormalized to unit length immediately after each draw
(projected Gibbs, implementing the identifiability constraint as hard).
Each retained draw also records the two derived causal statistics: the
residualized valuation->price regression coefficient and the residual
correlation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from ..errors import (
    DivergentChain,
    InsufficientDf,
    NonPdScale,
    SingularPrecision,
)
from .params import TslhParams
from .structure import TslhDataset, TslhStructure
from .model import theta_design

R_FLOOR = 1e-10
Q_FLOOR = 1e-12

SCALAR_KEYS = ("phi0", "phi", "beta1", "beta2", "beta3", "R",
               "gamma_v", "gamma_p", "S_vv", "S_vp", "S_pp",
               "gamma_pv_tilde", "r_pv")
MONITORED_KEYS = ("phi", "R", "S_vv", "S_vp", "S_pp")


@dataclass
class PosteriorChain:
    chain_id: int
    seed: int
    n_iterations: int
    burn_in: int
    thin: int
    draws: dict                      # key -> (n_retained,) or (n_retained, k)
    x_columns: list
    w_mean: np.ndarray               # (E,) posterior mean common values
    yhat_mean: np.ndarray            # (M, 2) posterior mean log predictions
    w_draws: Optional[np.ndarray] = None

    @property
    def n_retained(self) -> int:
        return len(self.draws["phi"])


def _inverse_wishart(rng, psi, df):
    """Bartlett-decomposition draw from InvWishart(psi, df)."""
    p = psi.shape[0]
    if df < p:
        raise InsufficientDf("inverse-wishart", df, p)
    try:
        lp = np.linalg.cholesky(psi)
    except np.linalg.LinAlgError as exc:
        raise NonPdScale("inverse-wishart scale") from exc
    a = np.zeros((p, p))
    for i in range(p):
        a[i, i] = math.sqrt(rng.chisquare(df - i))
    if p > 1:
        idx = np.tril_indices(p, -1)
        a[idx] = rng.standard_normal(len(idx[0]))
    t = lp @ solve_triangular(a, np.eye(p), lower=True).T
    return t @ t.T


def _initial_state(dataset: TslhDataset, rng) -> tuple:
    """Data-driven starting point: per-coordinate volume regressions for the
    loadings, residual means for the common values, jittered uniform states."""
    s = dataset.structure
    y = dataset.y
    u = s.u
    uc = u - u.mean()
    denom = float(uc @ uc)
    gamma0 = np.array([
        float(uc @ (y[:, k] - y[:, k].mean())) / denom if denom > 0 else 0.0
        for k in range(2)
    ])
    resid = y - np.outer(u, gamma0)
    w0 = np.zeros(s.n_obs)
    np.add.at(w0, s.lot_obs, resid.mean(axis=1))
    w0 /= np.maximum(s.repeat_counts, 1)

    D = s.state_dim
    Z = rng.normal(0.0, 0.1, size=(s.n_times + 1, D)) + 1.0 / math.sqrt(D)
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    Z[0] = np.full(D, 1.0 / math.sqrt(D))

    eps = resid - w0[s.lot_obs][:, None]
    S0 = eps.T @ eps / max(s.n_lots, 1) + 1e-3 * np.eye(2)
    params = TslhParams(
        F=0.5 * np.eye(D), Q=0.05 * np.eye(D),
        phi0=0.0, phi=0.5, beta=np.zeros(3),
        H=np.zeros(s.X.shape[1]), R=max(float(np.var(w0)), 0.1),
        gamma=gamma0, S=S0)
    return Z, w0.copy(), params


class _SweepWorkspace:
    """Static index arrays shared by every sweep of one chain."""

    def __init__(self, structure: TslhStructure):
        s = structure
        self.s = s
        T, C = s.n_times, s.state_dim
        self.M1, self.M2, self.M3 = s.masks
        self.N_tc = np.zeros((T, C))
        np.add.at(self.N_tc, (s.obs_time - 1, s.obs_combo), 1.0)
        self.has_prev = s.prev_index >= 0
        self.has_next = s.next_index >= 0
        self.prev_safe = np.maximum(s.prev_index, 0)
        self.next_safe = np.maximum(s.next_index, 0)
        # chain position parity for the red-black W scan
        pos = np.zeros(s.n_obs, dtype=int)
        order = np.lexsort((s.obs_time, s.obs_group))
        for a, b in zip(order[:-1], order[1:]):
            if s.obs_group[a] == s.obs_group[b]:
                pos[b] = pos[a] + 1
        self.w_colors = (pos % 2 == 0, pos % 2 == 1)
        ts = np.arange(1, T + 1)
        self.z_colors = (ts[ts % 2 == 1], ts[ts % 2 == 0])
        self.seg_index = (s.obs_time - 1) * C + s.obs_combo
        self.t_idx = s.obs_time - 1
        self.c_idx = s.obs_combo


def _sweep(ws: _SweepWorkspace, y, Z, W, params: TslhParams, rng, q_mode: str):
    s = ws.s
    T, D = s.n_times, s.state_dim
    E, M = s.n_obs, s.n_lots

    # --- Z block -------------------------------------------------------------
    if q_mode == "diagonal":
        qdiag = np.diag(params.Q)
        Qi = np.diag(1.0 / qdiag)
    else:
        Qi = np.linalg.inv(params.Q)
    QiF = Qi @ params.F
    FtQi = params.F.T @ Qi
    FtQiF = params.F.T @ QiF

    g_rows = (params.beta[0] * ws.M1 + params.beta[1] * ws.M2
              + params.beta[2] * ws.M3)                       # (C, D)
    outers = np.einsum("ci,cj->cij", g_rows, g_rows)
    P_data = np.einsum("tc,cij->tij", ws.N_tc, outers) / params.R   # (T, D, D)

    hx = s.X @ params.H
    w_prev = np.where(ws.has_prev, W[ws.prev_safe], 0.0)
    resid = W - params.phi0 - params.phi * w_prev - hx
    seg = np.bincount(ws.seg_index, weights=resid, minlength=T * D)
    rhs_data = seg.reshape(T, D) @ g_rows / params.R               # (T, D)

    for ts in ws.z_colors:
        k = len(ts)
        if k == 0:
            continue
        interior = (ts < T).astype(float)[:, None]
        P = Qi[None, :, :] + P_data[ts - 1] \
            + FtQiF[None, :, :] * interior[:, :, None]
        b = Z[ts - 1] @ QiF.T + rhs_data[ts - 1]
        b += (Z[np.minimum(ts + 1, T)] @ FtQi.T) * interior
        try:
            L = np.linalg.cholesky(P)
        except np.linalg.LinAlgError as exc:
            raise SingularPrecision("Z") from exc
        mean = np.linalg.solve(P, b[:, :, None])[:, :, 0]
        z = rng.standard_normal((k, D))
        dev = np.linalg.solve(np.swapaxes(L, 1, 2), z[:, :, None])[:, :, 0]
        draw = mean + dev
        Z[ts] = draw / np.linalg.norm(draw, axis=1, keepdims=True)

    zt1 = Z[1:] @ ws.M1.T
    zt2 = Z[1:] @ ws.M2.T
    zt3 = Z[1:] @ ws.M3.T
    gz = params.beta[0] * zt1 + params.beta[1] * zt2 + params.beta[2] * zt3
    gz_e = gz[ws.t_idx, ws.c_idx]

    # --- W block -------------------------------------------------------------
    Si = np.linalg.inv(params.S)
    a_vec = Si @ np.ones(2)
    s11 = float(a_vec.sum())
    v_m = (y - np.outer(s.u, params.gamma)) @ a_vec
    data_term = np.bincount(s.lot_obs, weights=v_m, minlength=E)
    prec = (1.0 + params.phi ** 2 * ws.has_next) / params.R \
        + s.repeat_counts * s11
    noise = rng.standard_normal(E) / np.sqrt(prec)
    for color in ws.w_colors:
        w_prev = np.where(ws.has_prev, W[ws.prev_safe], 0.0)
        w_next = np.where(ws.has_next, W[ws.next_safe], 0.0)
        ahead = np.where(
            ws.has_next,
            w_next - params.phi0 - gz_e[ws.next_safe] - hx[ws.next_safe], 0.0)
        lin = (params.phi0 + params.phi * w_prev + gz_e + hx) / params.R \
            + params.phi * ahead / params.R + data_term
        W[color] = lin[color] / prec[color] + noise[color]

    # --- parameter blocks ------------------------------------------------------
    Xtheta = np.column_stack([
        np.ones(E), np.where(ws.has_prev, W[ws.prev_safe], 0.0),
        zt1[ws.t_idx, ws.c_idx], zt2[ws.t_idx, ws.c_idx], zt3[ws.t_idx, ws.c_idx],
        s.X,
    ])
    A = Xtheta.T @ Xtheta
    A[np.diag_indices_from(A)] += 1e-12 * (np.trace(A) / A.shape[0] + 1.0)
    bvec = Xtheta.T @ W
    try:
        LA = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise SingularPrecision("theta") from exc
    mean_theta = np.linalg.solve(A, bvec)
    z = rng.standard_normal(len(bvec))
    theta = mean_theta + math.sqrt(params.R) * solve_triangular(LA.T, z, lower=False)
    params = params.with_theta(theta)

    resid = W - Xtheta @ theta
    shape_r = E / 2.0 - 1.0
    if shape_r <= 0:
        raise InsufficientDf("R", E, 3)
    params.R = max(float((resid @ resid) / 2.0 / rng.gamma(shape_r)), R_FLOOR)

    Zprev = Z[:-1]
    A_f = Zprev.T @ Zprev
    A_f[np.diag_indices_from(A_f)] += 1e-10 * (np.trace(A_f) / D + 1.0)
    B_f = Z[1:].T @ Zprev
    try:
        C_f = np.linalg.cholesky(A_f)
    except np.linalg.LinAlgError as exc:
        raise SingularPrecision("F") from exc
    mean_f = np.linalg.solve(A_f, B_f.T).T
    G = rng.standard_normal((D, D))
    right = solve_triangular(C_f, G.T, lower=True, trans="T").T   # G @ C^{-1}
    if q_mode == "diagonal":
        params.F = mean_f + np.sqrt(np.diag(params.Q))[:, None] * right
    else:
        params.F = mean_f + np.linalg.cholesky(params.Q) @ right

    xi = Z[1:] - Zprev @ params.F.T
    if q_mode == "diagonal":
        if T <= 2:
            raise InsufficientDf("Q", T, 3)
        scale = np.sum(xi ** 2, axis=0) / 2.0
        draws = rng.gamma((T - 2.0) / 2.0, 1.0, size=D)
        params.Q = np.diag(np.maximum(scale / draws, Q_FLOOR))
    else:
        psi = xi.T @ xi
        psi = (psi + psi.T) / 2.0
        if q_mode == "ridge":
            psi += np.eye(D)
            df = T - (D + 1) + (D + 2)
        else:
            df = T - (D + 1)
        if df < D:
            raise InsufficientDf("Q", df, D)
        params.Q = _inverse_wishart(rng, psi, df)

    vres = y - W[s.lot_obs][:, None]
    c_u = float(s.u @ s.u)
    if c_u <= 0:
        raise SingularPrecision("gamma")
    mean_g = vres.T @ s.u / c_u
    params.gamma = mean_g + np.linalg.cholesky(params.S) @ \
        rng.standard_normal(2) / math.sqrt(c_u)

    eps = vres - np.outer(s.u, params.gamma)
    psi_s = eps.T @ eps
    psi_s = (psi_s + psi_s.T) / 2.0
    df_s = M - 3
    params.S = _inverse_wishart(rng, psi_s, df_s)
    return params


def derived_statistics(structure: TslhStructure, y, W, gamma):
    """Residualized regression coefficient and residual correlation.

    x-residual: log valuation minus common value minus volume effect;
    y-residual: same for log price. The coefficient is the centered OLS
    slope of the y-residual on the x-residual, which makes it invariant to
    rescaling every lot volume by a constant.
    """
    wm = W[structure.lot_obs]
    x_res = y[:, 0] - wm - gamma[0] * structure.u
    y_res = y[:, 1] - wm - gamma[1] * structure.u
    xc = x_res - x_res.mean()
    yc = y_res - y_res.mean()
    sxx = float(xc @ xc)
    sxy = float(xc @ yc)
    syy = float(yc @ yc)
    slope = sxy / sxx if sxx > 0 else 0.0
    corr = sxy / math.sqrt(sxx * syy) if sxx > 0 and syy > 0 else 0.0
    return slope, corr


def run_chain(dataset: TslhDataset, chain_id: int, seed_seq, n_iter: int,
              burn_in: int, thin: int, q_mode: str,
              store_w: bool = False, master_seed: int = 0) -> PosteriorChain:
    s = dataset.structure
    y = dataset.y
    rng = np.random.default_rng(seed_seq)
    Z, W, params = _initial_state(dataset, rng)
    ws = _SweepWorkspace(s)

    n_retained = (n_iter - burn_in + thin - 1) // thin
    kx = s.X.shape[1]
    draws = {k: np.empty(n_retained) for k in SCALAR_KEYS}
    draws["H"] = np.empty((n_retained, kx))
    w_draws = np.empty((n_retained, s.n_obs)) if store_w else None
    w_sum = np.zeros(s.n_obs)
    yhat_sum = np.zeros((s.n_lots, 2))

    kept = 0
    for it in range(n_iter):
        params = _sweep(ws, y, Z, W, params, rng, q_mode)
        if not (np.isfinite(W @ W) and np.isfinite(params.R)
                and np.isfinite(params.theta() @ params.theta())):
            raise DivergentChain(chain_id, it)
        if it >= burn_in and (it - burn_in) % thin == 0:
            slope, corr = derived_statistics(s, y, W, params.gamma)
            draws["phi0"][kept] = params.phi0
            draws["phi"][kept] = params.phi
            draws["beta1"][kept] = params.beta[0]
            draws["beta2"][kept] = params.beta[1]
            draws["beta3"][kept] = params.beta[2]
            draws["R"][kept] = params.R
            draws["gamma_v"][kept] = params.gamma[0]
            draws["gamma_p"][kept] = params.gamma[1]
            draws["S_vv"][kept] = params.S[0, 0]
            draws["S_vp"][kept] = params.S[0, 1]
            draws["S_pp"][kept] = params.S[1, 1]
            draws["gamma_pv_tilde"][kept] = slope
            draws["r_pv"][kept] = corr
            draws["H"][kept] = params.H
            if store_w:
                w_draws[kept] = W
            w_sum += W
            yhat_sum += W[s.lot_obs][:, None] + np.outer(s.u, params.gamma)
            kept += 1
    assert kept == n_retained
    return PosteriorChain(
        chain_id=chain_id, seed=master_seed,
        n_iterations=n_iter, burn_in=burn_in, thin=thin, draws=draws,
        x_columns=list(s.x_columns),
        w_mean=w_sum / max(kept, 1), yhat_mean=yhat_sum / max(kept, 1),
        w_draws=w_draws)


def run_gibbs(dataset: TslhDataset, n_chains: int = 4, n_iter: int = 5000,
              burn_in: int = 2000, thin: int = 3, seed: int = 0,
              q_mode: str = "diagonal", store_w: bool = False) -> list:
    """Run independent chains; fully reproducible for a given (seed, chain)."""
    if n_chains < 1:
        raise ValueError("need at least one chain")
    if n_iter <= burn_in:
        raise ValueError("iterations must exceed burn-in")
    if thin < 1:
        raise ValueError("thinning must be >= 1")
    if q_mode not in ("diagonal", "full", "ridge"):
        raise ValueError(f"unknown q_mode {q_mode!r}")
    seeds = np.random.SeedSequence(seed).spawn(n_chains)
    return [
        run_chain(dataset, c, seeds[c], n_iter, burn_in, thin, q_mode,
                  store_w, master_seed=seed)
        for c in range(n_chains)
    ]


def pooled(chains, key) -> np.ndarray:
    return np.concatenate([c.draws[key] for c in chains])


def split_rhat(chains, key) -> float:
    """Split-chain potential scale reduction factor."""
    halves = []
    for c in chains:
        x = c.draws[key]
        n = len(x) // 2
        if n >= 2:
            halves.append(x[:n])
            halves.append(x[n:2 * n])
    if len(halves) < 2:
        return float("nan")
    seqs = np.array(halves)
    m, n = seqs.shape
    means = seqs.mean(axis=1)
    within = seqs.var(axis=1, ddof=1).mean()
    between = n * means.var(ddof=1)
    if within <= 0:
        return 1.0
    var_hat = (n - 1) / n * within + between / n
    return float(math.sqrt(var_hat / within))


def convergence_report(chains) -> dict:
    return {key: split_rhat(chains, key) for key in MONITORED_KEYS}
