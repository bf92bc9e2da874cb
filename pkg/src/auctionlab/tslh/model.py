"""Joint log-density of the three-stage model and its full conditionals.

Everything is conjugate under the flat prior implied by the likelihood:
states and the common values are Gaussian, the transition and observation
loadings are matrix normal, the innovation scales are inverse gamma /
inverse Wishart. The helpers here return the *parameters* of each block's
conditional; sampling lives in gibbs.py, and the correctness tests compare
these against direct numerical optimization of ``log_joint``.

Degrees of freedom follow the likelihood exponents: the full-state
innovation covariance gets an inverse Wishart with df T - (D + 1), the
observation covariance df N - 3 (two coordinates), and the common-value
variance an inverse gamma with shape E/2 - 1. In the diagonal state mode
each coordinate gets an inverse gamma with shape (T - 2)/2, whose mode
matches the joint-density maximizer exactly.
"""

from __future__ import annotations

import math

import numpy as np

from .params import TslhParams
from .structure import TslhStructure

LOG_2PI = math.log(2.0 * math.pi)


def _stage2_means(structure: TslhStructure, Z, W, params: TslhParams):
    gz = structure.gz_by_time(params.beta, Z)
    gz_e = gz[structure.obs_time - 1, structure.obs_combo]
    hx = structure.X @ params.H
    prev = structure.prev_index
    w_prev = np.where(prev >= 0, W[np.maximum(prev, 0)], 0.0)
    return params.phi0 + params.phi * w_prev + gz_e + hx


def log_joint(structure: TslhStructure, y, Z, W, params: TslhParams) -> float:
    """Complete-data log density of (Z_1..T, W, y) given the parameters."""
    T = structure.n_times
    D = structure.state_dim
    Qi = np.linalg.inv(params.Q)
    sign, logdet_q = np.linalg.slogdet(params.Q)
    xi = Z[1:] - Z[:-1] @ params.F.T
    stage1 = -0.5 * T * (D * LOG_2PI + logdet_q) \
        - 0.5 * float(np.einsum("ti,ij,tj->", xi, Qi, xi))

    mu = _stage2_means(structure, Z, W, params)
    resid = W - mu
    E = structure.n_obs
    stage2 = -0.5 * E * (LOG_2PI + math.log(params.R)) \
        - 0.5 * float(resid @ resid) / params.R

    Si = np.linalg.inv(params.S)
    _, logdet_s = np.linalg.slogdet(params.S)
    eps = y - W[structure.lot_obs][:, None] - np.outer(structure.u, params.gamma)
    M = structure.n_lots
    stage3 = -0.5 * M * (2.0 * LOG_2PI + logdet_s) \
        - 0.5 * float(np.einsum("mi,ij,mj->", eps, Si, eps))
    return stage1 + stage2 + stage3


# ---------------------------------------------------------------------------
# latent-block conditionals
# ---------------------------------------------------------------------------

def z_conditional(structure: TslhStructure, Z, W, params: TslhParams, t: int):
    """Precision and linear coefficient of the Gaussian conditional of Z_t.

    The mean is precision^{-1} times the linear coefficient. For t = T the
    forward smoothing term is absent; Z_0 is fixed, never updated.
    """
    from .structure import gg_row

    D = structure.state_dim
    Qi = np.linalg.inv(params.Q)
    P = Qi.copy()
    b = Qi @ (params.F @ Z[t - 1])
    if t < structure.n_times:
        P += params.F.T @ Qi @ params.F
        b += params.F.T @ Qi @ Z[t + 1]
    hx = structure.X @ params.H
    prev = structure.prev_index
    for e in np.where(structure.obs_time == t)[0]:
        g = gg_row(params.beta, structure.obs_combo[e], structure.masks)
        P += np.outer(g, g) / params.R
        w_prev = W[prev[e]] if prev[e] >= 0 else 0.0
        resid = W[e] - params.phi0 - params.phi * w_prev - hx[e]
        b += g * resid / params.R
    return P, b


def w_conditional(structure: TslhStructure, y, Z, W, params: TslhParams, e: int):
    """Precision and linear coefficient of the scalar conditional of W_e."""
    gz = structure.gz_by_time(params.beta, Z)
    hx = structure.X @ params.H
    Si = np.linalg.inv(params.S)
    ones = np.ones(2)
    s11 = float(ones @ Si @ ones)
    r_e = int(structure.repeat_counts[e])
    has_next = structure.next_index[e] >= 0

    prec = (1.0 + params.phi ** 2 * has_next) / params.R + r_e * s11
    prev = structure.prev_index[e]
    mu_own = params.phi0 + gz[structure.obs_time[e] - 1, structure.obs_combo[e]] + hx[e]
    if prev >= 0:
        mu_own += params.phi * W[prev]
    lin = mu_own / params.R
    if has_next:
        nxt = structure.next_index[e]
        ahead = (W[nxt] - params.phi0
                 - gz[structure.obs_time[nxt] - 1, structure.obs_combo[nxt]]
                 - hx[nxt])
        lin += params.phi * ahead / params.R
    a = Si @ ones
    for m in np.where(structure.lot_obs == e)[0]:
        lin += float(a @ (y[m] - params.gamma * structure.u[m]))
    return float(prec), float(lin)


# ---------------------------------------------------------------------------
# parameter-block conditionals
# ---------------------------------------------------------------------------

def theta_design(structure: TslhStructure, Z, W) -> np.ndarray:
    """Stage-2 regression design [1, W_prev, Ztilde1..3, X] with the lagged
    common value zeroed at each group's first appearance."""
    zt1, zt2, zt3 = structure.ztilde_by_time(Z)
    t_idx = structure.obs_time - 1
    c_idx = structure.obs_combo
    prev = structure.prev_index
    w_prev = np.where(prev >= 0, W[np.maximum(prev, 0)], 0.0)
    return np.column_stack([
        np.ones(structure.n_obs), w_prev,
        zt1[t_idx, c_idx], zt2[t_idx, c_idx], zt3[t_idx, c_idx],
        structure.X,
    ])


def theta_conditional(structure: TslhStructure, Z, W):
    """Normal conditional of theta = [phi0, phi, beta1..3, H]: returns (A, b)
    with mean A^{-1} b and covariance A^{-1} R."""
    X = theta_design(structure, Z, W)
    return X.T @ X, X.T @ W, X


def r_conditional(structure: TslhStructure, W, design, theta):
    """Inverse-gamma conditional of R: shape E/2 - 1, scale sum e^2 / 2."""
    resid = W - design @ theta
    return structure.n_obs / 2.0 - 1.0, float(resid @ resid) / 2.0


def f_conditional(Z):
    """Matrix-normal conditional of F: mean B A^{-1}, row covariance Q,
    column covariance A^{-1}, with A = sum Z_{t-1} Z_{t-1}' and
    B = sum Z_t Z_{t-1}'."""
    prev = Z[:-1]
    A = prev.T @ prev
    B = Z[1:].T @ prev
    return A, B


def q_conditional_diag(Z, F):
    """Per-coordinate inverse-gamma conditional of diag(Q):
    shape (T - 2)/2, scale sum_t xi_{t,i}^2 / 2."""
    xi = Z[1:] - Z[:-1] @ F.T
    T = xi.shape[0]
    return (T - 2.0) / 2.0, np.sum(xi ** 2, axis=0) / 2.0


def q_conditional_full(Z, F):
    """Inverse-Wishart conditional of Q: scale sum xi xi', df T - (D + 1)."""
    xi = Z[1:] - Z[:-1] @ F.T
    T, D = xi.shape
    psi = xi.T @ xi
    return (psi + psi.T) / 2.0, T - (D + 1)


def gamma_conditional(structure: TslhStructure, y, W):
    """Normal conditional of the volume loadings: mean sum (y - W 1) u / sum u^2,
    covariance S / sum u^2."""
    vres = y - W[structure.lot_obs][:, None]
    c = float(structure.u @ structure.u)
    return vres.T @ structure.u / c, c


def s_conditional(structure: TslhStructure, y, W, gamma):
    """Inverse-Wishart conditional of S: scale sum eps eps', df M - 3."""
    eps = y - W[structure.lot_obs][:, None] - np.outer(structure.u, gamma)
    psi = eps.T @ eps
    return (psi + psi.T) / 2.0, structure.n_lots - 3
