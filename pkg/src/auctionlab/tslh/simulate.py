"""Forward simulation of the three-stage model and synthetic structures.

The generator follows the model equations exactly as the sampler assumes
them: the state is renormalized to unit norm after every innovation, a
group's first appearance drops the autoregressive common-value term, and an
optional direct arrow adds gamma_pv times the realized log valuation to the
log price coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidCovariance
from .params import TslhParams
from .structure import TslhDataset, TslhStructure, build_exogenous, _chain_links


@dataclass
class SimulationResult:
    dataset: TslhDataset
    Z: np.ndarray        # (T+1, D) unit-norm states, row 0 is the fixed start
    W: np.ndarray        # (E,) common values


def uniform_state(dim: int) -> np.ndarray:
    return np.full(dim, 1.0 / np.sqrt(dim))


def synthetic_structure(n_grade: int, n_source: int, n_times: int,
                        groups_per_combo: int = 1, mean_repeats: float = 3.0,
                        seed: int = 0, volume_log_mean: float = 5.0,
                        volume_log_sd: float = 0.5,
                        variant_fraction: float = 0.25) -> TslhStructure:
    """Dense synthetic layout: every group observed at every time.

    Lot volumes are log-normal; repeats per (group, time) are 1 + Poisson.
    The lagged-volume exogenous columns are rebuilt from the generated
    volumes so the structure is self-consistent.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5752]))
    n_groups = n_grade * n_source * groups_per_combo
    combos = np.repeat(np.arange(n_grade * n_source), groups_per_combo)
    variants = []
    variant_pool = ("Clonal", "Gold", "Royal", "Special")
    for g in range(n_groups):
        if rng.random() < variant_fraction:
            variants.append(variant_pool[int(rng.integers(len(variant_pool)))])
        else:
            variants.append("Regular")

    obs_group = np.repeat(np.arange(n_groups), n_times)
    obs_time = np.tile(np.arange(1, n_times + 1), n_groups)
    repeats = 1 + rng.poisson(max(mean_repeats - 1.0, 0.0), size=len(obs_group))

    lot_obs = np.repeat(np.arange(len(obs_group)), repeats)
    lot_volumes = rng.lognormal(volume_log_mean, volume_log_sd, size=len(lot_obs))
    u = np.log(lot_volumes)

    volume = np.zeros((n_groups, n_times + 1))
    np.add.at(volume, (obs_group[lot_obs], obs_time[lot_obs]), lot_volumes)

    prev_index, next_index = _chain_links(obs_group, obs_time)
    X, x_cols, variant_levels, replaced = build_exogenous(
        obs_group, obs_time, combos, variants, volume, n_grade, n_source)
    return TslhStructure(
        n_grade=n_grade, n_source=n_source, n_times=n_times,
        group_combo=combos, group_variant=variants,
        obs_group=obs_group, obs_time=obs_time, X=X,
        prev_index=prev_index, next_index=next_index,
        lot_obs=lot_obs, u=u, x_columns=x_cols,
        variant_levels=variant_levels, zero_volume_replacements=replaced,
        group_names=[f"group_{g}" for g in range(n_groups)])


def _covariance_draw(rng, cov, size):
    cov = np.asarray(cov, dtype=float)
    if np.allclose(cov, 0.0):
        return np.zeros((size, cov.shape[0]))
    try:
        chol = np.linalg.cholesky(cov + 1e-300 * np.eye(cov.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise InvalidCovariance("simulation covariance") from exc
    return rng.standard_normal((size, cov.shape[0])) @ chol.T


def simulate(structure: TslhStructure, params: TslhParams, seed: int = 0,
             noise_free: bool = False) -> SimulationResult:
    """Generate latents and observations, deterministic for a given seed.

    With ``noise_free`` all covariance draws are zeros, so Q = 0 with F = I
    keeps the state frozen and S = 0 with gamma = 0 collapses both
    observation coordinates onto the common value.
    """
    params.validate(noise_free=noise_free)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x51]))
    T = structure.n_times
    D = structure.state_dim
    Z = np.empty((T + 1, D))
    Z[0] = uniform_state(D)
    xi = (np.zeros((T, D)) if noise_free
          else _covariance_draw(rng, params.Q, T))
    for t in range(1, T + 1):
        z = params.F @ Z[t - 1] + xi[t - 1]
        Z[t] = z / np.linalg.norm(z)

    gz = structure.gz_by_time(params.beta, Z)        # (T, C)
    hx = structure.X @ params.H
    E = structure.n_obs
    W = np.empty(E)
    e_noise = (np.zeros(E) if noise_free or params.R == 0
               else rng.normal(0.0, np.sqrt(params.R), size=E))
    order = np.lexsort((structure.obs_time, structure.obs_group))
    combos = structure.obs_combo
    for e in order:
        mu = params.phi0 + gz[structure.obs_time[e] - 1, combos[e]] + hx[e]
        if structure.prev_index[e] >= 0:
            mu += params.phi * W[structure.prev_index[e]]
        W[e] = mu + e_noise[e]

    M = structure.n_lots
    eps = (np.zeros((M, 2)) if noise_free
           else _covariance_draw(rng, params.S, M))
    base = W[structure.lot_obs][:, None] + np.outer(structure.u, params.gamma)
    y = base + eps
    if params.gamma_pv != 0.0:
        y[:, 1] += params.gamma_pv * y[:, 0]
    return SimulationResult(TslhDataset(structure, y), Z, W)
