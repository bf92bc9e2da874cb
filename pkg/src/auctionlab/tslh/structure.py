"""Index structure of the three-stage latent hierarchical model.

The latent market state Z_t lives on the grade-cluster x source-cluster
grid, flattened row-major: coordinate (i, j) with grade cluster i = 1..GC
and source cluster j = 1..SC sits at flat index (i-1)*SC + (j-1). A group g
is one (garden, grade) combination with cluster coordinates (i0, j0); its
loading row over Z picks the own cell with beta1, the other grade clusters
of the same source cluster with beta2, and the other source clusters of the
same grade cluster with beta3.

Stage-2 observations (one per observed (group, time)) are stored flat with
previous/next links along each group's observation chain; stage-3 rows (one
per lot) point back at their stage-2 row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

VARIANT_ORDER = ("Clonal", "Gold", "Royal", "Special")


def flat_index(i: int, j: int, n_source: int) -> int:
    """0-based state coordinate of grade cluster i, source cluster j (1-based)."""
    return (i - 1) * n_source + (j - 1)


def combo_masks(n_grade: int, n_source: int):
    """Per-combo 0/1 masks (C x D) for the direct, same-source-cluster and
    same-grade-cluster loadings; combo c is the flat index of its own cell."""
    D = n_grade * n_source
    M1 = np.zeros((D, D))
    M2 = np.zeros((D, D))
    M3 = np.zeros((D, D))
    for i in range(1, n_grade + 1):
        for j in range(1, n_source + 1):
            c = flat_index(i, j, n_source)
            M1[c, c] = 1.0
            for i2 in range(1, n_grade + 1):
                if i2 != i:
                    M2[c, flat_index(i2, j, n_source)] = 1.0
            for j2 in range(1, n_source + 1):
                if j2 != j:
                    M3[c, flat_index(i, j2, n_source)] = 1.0
    return M1, M2, M3


def gg_row(beta, combo: int, masks) -> np.ndarray:
    """Dense loading row G_g over the state vector for one cluster combo."""
    M1, M2, M3 = masks
    return beta[0] * M1[combo] + beta[1] * M2[combo] + beta[2] * M3[combo]


def gg_product(beta, z, combo: int, masks) -> float:
    """beta1 * own cell + beta2 * same-source others + beta3 * same-grade others."""
    M1, M2, M3 = masks
    return float(beta[0] * (M1[combo] @ z) + beta[1] * (M2[combo] @ z)
                 + beta[2] * (M3[combo] @ z))


@dataclass
class TslhStructure:
    """Static layout of one dataset: clusters, groups, exogenous variables."""
    n_grade: int
    n_source: int
    n_times: int                     # T; state times run 0..T with Z_0 fixed
    group_combo: np.ndarray          # (n_groups,) flat combo per group
    group_variant: list              # per-group garden variant label
    obs_group: np.ndarray            # (E,) stage-2 rows: group index
    obs_time: np.ndarray             # (E,) time 1..T
    X: np.ndarray                    # (E, kx) stage-2 exogenous rows
    prev_index: np.ndarray           # (E,) previous obs of same group or -1
    next_index: np.ndarray           # (E,) next obs of same group or -1
    lot_obs: np.ndarray              # (M,) stage-3 rows: stage-2 row index
    u: np.ndarray                    # (M,) log lot volume
    x_columns: list = field(default_factory=list)
    variant_levels: list = field(default_factory=list)
    zero_volume_replacements: int = 0
    week_of_time: Optional[list] = None   # (year, week) per time index, data builds
    group_names: Optional[list] = None

    def __post_init__(self):
        self._masks = combo_masks(self.n_grade, self.n_source)
        self.repeat_counts = np.bincount(self.lot_obs, minlength=self.n_obs)

    @property
    def state_dim(self) -> int:
        return self.n_grade * self.n_source

    @property
    def n_groups(self) -> int:
        return len(self.group_combo)

    @property
    def n_obs(self) -> int:
        return len(self.obs_group)

    @property
    def n_lots(self) -> int:
        return len(self.lot_obs)

    @property
    def masks(self):
        return self._masks

    @property
    def obs_combo(self) -> np.ndarray:
        return self.group_combo[self.obs_group]

    def gz_by_time(self, beta, Z) -> np.ndarray:
        """(T, C) table of G_c Z_t for every combo c and time t = 1..T."""
        M1, M2, M3 = self._masks
        Mbeta = beta[0] * M1 + beta[1] * M2 + beta[2] * M3
        return Z[1:] @ Mbeta.T

    def ztilde_by_time(self, Z):
        """Three (T, C) tables of the mask products entering the theta design."""
        M1, M2, M3 = self._masks
        return Z[1:] @ M1.T, Z[1:] @ M2.T, Z[1:] @ M3.T


def _chain_links(obs_group, obs_time):
    order = np.lexsort((obs_time, obs_group))
    E = len(obs_group)
    prev_index = np.full(E, -1, dtype=int)
    next_index = np.full(E, -1, dtype=int)
    for a, b in zip(order[:-1], order[1:]):
        if obs_group[a] == obs_group[b]:
            prev_index[b] = a
            next_index[a] = b
    return prev_index, next_index


def log_with_floor(values, floor_reference):
    """log(v) with zeros replaced by log(half the minimum positive value)."""
    values = np.asarray(values, dtype=float)
    positive = floor_reference[floor_reference > 0]
    fallback = 0.5 * positive.min() if positive.size else 1.0
    replaced = int(np.sum(values <= 0))
    return np.log(np.where(values > 0, values, fallback)), replaced


def build_exogenous(obs_group, obs_time, group_combo, group_variant,
                    volume_by_group_time, n_grade, n_source,
                    variant_levels=None):
    """Stage-2 exogenous block: three lagged log-volume columns + variant dummies.

    ``volume_by_group_time`` is a (n_groups, T+1) array of offered volume per
    group and time (column 0 unused). Lags aggregate over the previous time
    index: the group itself, every group sharing its grade cluster, and
    every group sharing its source cluster. Zero lagged volumes take the
    log of half the smallest positive value of their column.
    """
    E = len(obs_group)
    n_groups, _ = volume_by_group_time.shape
    grade_of_group = group_combo // n_source
    source_of_group = group_combo % n_source
    grade_tot = np.zeros((n_grade, volume_by_group_time.shape[1]))
    source_tot = np.zeros((n_source, volume_by_group_time.shape[1]))
    for g in range(n_groups):
        grade_tot[grade_of_group[g]] += volume_by_group_time[g]
        source_tot[source_of_group[g]] += volume_by_group_time[g]

    own_prev = volume_by_group_time[obs_group, obs_time - 1]
    grade_prev = grade_tot[grade_of_group[obs_group], obs_time - 1]
    source_prev = source_tot[source_of_group[obs_group], obs_time - 1]
    cols = []
    names = ["log_prev_volume_own", "log_prev_volume_grade", "log_prev_volume_source"]
    replaced = 0
    for series in (own_prev, grade_prev, source_prev):
        logged, nrep = log_with_floor(series, series)
        cols.append(logged)
        replaced += nrep
    if variant_levels is None:
        variant_levels = [v for v in VARIANT_ORDER
                          if any(gv == v for gv in group_variant)]
    for v in variant_levels:
        cols.append(np.array([1.0 if group_variant[g] == v else 0.0
                              for g in obs_group]))
        names.append(f"variant_{v}")
    return np.column_stack(cols), names, list(variant_levels), replaced


@dataclass
class TslhDataset:
    """A structure plus its bivariate observations (log valuation, log price)."""
    structure: TslhStructure
    y: np.ndarray                    # (M, 2)

    def __post_init__(self):
        assert self.y.shape == (self.structure.n_lots, 2)


def from_lots(records_with_assignments, n_grade: int = 6, n_source: int = 7
              ) -> TslhDataset:
    """Assemble a TSLH dataset from (LotRecord, ClusterAssignment) pairs.

    Sold lots supply the bivariate observations; every offered lot's volume
    feeds the lagged-volume exogenous columns. Times index the sorted
    distinct (year, week) pairs present, so "previous week" means the
    previous auction week.
    """
    pairs = [(r, a) for r, a in records_with_assignments if not a.excluded]
    weeks = sorted({(r.year, r.week) for r, _ in pairs})
    time_of = {wk: t for t, wk in enumerate(weeks, start=1)}
    T = len(weeks)

    group_key_of = {}
    group_combo = []
    group_variant = []
    group_names = []
    for r, a in pairs:
        key = (r.garden, a.clubbed_grade)
        if key not in group_key_of:
            group_key_of[key] = len(group_combo)
            group_combo.append(flat_index(a.grade_cluster, a.source_cluster, n_source))
            group_variant.append(r.garden_variant)
            group_names.append(f"{r.garden}|{a.clubbed_grade}")
    group_combo = np.array(group_combo, dtype=int)
    n_groups = len(group_combo)

    volume = np.zeros((n_groups, T + 1))
    sold_lots: dict = {}
    for r, a in pairs:
        g = group_key_of[(r.garden, a.clubbed_grade)]
        t = time_of[(r.year, r.week)]
        volume[g, t] += r.volume
        if r.sold:
            sold_lots.setdefault((g, t), []).append(r)

    obs_keys = sorted(sold_lots)
    obs_group = np.array([g for g, _ in obs_keys], dtype=int)
    obs_time = np.array([t for _, t in obs_keys], dtype=int)
    prev_index, next_index = _chain_links(obs_group, obs_time)
    X, x_cols, variant_levels, replaced = build_exogenous(
        obs_group, obs_time, group_combo, group_variant, volume,
        n_grade, n_source)

    lot_obs = []
    u = []
    y = []
    for e, key in enumerate(obs_keys):
        for r in sold_lots[key]:
            lot_obs.append(e)
            u.append(np.log(r.volume))
            y.append((np.log(r.valuation), np.log(r.price)))
    structure = TslhStructure(
        n_grade=n_grade, n_source=n_source, n_times=T,
        group_combo=group_combo, group_variant=group_variant,
        obs_group=obs_group, obs_time=obs_time, X=X,
        prev_index=prev_index, next_index=next_index,
        lot_obs=np.array(lot_obs, dtype=int), u=np.array(u),
        x_columns=x_cols, variant_levels=variant_levels,
        zero_volume_replacements=replaced, week_of_time=weeks,
        group_names=group_names)
    return TslhDataset(structure, np.array(y, dtype=float))
