"""Clustering machinery for grades and sources.

The pipeline is: per-entity weekly volume-weighted summaries, a correlation
dissimilarity d = 2(1 - rho^2), agglomerative clustering, a 2-d Gaussian
mixture fitted by EM with BIC model selection run week by week on
(valuation, price) summary pairs, and a co-occurrence similarity counting
how often two entities land in the same weekly mixture component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateComponent,
    InsufficientOverlap,
    ZeroTotalVariance,
    ZeroVariance,
)

LINKAGES = ("average", "complete", "single")


# ---------------------------------------------------------------------------
# weekly summaries
# ---------------------------------------------------------------------------

def weighted_mean(values, weights) -> float:
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    return float(np.sum(values * weights) / np.sum(weights))


def weighted_median(values, weights) -> float:
    """Smallest value whose cumulative weight reaches half the total."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    half = 0.5 * cum[-1]
    return float(values[order][np.searchsorted(cum, half)])


def weekly_summary(records, entity_key: Callable, value_key: Callable,
                   statistic: str = "median") -> dict:
    """Per-entity series of volume-weighted summaries keyed by (year, week).

    ``statistic`` is ``"mean"`` (volume-weighted mean) or ``"median"``
    (volume-weighted median). Records whose value is None are skipped, so
    the price series of partially unsold weeks only covers sold lots.
    Missing weeks are simply absent from the series.
    """
    if statistic not in ("mean", "median"):
        raise ValueError(f"unknown statistic {statistic!r}")
    buckets: dict = {}
    for r in records:
        v = value_key(r)
        if v is None:
            continue
        buckets.setdefault(entity_key(r), {}).setdefault((r.year, r.week), []).append(
            (float(v), r.volume))
    fn = weighted_mean if statistic == "mean" else weighted_median
    return {
        entity: {
            week: fn([v for v, _ in pairs], [w for _, w in pairs])
            for week, pairs in sorted(weeks.items())
        }
        for entity, weeks in sorted(buckets.items())
    }


# ---------------------------------------------------------------------------
# dissimilarity
# ---------------------------------------------------------------------------

def dissimilarity(series_a: dict, series_b: dict, min_overlap: int = 3) -> float:
    """d = 2(1 - rho^2) over the overlapping weeks of two series.

    rho is the Pearson correlation on the overlap; at least ``min_overlap``
    common weeks with finite values are required, and both series must vary
    on the overlap.
    """
    common = sorted(set(series_a) & set(series_b))
    a = np.array([series_a[w] for w in common], dtype=float)
    b = np.array([series_b[w] for w in common], dtype=float)
    finite = np.isfinite(a) & np.isfinite(b)
    a, b = a[finite], b[finite]
    if a.size < min_overlap:
        raise InsufficientOverlap(int(a.size), min_overlap)
    sa = a - a.mean()
    sb = b - b.mean()
    va = float(sa @ sa)
    vb = float(sb @ sb)
    if va == 0.0 or vb == 0.0:
        raise ZeroVariance()
    rho = float(sa @ sb) / math.sqrt(va * vb)
    return 2.0 * (1.0 - rho * rho)


def dissimilarity_matrix(series_by_entity: dict, min_overlap: int = 3):
    """Symmetric matrix of pairwise dissimilarities.

    Entities are kept in sorted order; pairs with insufficient overlap
    propagate InsufficientOverlap (callers should pre-filter entities with
    too few observed weeks).
    """
    entities = sorted(series_by_entity)
    n = len(entities)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = dissimilarity(
                series_by_entity[entities[i]], series_by_entity[entities[j]],
                min_overlap=min_overlap)
    return entities, d


# ---------------------------------------------------------------------------
# agglomerative clustering
# ---------------------------------------------------------------------------

@dataclass
class Dendrogram:
    """Binary merge tree from agglomerative clustering.

    ``merges`` holds one row per merge: (cluster_a, cluster_b, height, size)
    where clusters 0..n-1 are the original singletons and merge k creates
    cluster n+k. Ties are broken by the lexicographically smallest pair of
    smallest original member indices.
    """
    n_leaves: int
    merges: list = field(default_factory=list)

    def heights(self):
        return [m[2] for m in self.merges]

    def cut(self, k: int) -> list[int]:
        """Flat cluster labels (0-based, relabeled by smallest member)."""
        if not 1 <= k <= self.n_leaves:
            raise ValueError(f"k must be in 1..{self.n_leaves}")
        parent = list(range(self.n_leaves + len(self.merges)))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for idx, (a, b, _, _) in enumerate(self.merges[: self.n_leaves - k]):
            new = self.n_leaves + idx
            parent[find(a)] = new
            parent[find(b)] = new
        roots: dict = {}
        labels = []
        for leaf in range(self.n_leaves):
            r = find(leaf)
            roots.setdefault(r, len(roots))
            labels.append(roots[r])
        return labels


def agglomerate(d, linkage: str = "average") -> Dendrogram:
    """Agglomerative clustering of a dissimilarity matrix.

    Lance-Williams updates for average, complete and single linkage; the
    next merge is the pair with minimal distance, ties broken by the lowest
    (representative_i, representative_j) pair where the representative of a
    cluster is its smallest original index.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}")
    d = np.asarray(d, dtype=float)
    n = d.shape[0]
    dist = d.copy()
    active = list(range(n))                       # current cluster ids
    members = {i: [i] for i in range(n)}          # cluster id -> original leaves
    rep = {i: i for i in range(n)}                # smallest original index
    pos = {i: i for i in range(n)}                # cluster id -> row of dist
    dendro = Dendrogram(n_leaves=n)

    for step in range(n - 1):
        best = None
        for ii in range(len(active)):
            for jj in range(ii + 1, len(active)):
                a, b = active[ii], active[jj]
                dd = dist[pos[a], pos[b]]
                ra, rb = sorted((rep[a], rep[b]))
                key = (dd, ra, rb)
                if best is None or key < best[0]:
                    best = (key, a, b)
        (height, _, _), a, b = best
        new_id = n + step
        size_a, size_b = len(members[a]), len(members[b])
        # Lance-Williams distance of the merged cluster to every other one
        pa, pb = pos[a], pos[b]
        for c in active:
            if c in (a, b):
                continue
            pc = pos[c]
            if linkage == "average":
                new_d = (size_a * dist[pa, pc] + size_b * dist[pb, pc]) / (size_a + size_b)
            elif linkage == "complete":
                new_d = max(dist[pa, pc], dist[pb, pc])
            else:
                new_d = min(dist[pa, pc], dist[pb, pc])
            dist[pa, pc] = dist[pc, pa] = new_d
        dendro.merges.append((a, b, float(height), size_a + size_b))
        members[new_id] = members.pop(a) + members.pop(b)
        rep[new_id] = min(rep.pop(a), rep.pop(b))
        pos[new_id] = pa
        active.remove(a)
        active.remove(b)
        active.append(new_id)
    return dendro


# ---------------------------------------------------------------------------
# Gaussian mixture by EM, BIC selection
# ---------------------------------------------------------------------------

@dataclass
class GaussianMixture:
    weights: np.ndarray          # (K,)
    means: np.ndarray            # (K, d)
    covariances: np.ndarray      # (K, d, d)
    log_likelihood: float
    log_likelihood_trace: list   # per accepted EM iteration
    n_iter: int

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def log_density(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return _log_responsibilities(points, self.weights, self.means,
                                     self.covariances)[1]

    def responsibilities(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        log_r, _ = _log_responsibilities(points, self.weights, self.means,
                                         self.covariances)
        return np.exp(log_r)


def _component_log_pdf(points, mean, cov):
    d = points.shape[1]
    chol = np.linalg.cholesky(cov)
    diff = points - mean
    y = np.linalg.solve(chol, diff.T)
    maha = np.sum(y * y, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * math.log(2.0 * math.pi) + log_det + maha)


def _log_responsibilities(points, weights, means, covs):
    n, _ = points.shape
    K = len(weights)
    log_p = np.empty((n, K))
    for k in range(K):
        log_p[:, k] = math.log(weights[k]) + _component_log_pdf(points, means[k], covs[k])
    m = log_p.max(axis=1, keepdims=True)
    log_norm = m[:, 0] + np.log(np.exp(log_p - m).sum(axis=1))
    return log_p - log_norm[:, None], log_norm


def _farthest_point_means(points, K, rng):
    idx = [int(rng.integers(len(points)))]
    for _ in range(1, K):
        d2 = np.min(
            [np.sum((points - points[i]) ** 2, axis=1) for i in idx], axis=0)
        idx.append(int(np.argmax(d2)))
    return points[idx].copy()


def _floor_covariance(cov, data_trace, k):
    """Clamp eigenvalues at 1e-6 * trace/dim; degenerate data raises."""
    d = cov.shape[0]
    trace = float(np.trace(cov))
    floor = 1e-6 * (trace if trace > 0 else data_trace) / d
    if floor <= 0 or not np.isfinite(floor):
        raise DegenerateComponent(k, "zero-variance data")
    vals, vecs = np.linalg.eigh((cov + cov.T) / 2.0)
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T


def fit_gmm(points, K: int, seed: int = 0, restarts: int = 10,
            max_iter: int = 500, tol: float = 1e-8) -> GaussianMixture:
    """Gaussian mixture by EM, best of ``restarts`` seeded starts.

    Initialization is farthest-point seeding of the means with a shared
    spherical covariance; the observed-data log-likelihood is non-decreasing
    across iterations and convergence is declared when its relative change
    drops below ``tol``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = points.shape
    if K < 1:
        raise ValueError("K must be >= 1")
    if n < 3 * K:
        raise ValueError(f"need at least {3 * K} points for K={K}, got {n}")
    data_cov = np.cov(points.T) if n > 1 else np.zeros((d, d))
    data_cov = np.atleast_2d(data_cov)
    data_trace = float(np.trace(data_cov))
    if data_trace <= 0:
        raise DegenerateComponent(0, "zero-variance data")

    best = None
    seeds = np.random.SeedSequence(seed).spawn(restarts)
    for ss in seeds:
        rng = np.random.default_rng(ss)
        means = _farthest_point_means(points, K, rng)
        spherical = (data_trace / d) * np.eye(d)
        covs = np.array([spherical] * K)
        weights = np.full(K, 1.0 / K)
        prev_ll = -np.inf
        trace = []
        for it in range(max_iter):
            log_r, log_norm = _log_responsibilities(points, weights, means, covs)
            ll = float(log_norm.sum())
            trace.append(ll)
            if np.isfinite(prev_ll) and abs(ll - prev_ll) <= tol * (abs(prev_ll) + 1.0):
                break
            prev_ll = ll
            r = np.exp(log_r)
            nk = r.sum(axis=0)
            nk = np.maximum(nk, 1e-300)
            weights = nk / n
            means = (r.T @ points) / nk[:, None]
            for k in range(K):
                diff = points - means[k]
                cov = (r[:, k, None] * diff).T @ diff / nk[k]
                covs[k] = _floor_covariance(cov, data_trace, k)
        fit = GaussianMixture(weights, means, covs, trace[-1], trace, len(trace))
        if best is None or fit.log_likelihood > best.log_likelihood:
            best = fit
    return best


def gmm_parameter_count(K: int, d: int) -> int:
    return (K - 1) + K * (d + d * (d + 1) // 2)


def bic(log_likelihood: float, n_params: int, n: int) -> float:
    return -2.0 * log_likelihood + n_params * math.log(n)


def select_k_bic(points, k_range: Iterable[int], seed: int = 0,
                 restarts: int = 10):
    """Smallest K minimizing BIC = -2 logL + p(K) ln n over ``k_range``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = points.shape
    results = {}
    for K in sorted(set(k_range)):
        fit = fit_gmm(points, K, seed=seed, restarts=restarts)
        results[K] = (bic(fit.log_likelihood, gmm_parameter_count(K, d), n), fit)
    best_k = min(results, key=lambda K: (results[K][0], K))
    return best_k, {K: v[0] for K, v in results.items()}, results[best_k][1]


# ---------------------------------------------------------------------------
# co-occurrence similarity and explained variation
# ---------------------------------------------------------------------------

def co_occurrence(weekly_labels: Sequence[dict], entities: Optional[Sequence] = None):
    """Count, per entity pair, the weeks spent in the same cluster.

    ``weekly_labels`` is one dict per week mapping entity -> cluster label;
    entities absent from a week are skipped that week. The diagonal counts
    the weeks the entity was clusterable at all.
    """
    if entities is None:
        universe = set()
        for week in weekly_labels:
            universe |= set(week)
        entities = sorted(universe)
    index = {e: i for i, e in enumerate(entities)}
    n = len(entities)
    counts = np.zeros((n, n), dtype=int)
    for week in weekly_labels:
        present = [e for e in entities if e in week]
        for a_pos, e_a in enumerate(present):
            ia = index[e_a]
            counts[ia, ia] += 1
            for e_b in present[a_pos + 1:]:
                if week[e_a] == week[e_b]:
                    ib = index[e_b]
                    counts[ia, ib] += 1
                    counts[ib, ia] += 1
    return list(entities), counts


def co_occurrence_dissimilarity(counts, n_weeks: int):
    """1 - count/weeks, the dissimilarity fed back into agglomerate()."""
    counts = np.asarray(counts, dtype=float)
    d = 1.0 - counts / float(n_weeks)
    np.fill_diagonal(d, 0.0)
    return d


def explained_variation(values, groups) -> float:
    """Between-cluster share of total sum of squares (one-way ANOVA R^2)."""
    values = np.asarray(values, dtype=float)
    groups = np.asarray(groups)
    grand = values.mean()
    total = float(np.sum((values - grand) ** 2))
    if total == 0.0:
        raise ZeroTotalVariance()
    between = 0.0
    for g in np.unique(groups):
        sel = values[groups == g]
        between += sel.size * (sel.mean() - grand) ** 2
    return float(between / total)
