"""Linear pricing models, their sequential ANOVA tables, and related screens.

Two models share one code path: the full model regresses price on grade
cluster, source cluster, month, volume, garden variant and valuation; the
valuation-free variant regresses log(price) on the same factors minus
valuation. Sums of squares are sequential (type I) in that fixed term
order. The module also provides the nonparametric dispersion ECDFs for
identically-characterized packets and the two-equation residual-correlation
causal screen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import NoRepeatedGroups, NoSoldRecords, RankDeficient
from .glm import build_design
from .records import ClusterTables, attach_clusters, month_of

TERM_ORDER = ("grade", "source", "month", "volume", "variant", "valuation")


@dataclass
class SequentialAnovaTable:
    rows: list          # (term, df, sum_sq, mean_sq, F, p)
    residual_df: int
    residual_ss: float
    total_ss: float

    @property
    def residual_mean_sq(self) -> float:
        return self.residual_ss / self.residual_df


@dataclass
class PriceModelFit:
    response: str
    coefficients: np.ndarray
    columns: list
    r_squared: float
    anova: SequentialAnovaTable
    residuals: np.ndarray
    fitted: np.ndarray
    residual_quantiles: tuple      # (2.5%, 97.5%)
    prediction_half_width: float   # 1.96 * residual sd, leverage ignored
    sigma: float


def _ols(X, y):
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise RankDeficient(int(rank), X.shape[1])
    fitted = X @ beta
    return beta, fitted, y - fitted


def _term_blocks(records, assignments, include_valuation):
    months = [month_of(r.year, r.week) for r in records]
    blocks = {
        "grade": ("factor", [f"G{a.grade_cluster}" for a in assignments]),
        "source": ("factor", [f"S{a.source_cluster}" for a in assignments]),
        "month": ("factor", [f"M{m:02d}" for m in months]),
        "volume": ("numeric", np.array([r.volume for r in records])),
        "variant": ("factor", [r.garden_variant for r in records]),
    }
    if include_valuation:
        blocks["valuation"] = ("numeric", np.array([r.valuation for r in records]))
    return blocks


def fit_price_model(records, include_valuation: bool = True,
                    tables: Optional[ClusterTables] = None) -> PriceModelFit:
    """OLS pricing fit with a sequential ANOVA in the frozen term order.

    Sold records only; with valuation the response is the raw price, without
    it the log price. Sequential sums of squares are residual-SS drops of the
    nested fits, so they add up to the total SS exactly.
    """
    pairs = [(r, a) for r, a in attach_clusters(records, tables) if r.sold]
    if not pairs:
        raise NoSoldRecords()
    recs = [r for r, _ in pairs]
    assigns = [a for _, a in pairs]
    n = len(recs)
    y = np.array([r.price for r in recs], dtype=float)
    response = "price"
    if not include_valuation:
        y = np.log(y)
        response = "log_price"

    blocks = _term_blocks(recs, assigns, include_valuation)
    order = [t for t in TERM_ORDER if t in blocks]

    total_ss = float(np.sum((y - y.mean()) ** 2))
    rows = []
    numeric: dict = {}
    factors: dict = {}
    prev_rss = total_ss
    prev_rank = 1
    design = build_design(n)
    for term in order:
        kind, values = blocks[term]
        if kind == "numeric":
            numeric[term] = values
        else:
            factors[term] = values
        design = build_design(n, numeric=numeric, factors=factors)
        beta, fitted, resid = _ols(design.X, y)
        rss = float(resid @ resid)
        df = design.X.shape[1] - prev_rank
        rows.append([term, df, prev_rss - rss])
        prev_rss = rss
        prev_rank = design.X.shape[1]

    residual_df = n - prev_rank
    sigma2 = prev_rss / residual_df
    table = SequentialAnovaTable(
        rows=[
            (term, df, ss, ss / df,
             (ss / df) / sigma2,
             float(stats.f.sf((ss / df) / sigma2, df, residual_df)))
            for term, df, ss in rows
        ],
        residual_df=residual_df,
        residual_ss=prev_rss,
        total_ss=total_ss,
    )
    q_lo, q_hi = np.quantile(resid, [0.025, 0.975])
    return PriceModelFit(
        response=response,
        coefficients=beta,
        columns=design.columns,
        r_squared=1.0 - prev_rss / total_ss,
        anova=table,
        residuals=resid,
        fitted=fitted,
        residual_quantiles=(float(q_lo), float(q_hi)),
        prediction_half_width=1.96 * math.sqrt(sigma2),
        sigma=math.sqrt(sigma2),
    )


# ---------------------------------------------------------------------------
# dispersion ECDFs for identically-characterized packets
# ---------------------------------------------------------------------------

@dataclass
class EcdfCurve:
    support: np.ndarray   # sorted unique values
    heights: np.ndarray   # cumulative proportions, ends at 1
    n: int

    def at(self, x: float) -> float:
        idx = np.searchsorted(self.support, x, side="right")
        return float(self.heights[idx - 1]) if idx > 0 else 0.0


def ecdf(values) -> EcdfCurve:
    values = np.sort(np.asarray(values, dtype=float))
    support, counts = np.unique(values, return_counts=True)
    return EcdfCurve(support, np.cumsum(counts) / values.size, values.size)


def _dispersion(values, kind: str) -> float:
    values = np.asarray(values, dtype=float)
    if kind == "range":
        return float(values.max() - values.min())
    if kind == "md":
        return float(np.mean(np.abs(values - np.median(values))))
    raise ValueError(f"unknown dispersion {kind!r}")


def limitation_ecdfs(records, grouping: str = "exact", dispersion: str = "range",
                     target: str = "valuation",
                     tables: Optional[ClusterTables] = None) -> EcdfCurve:
    """ECDF of within-group dispersions of valuation or price.

    ``exact`` groups agree on (garden, grade, year-week); ``cluster`` groups
    agree on (source cluster, grade cluster, year-week). Only groups of two
    or more lots enter; none at all raises NoRepeatedGroups. For
    target="price" only sold lots contribute.
    """
    if grouping not in ("exact", "cluster"):
        raise ValueError(f"unknown grouping {grouping!r}")
    if target not in ("valuation", "price"):
        raise ValueError(f"unknown target {target!r}")
    groups: dict = {}
    for r, a in attach_clusters(records, tables):
        if target == "price":
            if not r.sold:
                continue
            value = r.price
        else:
            value = r.valuation
        if grouping == "exact":
            key = (r.garden, r.raw_grade, r.year, r.week)
        else:
            key = (a.source_cluster, a.grade_cluster, r.year, r.week)
        groups.setdefault(key, []).append(value)
    dispersions = [
        _dispersion(v, dispersion) for v in groups.values() if len(v) >= 2
    ]
    if not dispersions:
        raise NoRepeatedGroups()
    return ecdf(dispersions)


# ---------------------------------------------------------------------------
# two-equation residual-correlation screen
# ---------------------------------------------------------------------------

@dataclass
class ResidualCorrelationResult:
    r_squared_valuation: float
    r_squared_price: float
    residual_correlation: float
    t_statistic: float
    p_value: float
    n: int
    n_params: int


def omega3_residual_correlation(records,
                                tables: Optional[ClusterTables] = None
                                ) -> ResidualCorrelationResult:
    """Regress log valuation and log price on the shared factor set, then
    correlate the residual vectors.

    The common regressors are grade cluster, source cluster, month, garden
    variant and log volume. The test statistic is the partial-correlation t
    with n - p - 1 degrees of freedom (p = design rank including intercept).
    """
    pairs = [(r, a) for r, a in attach_clusters(records, tables) if r.sold]
    if not pairs:
        raise NoSoldRecords()
    recs = [r for r, _ in pairs]
    assigns = [a for _, a in pairs]
    n = len(recs)
    months = [month_of(r.year, r.week) for r in recs]
    design = build_design(
        n,
        numeric={"log_volume": np.log([r.volume for r in recs])},
        factors={
            "grade": [f"G{a.grade_cluster}" for a in assigns],
            "source": [f"S{a.source_cluster}" for a in assigns],
            "month": [f"M{m:02d}" for m in months],
            "variant": [r.garden_variant for r in recs],
        },
    )
    log_val = np.log([r.valuation for r in recs])
    log_price = np.log([r.price for r in recs])
    _, fit_v, res_v = _ols(design.X, log_val)
    _, fit_p, res_p = _ols(design.X, log_price)

    def r2(y, resid):
        total = float(np.sum((y - y.mean()) ** 2))
        return 1.0 - float(resid @ resid) / total

    denom = math.sqrt(float(res_v @ res_v) * float(res_p @ res_p))
    corr = float(res_v @ res_p) / denom if denom > 0 else 1.0
    corr = max(-1.0, min(1.0, corr))
    p_cols = design.X.shape[1]
    dof = n - p_cols - 1
    if abs(corr) < 1.0:
        t = corr * math.sqrt(dof / (1.0 - corr ** 2))
        p_value = float(2.0 * stats.t.sf(abs(t), dof))
    else:
        t = math.inf if corr > 0 else -math.inf
        p_value = 0.0
    return ResidualCorrelationResult(
        r_squared_valuation=r2(log_val, res_v),
        r_squared_price=r2(log_price, res_p),
        residual_correlation=corr,
        t_statistic=t,
        p_value=p_value,
        n=n,
        n_params=p_cols,
    )
