"""Synthetic auction-season generator for the end-to-end pipeline demo.

The generated season has the real pipeline's shape: 24 raw grade codes from
gardens spread over the 21 districts, a gap of auction-free weeks, seasonal
valuation levels, a salability rule that mixes several logistic curves, and
prices built as valuation times a cluster-specific log-normal ratio. All
draws come from one seeded generator, so a season is reproducible.
"""

from __future__ import annotations

import numpy as np

from .records import (
    DISTRICT_CLUSTER,
    GRADE_CLUSTER,
    LotRecord,
    garden_variant,
)

_GRADE_POOL = [
    # (raw grade, relative frequency) roughly matching offered-lot shares
    ("D", 0.26), ("PD", 0.23), ("D1", 0.12), ("OD", 0.08), ("CD", 0.06),
    ("CD1", 0.05), ("OPD", 0.04), ("PD1", 0.022), ("OCD", 0.012),
    ("D(F)", 0.012), ("OD1", 0.01), ("PD(FINE)", 0.012), ("RD1", 0.008),
    ("OPD1", 0.008), ("CHD1", 0.005), ("ORD", 0.004), ("PD(SPL)", 0.004),
    ("CHD", 0.003), ("CHU", 0.003), ("D(SPL)", 0.003), ("OD(S)", 0.003),
    ("OPD(CLONAL)", 0.003), ("D1(SPL)", 0.002), ("PD1(SPL)", 0.002),
]

_CLUSTER_VALUATION = {1: 150.0, 2: 165.0, 3: 180.0, 4: 140.0, 5: 195.0, 6: 155.0}
_SOURCE_VALUATION = {1: 4.0, 2: -6.0, 3: -2.0, 4: 2.0, 5: 6.0, 6: 8.0, 7: 0.0}
# two-component log-ratio mixtures per grade cluster (weight, mu, sigma)
_RATIO_MIXTURES = {
    1: ((0.19, -0.016, 0.045), (0.81, 0.10, 0.106)),
    2: ((1.0, 0.073, 0.127), None),
    3: ((0.86, 0.073, 0.102), (0.14, 0.175, 0.043)),
    4: ((0.89, 0.089, 0.059), (0.11, 0.088, 0.116)),
    5: ((0.40, -0.005, 0.035), (0.60, 0.125, 0.055)),
    6: ((0.09, -0.001, 0.036), (0.91, 0.087, 0.103)),
}
_VARIANT_SUFFIX = {"Clonal": " Clonal", "Gold": " Gold", "Royal": " Royal",
                   "Special": " Special"}


def _make_gardens(rng, per_district: int):
    gardens = []
    for district in sorted(DISTRICT_CLUSTER):
        stem = district.replace(" ", "")
        for i in range(per_district):
            name = f"{stem}Estate{i + 1}"
            roll = rng.random()
            if roll < 0.10:
                name += _VARIANT_SUFFIX["Clonal"]
            elif roll < 0.14:
                name += _VARIANT_SUFFIX["Special"]
            elif roll < 0.16:
                name += _VARIANT_SUFFIX["Gold"]
            elif roll < 0.17:
                name += _VARIANT_SUFFIX["Royal"]
            gardens.append((name, district))
    return gardens


def _season_factor(week: int) -> float:
    # valuations peak with the fresh winter crop and sag mid-year
    return 1.0 + 0.06 * np.cos(2.0 * np.pi * (week - 2) / 52.0)


def _sold_probability(valuation: float, cluster: int) -> float:
    """Mixture of three logistic responses to valuation, cluster-tilted."""
    delta = valuation - _CLUSTER_VALUATION[cluster]
    p_hi = 1.0 / (1.0 + np.exp(-(1.4 + 0.008 * delta)))
    p_lo = 1.0 / (1.0 + np.exp(-(0.2 + 0.015 * delta)))
    p_dec = 1.0 / (1.0 + np.exp(-(2.0 - 0.030 * delta)))
    w = (0.55, 0.20, 0.25)
    return float(w[0] * p_hi + w[1] * p_lo + w[2] * p_dec)


def generate_season(seed: int = 0, year: int = 2018,
                    weeks=None, lots_per_week: float = 80.0,
                    gardens_per_district: int = 3) -> list[LotRecord]:
    """One synthetic auction season as a list of LotRecord."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7EA]))
    if weeks is None:
        weeks = [w for w in range(2, 50) if not 10 <= w <= 17]
    gardens = _make_gardens(rng, gardens_per_district)
    garden_quality = {g: rng.normal(0.0, 0.04) for g, _ in gardens}
    grades = [g for g, _ in _GRADE_POOL]
    grade_p = np.array([p for _, p in _GRADE_POOL])
    grade_p = grade_p / grade_p.sum()

    records = []
    lot_no = 0
    for week in weeks:
        n_lots = max(1, int(rng.poisson(lots_per_week)))
        season = _season_factor(week)
        for _ in range(n_lots):
            grade = grades[int(rng.choice(len(grades), p=grade_p))]
            garden, district = gardens[int(rng.integers(len(gardens)))]
            cluster = GRADE_CLUSTER[grade]
            base = _CLUSTER_VALUATION[cluster] + _SOURCE_VALUATION[
                DISTRICT_CLUSTER[district]]
            valuation = base * season * np.exp(
                garden_quality[garden] + rng.normal(0.0, 0.05))
            valuation = float(np.round(valuation))
            packages = int(rng.integers(8, 45))
            net_weight = float(rng.choice([46.0, 48.0, 50.0, 52.0]))
            sold = bool(rng.random() < _sold_probability(valuation, cluster))
            price = None
            if sold:
                comps = _RATIO_MIXTURES[cluster]
                if comps[1] is not None and rng.random() >= comps[0][0]:
                    _, mu, sg = comps[1]
                else:
                    _, mu, sg = comps[0]
                ratio = float(np.exp(rng.normal(mu, sg)))
                price = float(np.round(valuation * ratio, 2))
            lot_no += 1
            records.append(LotRecord(
                lot_id=f"L{year}{week:02d}{lot_no:05d}",
                year=year, week=week, raw_grade=grade, garden=garden,
                garden_variant=garden_variant(garden), district=district,
                packages=packages, net_weight_per_package=net_weight,
                valuation=valuation, price=price, sold=sold,
            ))
    return records
