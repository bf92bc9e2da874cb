"""Lot data model, ingestion, grade/source normalization and volume tables.

A lot is one auctioned batch of tea dust: a grade code, a source garden,
packages times per-package weight, the taster's valuation, and (when sold)
the hammer price. 25 raw grade codes collapse into 14 clubbed grades, which
in turn fall into 6 grade clusters; source districts fall into 7 clusters.
Both tables ship as embedded defaults and can be overridden from a config
file, since the groupings were partly judgment calls.
"""

from __future__ import annotations

import csv
import datetime
import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import (
    EmptyCluster,
    MissingColumn,
    MissingPrice,
    NonPositiveVolume,
    PriceOnUnsoldLot,
    UnknownDistrict,
    UnknownGradeCode,
    WeekOutOfRange,
)

GARDEN_VARIANTS = ("Regular", "Clonal", "Gold", "Royal", "Special")

#: The 25 raw grade codes accepted on input (canonical spellings).
RAW_GRADES = (
    "CD", "CD1", "CHD", "CHD1", "CHU",
    "D", "D(F)", "D(SPL)", "D1", "D1(SPL)",
    "GTDUST", "OCD", "OD", "OD(S)", "OD1",
    "OPD", "OPD(CLONAL)", "OPD1", "ORD", "PD",
    "PD(FINE)", "PD(SPL)", "PD1", "PD1(SPL)", "RD1",
)

#: Raw grade -> clubbed grade (14 codes). GTDUST is absent: it is excluded
#: from the classification because it is vanishingly rare.
CLUBBED_GRADE = {
    "CD": "CD", "CHD": "CD", "CHU": "CD",
    "CD1": "CD1", "CHD1": "CD1",
    "D": "D", "D(SPL)": "D",
    "D(F)": "D(FINE)",
    "D1": "D1", "D1(SPL)": "D1",
    "OCD": "OCD",
    "OD": "OD", "OD(S)": "OD",
    "OD1": "OD1",
    "OPD": "OPD", "OPD(CLONAL)": "OPD", "ORD": "OPD",
    "OPD1": "OPD1",
    "PD": "PD", "PD(SPL)": "PD",
    "PD(FINE)": "PD(FINE)",
    "PD1": "PD1", "PD1(SPL)": "PD1",
    "RD1": "RD1",
}

#: Raw grade -> grade cluster 1..6. OCD1 does not appear in the 25-code list
#: but is accepted if present in data (it belongs with the other orthodox
#: churamani dusts in cluster 2).
GRADE_CLUSTER = {
    "OD": 1, "OD(S)": 1, "OPD1": 1,
    "OCD": 2, "OCD1": 2, "OD1": 2,
    "D(F)": 3, "CD1": 3, "CHD1": 3, "RD1": 3,
    "D": 4, "D(SPL)": 4, "CD": 4, "CHD": 4, "CHU": 4, "PD": 4, "PD(SPL)": 4,
    "PD(FINE)": 5,
    "OPD": 6, "OPD(CLONAL)": 6, "ORD": 6, "D1": 6, "D1(SPL)": 6,
    "PD1": 6, "PD1(SPL)": 6,
}

#: District -> source cluster 1..7 (4 West Bengal districts in cluster 1,
#: the Assam districts spread across 2..7).
DISTRICT_CLUSTER = {
    "Darjeeling": 1, "Cooch Behar": 1, "Koch Behar": 1,
    "Uttar Dinajpur": 1, "Jalpaiguri": 1,
    "Karimganj": 2, "Hailakandi": 2,
    "Bongaigaon": 3, "Cachar": 3, "Udalguri": 3, "Darrang": 3, "Dima Hasao": 3,
    "Lakhimpur": 4,
    "Nagaon": 5,
    "Sivasagar": 6, "Tinsukia": 6, "Golaghat": 6, "Jorhat": 6,
    "Baksa": 7, "Dibrugarh": 7, "Sonitpur": 7,
}

# Alias spellings seen in the wild ("PD-Fine", "OD Special", ...) mapped onto
# the canonical parenthesized codes.
_GRADE_ALIASES = {
    "PD-FINE": "PD(FINE)", "PDFINE": "PD(FINE)",
    "D-FINE": "D(F)", "DFINE": "D(F)", "D(FINE)": "D(F)",
    "D-SPECIAL": "D(SPL)", "D-SPL": "D(SPL)",
    "D1-SPECIAL": "D1(SPL)", "D1-SPL": "D1(SPL)",
    "PD-SPECIAL": "PD(SPL)", "PD-SPL": "PD(SPL)",
    "PD1-SPECIAL": "PD1(SPL)", "PD1-SPL": "PD1(SPL)",
    "OD-SPECIAL": "OD(S)", "OD-S": "OD(S)", "OD(SPL)": "OD(S)",
    "OPD-CLONAL": "OPD(CLONAL)",
    "GT DUST": "GTDUST", "GT-DUST": "GTDUST",
}

EXCLUDED_GRADES = frozenset({"GTDUST"})

CSV_COLUMNS = (
    "lot_id", "year", "week", "grade", "garden", "district",
    "packages", "net_weight_kg", "valuation", "price", "sold",
)

MONTH_LABELS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun",
                "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")


def normalize_grade(code: str) -> str:
    """Return the canonical spelling of a raw grade code.

    Raises UnknownGradeCode when the code is not among the 25 raw codes
    (plus the tolerated OCD1).
    """
    canon = code.strip().upper().replace(" ", "")
    canon = _GRADE_ALIASES.get(canon, canon)
    if canon in RAW_GRADES or canon == "OCD1":
        return canon
    # retry with alias table on the squeezed form ("PD - FINE" etc.)
    squeezed = canon.replace("-", "")
    for alias, target in _GRADE_ALIASES.items():
        if alias.replace("-", "") == squeezed:
            return target
    raise UnknownGradeCode(code)


def garden_variant(garden: str) -> str:
    """Variant implied by the garden name's suffix token, else Regular."""
    token = garden.strip().split(" ")[-1].capitalize() if garden.strip() else ""
    return token if token in GARDEN_VARIANTS[1:] else "Regular"


@dataclass(frozen=True)
class LotRecord:
    lot_id: str
    year: int
    week: int
    raw_grade: str
    garden: str
    garden_variant: str
    district: str
    packages: int
    net_weight_per_package: float
    valuation: float
    price: Optional[float]
    sold: bool

    @property
    def volume(self) -> float:
        return self.packages * self.net_weight_per_package

    def validate(self, row: Optional[int] = None) -> "LotRecord":
        if self.packages <= 0 or self.net_weight_per_package <= 0:
            raise NonPositiveVolume(row)
        if self.sold and self.price is None:
            raise MissingPrice(row)
        if not self.sold and self.price is not None:
            raise PriceOnUnsoldLot(row)
        return self


@dataclass(frozen=True)
class ClusterAssignment:
    """Lookup result for one lot: clubbed grade plus cluster coordinates.

    ``excluded`` lots (GTDUST) never carry a grade cluster id.
    """
    clubbed_grade: Optional[str]
    grade_cluster: Optional[int]
    source_cluster: int
    excluded: bool = False


@dataclass(frozen=True)
class ClusterTables:
    """Grade and district cluster maps, overridable from a config file."""
    grade_cluster: dict
    district_cluster: dict
    clubbed_grade: dict

    @classmethod
    def default(cls) -> "ClusterTables":
        return cls(dict(GRADE_CLUSTER), dict(DISTRICT_CLUSTER), dict(CLUBBED_GRADE))

    @classmethod
    def from_config(cls, path) -> "ClusterTables":
        """Override entries from a JSON config.

        Recognized keys: ``grade_clusters`` (raw grade -> id),
        ``district_clusters`` (district -> id), ``clubbed_grades``
        (raw grade -> clubbed code). Unlisted entries keep their defaults
        unless ``replace: true`` is set, which discards the defaults.
        """
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
        if cfg.get("replace", False):
            tables = cls({}, {}, {})
        else:
            tables = cls.default()
        tables.grade_cluster.update(cfg.get("grade_clusters", {}))
        tables.district_cluster.update(cfg.get("district_clusters", {}))
        tables.clubbed_grade.update(cfg.get("clubbed_grades", {}))
        return tables


def assign_clusters(record: LotRecord,
                    tables: Optional[ClusterTables] = None) -> ClusterAssignment:
    """Deterministic lookup of clubbed grade, grade cluster and source cluster.

    GTDUST maps to the excluded marker, never to a cluster id. Unknown
    districts raise UnknownDistrict.
    """
    tables = tables or ClusterTables.default()
    district = record.district.strip()
    if district not in tables.district_cluster:
        # case-insensitive retry before giving up
        folded = {k.lower(): v for k, v in tables.district_cluster.items()}
        if district.lower() not in folded:
            raise UnknownDistrict(record.district)
        source = folded[district.lower()]
    else:
        source = tables.district_cluster[district]
    grade = record.raw_grade.strip()
    if grade not in tables.grade_cluster:
        grade = normalize_grade(grade)
        if grade in EXCLUDED_GRADES:
            return ClusterAssignment(None, None, source, excluded=True)
        if grade not in tables.grade_cluster:
            raise UnknownGradeCode(record.raw_grade)
    return ClusterAssignment(
        clubbed_grade=tables.clubbed_grade.get(grade, grade),
        grade_cluster=tables.grade_cluster[grade],
        source_cluster=source,
    )


def month_of(year: int, week: int) -> int:
    """Calendar month (1-12) of the Monday of ISO week ``week`` in ``year``."""
    if not 1 <= week <= 53:
        raise WeekOutOfRange(year, week)
    try:
        monday = datetime.date.fromisocalendar(year, week, 1)
    except ValueError as exc:
        raise WeekOutOfRange(year, week) from exc
    return monday.month


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes", "y"):
        return True
    if t in ("false", "0", "no", "n"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def ingest(path, tables: Optional[ClusterTables] = None,
           default_net_weight: Optional[float] = None) -> list[LotRecord]:
    """Parse a lot CSV file into validated records.

    The header must carry the declared schema; ``net_weight_kg`` may be
    absent or empty when ``default_net_weight`` is given. Every failure
    names the offending 1-based data row.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(CSV_COLUMNS[0], row=0) from None
        header = [h.strip() for h in header]
        for col in CSV_COLUMNS:
            if col == "net_weight_kg" and default_net_weight is not None:
                continue
            if col not in header:
                raise MissingColumn(col, row=0)
        idx = {col: header.index(col) for col in CSV_COLUMNS if col in header}

        records = []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            def cell(col):
                return row[idx[col]].strip() if col in idx and idx[col] < len(row) else ""

            grade = cell("grade")
            if tables is None or grade not in tables.grade_cluster:
                try:
                    grade = normalize_grade(grade)
                except UnknownGradeCode:
                    raise UnknownGradeCode(cell("grade"), row=row_no) from None
            try:
                packages = int(cell("packages"))
            except ValueError:
                raise NonPositiveVolume(row_no) from None
            weight_text = cell("net_weight_kg")
            if weight_text:
                net_weight = float(weight_text)
            elif default_net_weight is not None:
                net_weight = float(default_net_weight)
            else:
                raise MissingColumn("net_weight_kg", row=row_no)
            sold = _parse_bool(cell("sold"))
            price_text = cell("price")
            price = float(price_text) if price_text else None
            garden = cell("garden")
            record = LotRecord(
                lot_id=cell("lot_id"),
                year=int(cell("year")),
                week=int(cell("week")),
                raw_grade=grade,
                garden=garden,
                garden_variant=garden_variant(garden),
                district=cell("district"),
                packages=packages,
                net_weight_per_package=net_weight,
                valuation=float(cell("valuation")),
                price=price,
                sold=sold,
            )
            if not 1 <= record.week <= 53:
                raise WeekOutOfRange(record.year, record.week)
            records.append(record.validate(row=row_no))
    if tables is not None:
        for r in records:
            assign_clusters(r, tables)  # fail fast on unknown grades/districts
    return records


def write_lots(records: Iterable[LotRecord], path) -> None:
    """Serialize records back into the ingestion schema (round-trip safe)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([
                r.lot_id, r.year, r.week, r.raw_grade, r.garden, r.district,
                r.packages, repr(r.net_weight_per_package), repr(r.valuation),
                "" if r.price is None else repr(r.price),
                "true" if r.sold else "false",
            ])


def volume_table(records: Sequence[LotRecord],
                 tables: Optional[ClusterTables] = None,
                 clusters: Sequence[int] = (1, 2, 3, 4, 5, 6)) -> list[list[float]]:
    """12 x len(clusters) matrix of monthly volume proportions per grade cluster.

    Entry (m, c) is the volume of cluster-c lots offered in month m divided
    by the total cluster-c volume; each column sums to one. A cluster with
    zero total volume raises EmptyCluster.
    """
    tables = tables or ClusterTables.default()
    totals = {c: 0.0 for c in clusters}
    monthly = {(m, c): 0.0 for m in range(1, 13) for c in clusters}
    for r in records:
        assignment = assign_clusters(r, tables)
        if assignment.excluded or assignment.grade_cluster not in totals:
            continue
        m = month_of(r.year, r.week)
        totals[assignment.grade_cluster] += r.volume
        monthly[(m, assignment.grade_cluster)] += r.volume
    for c in clusters:
        if totals[c] <= 0.0:
            raise EmptyCluster(c)
    return [[monthly[(m, c)] / totals[c] for c in clusters] for m in range(1, 13)]


def write_volume_table(table: Sequence[Sequence[float]], path,
                       clusters: Sequence[int] = (1, 2, 3, 4, 5, 6)) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["month"] + [f"cluster_{c}" for c in clusters])
        for label, row in zip(MONTH_LABELS, table):
            writer.writerow([label] + [f"{v:.6f}" for v in row])


def attach_clusters(records: Sequence[LotRecord],
                    tables: Optional[ClusterTables] = None,
                    drop_excluded: bool = True):
    """Pair each record with its ClusterAssignment, optionally dropping GTDUST."""
    tables = tables or ClusterTables.default()
    out = []
    for r in records:
        a = assign_clusters(r, tables)
        if a.excluded and drop_excluded:
            continue
        out.append((r, a))
    return out
