"""Exception hierarchy shared by every auctionlab module.

Two broad families matter for the CLI exit codes: ``DataError`` (bad or
inconsistent input, exit 3) and ``NumericalError`` (estimation failure,
exit 4). Everything derives from ``AuctionLabError``.
"""


class AuctionLabError(Exception):
    pass


class DataError(AuctionLabError):
    """Input data violates a documented precondition."""


class NumericalError(AuctionLabError):
    """A numerical routine could not produce a valid result."""


# --- ingestion / record level -------------------------------------------------

class MissingColumn(DataError):
    def __init__(self, column, row=0):
        self.column = column
        self.row = row
        super().__init__(f"missing column {column!r} (row {row})")


class NonPositiveVolume(DataError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"non-positive volume at row {row}")


class PriceOnUnsoldLot(DataError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"price present on unsold lot at row {row}")


class MissingPrice(DataError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"sold lot without a price at row {row}")


class UnknownGradeCode(DataError):
    def __init__(self, grade, row=None):
        self.grade = grade
        self.row = row
        where = "" if row is None else f" at row {row}"
        super().__init__(f"unknown grade code {grade!r}{where}")


class UnknownDistrict(DataError):
    def __init__(self, district, row=None):
        self.district = district
        self.row = row
        where = "" if row is None else f" at row {row}"
        super().__init__(f"unknown district {district!r}{where}")


class WeekOutOfRange(DataError):
    def __init__(self, year, week):
        self.year = year
        self.week = week
        super().__init__(f"week {week} is not a valid ISO week of {year}")


class EmptyCluster(DataError):
    def __init__(self, cluster):
        self.cluster = cluster
        super().__init__(f"cluster {cluster} has zero total volume")


# --- clustering ----------------------------------------------------------------

class InsufficientOverlap(DataError):
    def __init__(self, n_overlap, required):
        self.n_overlap = n_overlap
        self.required = required
        super().__init__(f"only {n_overlap} overlapping weeks, need {required}")


class ZeroVariance(NumericalError):
    def __init__(self, what="series"):
        super().__init__(f"{what} has zero variance")


class DegenerateComponent(NumericalError):
    def __init__(self, component, detail=""):
        self.component = component
        msg = f"mixture component {component} is degenerate"
        super().__init__(msg + (f": {detail}" if detail else ""))


# --- regression ------------------------------------------------------------------

class RankDeficient(NumericalError):
    def __init__(self, rank, ncols):
        self.rank = rank
        self.ncols = ncols
        super().__init__(f"design matrix has rank {rank} < {ncols} columns")


class SeparationWarning(UserWarning):
    """Quasi-separated logistic fit; ridge fallback was applied."""


class SingleLevel(DataError):
    def __init__(self):
        super().__init__("treatment factor has a single level")


class EmptyComponent(NumericalError):
    def __init__(self, component, mass):
        self.component = component
        self.mass = mass
        super().__init__(
            f"component {component} holds responsibility mass {mass:.3g} < 1 observation")


class UnknownLevel(DataError):
    def __init__(self, factor, level):
        self.factor = factor
        self.level = level
        super().__init__(f"level {level!r} of factor {factor!r} was not seen in training")


# --- distribution fitting ---------------------------------------------------------

class NonPositiveRatio(DataError):
    def __init__(self, index=None):
        where = "" if index is None else f" at index {index}"
        super().__init__(f"ratio must be strictly positive{where}")


class TooFewObservations(DataError):
    def __init__(self, n, required, what=""):
        tail = f" for {what}" if what else ""
        super().__init__(f"{n} observations, need at least {required}{tail}")


class ZeroTotalVariance(NumericalError):
    def __init__(self):
        super().__init__("total variance of the response is zero")


class NoRepeatedGroups(DataError):
    def __init__(self):
        super().__init__("no group of size >= 2 under the requested grouping")


class NoSoldRecords(DataError):
    def __init__(self):
        super().__init__("no sold records with a price")


# --- state-space sampler -----------------------------------------------------------

class InvalidCovariance(NumericalError):
    def __init__(self, name):
        super().__init__(f"covariance {name} is not symmetric positive definite")


class SingularPrecision(NumericalError):
    def __init__(self, block):
        super().__init__(f"precision matrix of block {block!r} is singular")


class NonPdScale(NumericalError):
    def __init__(self, block):
        super().__init__(f"scale matrix for block {block!r} is not positive definite")


class InsufficientDf(NumericalError):
    def __init__(self, block, df, required):
        super().__init__(
            f"degrees of freedom {df} for block {block!r} below minimum {required}")


class DivergentChain(NumericalError):
    def __init__(self, chain, iteration):
        self.chain = chain
        self.iteration = iteration
        super().__init__(f"chain {chain} diverged (non-finite state) at iteration {iteration}")


class TooFewDraws(DataError):
    def __init__(self, n, required):
        super().__init__(f"only {n} retained draws, need at least {required}")
