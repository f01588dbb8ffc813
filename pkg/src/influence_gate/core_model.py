"""Shared data containers, CSV ingestion, and deletion-set handling.

Case indices are 0-based everywhere in the library; the CLI converts to and
from the 1-based numbering used in data files and reports.
"""

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    DeletionRangeError,
    MissingColumnError,
    NonNumericCellError,
    NonPositiveConcentrationError,
    OutcomeDomainError,
    RankDeficiencyError,
)

# Relative singular-value cutoff for the full-column-rank check, applied to
# the column-scaled design. Near-singular designs poison every downstream
# eigen-solve, so this is enforced at construction.
RANK_TOLERANCE = 1e-10


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.flags.writeable = False
    return out


def _check_full_rank(design: np.ndarray) -> None:
    scale = np.max(np.abs(design), axis=0)
    if np.any(scale == 0.0):
        raise RankDeficiencyError("zero column present")
    sv = np.linalg.svd(design / scale, compute_uv=False)
    if sv[-1] <= RANK_TOLERANCE * sv[0]:
        raise RankDeficiencyError(
            f"singular value ratio {sv[-1] / sv[0]:.3e} below {RANK_TOLERANCE:g}"
        )


@dataclass(frozen=True)
class RegressionData:
    """Design matrix (n x k, full column rank) and response vector for the
    Gaussian linear model."""

    design: np.ndarray
    response: np.ndarray

    def __post_init__(self):
        design = np.atleast_2d(np.asarray(self.design, dtype=float))
        response = np.asarray(self.response, dtype=float).ravel()
        if design.ndim != 2:
            raise DataError("design must be a 2-d array")
        n, k = design.shape
        if n < 1 or k < 1:
            raise DataError(f"need n >= 1 and k >= 1; got n={n}, k={k}")
        if response.shape[0] != n:
            raise DataError(f"response length {response.shape[0]} != n={n}")
        _check_full_rank(design)
        object.__setattr__(self, "design", _freeze(design))
        object.__setattr__(self, "response", _freeze(response))

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def k(self) -> int:
        return self.design.shape[1]


@dataclass(frozen=True)
class MMData:
    """Strictly positive substrate concentrations and observed velocities."""

    concentration: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        conc = np.asarray(self.concentration, dtype=float).ravel()
        vel = np.asarray(self.velocity, dtype=float).ravel()
        if conc.shape[0] != vel.shape[0]:
            raise DataError("concentration and velocity must have equal length")
        if conc.shape[0] < 1:
            raise DataError("need at least one observation")
        bad = np.nonzero(conc <= 0.0)[0]
        if bad.size:
            raise NonPositiveConcentrationError(int(bad[0]) + 1, float(conc[bad[0]]))
        object.__setattr__(self, "concentration", _freeze(conc))
        object.__setattr__(self, "velocity", _freeze(vel))

    @property
    def n(self) -> int:
        return self.concentration.shape[0]


@dataclass(frozen=True)
class LogitData:
    """Covariate rows and 0/1 outcomes for logistic regression."""

    design: np.ndarray
    outcome: np.ndarray

    def __post_init__(self):
        design = np.atleast_2d(np.asarray(self.design, dtype=float))
        outcome = np.asarray(self.outcome, dtype=float).ravel()
        n, k = design.shape
        if n < 1 or k < 1:
            raise DataError(f"need n >= 1 and k >= 1; got n={n}, k={k}")
        if outcome.shape[0] != n:
            raise DataError(f"outcome length {outcome.shape[0]} != n={n}")
        bad = np.nonzero((outcome != 0.0) & (outcome != 1.0))[0]
        if bad.size:
            raise OutcomeDomainError(int(bad[0]) + 1, float(outcome[bad[0]]))
        object.__setattr__(self, "design", _freeze(design))
        object.__setattr__(self, "outcome", _freeze(outcome))

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def k(self) -> int:
        return self.design.shape[1]


@dataclass(frozen=True)
class DeletionSet:
    """Sorted, deduplicated set of 0-based case indices to delete."""

    indices: tuple
    n: int

    @property
    def cardinality(self) -> int:
        return len(self.indices)

    @property
    def complement(self) -> tuple:
        dropped = set(self.indices)
        return tuple(i for i in range(self.n) if i not in dropped)

    def index_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.n, dtype=bool)
        m[list(self.indices)] = True
        return m


def deletion_set(indices, n: int) -> DeletionSet:
    """Build a validated DeletionSet; input order and duplicates are ignored."""
    cleaned = set()
    for raw in indices:
        idx = int(raw)
        if idx != raw:
            raise DataError(f"deletion index {raw!r} is not an integer")
        if not 0 <= idx < n:
            raise DeletionRangeError(idx, n)
        cleaned.add(idx)
    return DeletionSet(indices=tuple(sorted(cleaned)), n=n)


class VerdictTag(str, Enum):
    FINITE = "finite"
    INFINITE = "infinite"
    BOUNDARY = "boundary"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class MomentVerdict:
    """Decision about finiteness of a weight moment.

    `detail` names the binding condition for boundary verdicts and the
    reason for indeterminate ones.
    """

    tag: VerdictTag
    detail: str = ""

    @staticmethod
    def finite(detail: str = "") -> "MomentVerdict":
        return MomentVerdict(VerdictTag.FINITE, detail)

    @staticmethod
    def infinite(detail: str = "") -> "MomentVerdict":
        return MomentVerdict(VerdictTag.INFINITE, detail)

    @staticmethod
    def boundary(detail: str) -> "MomentVerdict":
        if not detail:
            raise ValueError("boundary verdict must name the binding condition")
        return MomentVerdict(VerdictTag.BOUNDARY, detail)

    @staticmethod
    def indeterminate(reason: str) -> "MomentVerdict":
        if not reason:
            raise ValueError("indeterminate verdict must carry a reason")
        return MomentVerdict(VerdictTag.INDETERMINATE, reason)

    @property
    def is_finite(self) -> bool:
        return self.tag is VerdictTag.FINITE

    @property
    def is_infinite(self) -> bool:
        return self.tag is VerdictTag.INFINITE


@dataclass(frozen=True)
class MomentIndexReport:
    """Analytic moment cut-offs; r_star = min(r_a, r_b, r_c)."""

    r_a: float
    r_b: float
    r_c: float
    binding: str
    r_star: float = field(default=math.nan)

    def __post_init__(self):
        for name in ("r_a", "r_b", "r_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        expected = min(self.r_a, self.r_b, self.r_c)
        if math.isnan(self.r_star):
            object.__setattr__(self, "r_star", expected)
        elif not math.isclose(self.r_star, expected, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError("r_star must equal min(r_a, r_b, r_c)")


# --- CSV ingestion -----------------------------------------------------------


@dataclass(frozen=True)
class LinearSchema:
    response: str
    covariates: tuple
    intercept: bool = True


@dataclass(frozen=True)
class MMSchema:
    concentration: str = "concentration"
    velocity: str = "velocity"


@dataclass(frozen=True)
class LogitSchema:
    outcome: str
    covariates: tuple
    intercept: bool = True


def _read_table(path) -> tuple:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows:
        raise MissingColumnError("<header>")
    header = [cell.strip() for cell in rows[0]]
    return header, rows[1:]


def _column(header, rows, name) -> np.ndarray:
    try:
        j = header.index(name)
    except ValueError:
        raise MissingColumnError(name) from None
    out = np.empty(len(rows))
    for i, row in enumerate(rows):
        cell = row[j].strip() if j < len(row) else ""
        try:
            out[i] = float(cell)
        except ValueError:
            raise NonNumericCellError(i + 1, name, cell) from None
    return out


def load_csv(path, schema):
    """Load a typed data set; construction invariants are enforced.

    `schema` selects the model family: LinearSchema -> RegressionData,
    MMSchema -> MMData, LogitSchema -> LogitData. Covariate order in the
    schema fixes column order in the design matrix (intercept first when
    requested).
    """
    header, rows = _read_table(path)
    if not rows:
        raise DataError(f"no data rows in {path}")
    if isinstance(schema, MMSchema):
        conc = _column(header, rows, schema.concentration)
        vel = _column(header, rows, schema.velocity)
        return MMData(concentration=conc, velocity=vel)
    if isinstance(schema, LinearSchema):
        cols = [_column(header, rows, name) for name in schema.covariates]
        design = _assemble_design(cols, schema.intercept, len(rows))
        response = _column(header, rows, schema.response)
        return RegressionData(design=design, response=response)
    if isinstance(schema, LogitSchema):
        cols = [_column(header, rows, name) for name in schema.covariates]
        design = _assemble_design(cols, schema.intercept, len(rows))
        outcome = _column(header, rows, schema.outcome)
        return LogitData(design=design, outcome=outcome)
    raise TypeError(f"unsupported schema type: {type(schema).__name__}")


def _assemble_design(cols, intercept: bool, n: int) -> np.ndarray:
    pieces = []
    if intercept:
        pieces.append(np.ones(n))
    pieces.extend(cols)
    if not pieces:
        raise DataError("schema selects no covariates")
    return np.column_stack(pieces)


def write_table(path, header, rows) -> None:
    """Write a CSV table; floats use shortest round-trip decimal text."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
