"""Design-matrix construction from a cleaned corpus.

A day's 24 hourly volumes enter a model either as raw counts or as hourly
shares (each hour divided by the daily total).  The learning target for the
kernel and network models is the day expansion factor: station AADT divided
by that day's total, so that a predicted factor times an observed daily
total yields an AADT estimate.  Regression models instead target AADT
directly from raw counts.

Feature sets are described by :class:`AlternativeSpec` recipes; the nine
numbered presets from :func:`alternative` combine hourly shares with
day-of-week and month one-hots and optional socio-economic fields.
Station-level train/test splitting and greedy forward selection over the 24
hourly columns live here too.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import math
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from .errors import DataError, UsageError
from .ingest import CleanCorpus, DayCount, FunctionalClass, StationMeta
from .seeding import rng_for

__all__ = [
    "SOCIO_FIELDS",
    "Scope",
    "AlternativeSpec",
    "DesignMatrix",
    "SplitSpec",
    "alternative",
    "ols_spec",
    "hourly_factors",
    "daily_total",
    "ground_truth_aadt",
    "aadt_factor",
    "encode_calendar",
    "stations_in_scope",
    "feature_columns",
    "feature_row",
    "assemble",
    "restrict_hours",
    "split",
    "sfs",
]

SOCIO_FIELDS = (
    "urban",
    "income",
    "employment",
    "pct_below_poverty",
    "vehicles",
    "housing_units",
)

DOW_COLUMNS = tuple(f"dow{d}" for d in range(7))
MONTH_COLUMNS = tuple(f"mon{m:02d}" for m in range(12))
# Drop-first dummy coding for roadway class (interstate is the reference);
# a full one-hot would be collinear with the regression intercept.
CLASS_COLUMNS = ("fc_arterial", "fc_collector", "fc_local")
_CLASS_COLUMN_OF = {
    FunctionalClass.PRINCIPAL_MINOR_ARTERIAL: "fc_arterial",
    FunctionalClass.COLLECTOR: "fc_collector",
    FunctionalClass.LOCAL: "fc_local",
}


class Scope(enum.Enum):
    """Which stations a model covers."""

    INTERSTATE_EXPRESSWAY = "interstate"
    PRINCIPAL_MINOR_ARTERIAL = "arterial"
    ALL_ATR = "all"

    @classmethod
    def from_token(cls, token: str) -> "Scope":
        for member in cls:
            if member.value == token:
                return member
        raise UsageError(f"unknown scope {token!r}")

    def functional_class(self):
        if self is Scope.INTERSTATE_EXPRESSWAY:
            return FunctionalClass.INTERSTATE_EXPRESSWAY
        if self is Scope.PRINCIPAL_MINOR_ARTERIAL:
            return FunctionalClass.PRINCIPAL_MINOR_ARTERIAL
        return None


@dataclass(frozen=True)
class AlternativeSpec:
    """A feature-set recipe: volume form, encodings, filters, and scope.

    ``alt_id`` 1..9 are the numbered presets (see :func:`alternative`);
    0 marks the regression recipe built by :func:`ols_spec`.
    """

    alt_id: int
    volume_form: str = "factors"
    use_day_onehot: bool = False
    use_month_onehot: bool = False
    socio_fields: tuple = ()
    row_filter: str = "all"
    scope: Scope = Scope.ALL_ATR
    use_class_onehot: bool = False
    reconstructed: bool = False

    def __post_init__(self):
        if self.alt_id not in range(0, 10):
            raise UsageError(f"alternative id must be 0..9, got {self.alt_id}")
        if self.volume_form not in ("factors", "raw_counts"):
            raise UsageError(f"bad volume_form {self.volume_form!r}")
        if self.row_filter not in ("all", "monday_only", "january_only"):
            raise UsageError(f"bad row_filter {self.row_filter!r}")
        bad = [f for f in self.socio_fields if f not in SOCIO_FIELDS]
        if bad:
            raise UsageError(f"unknown socio fields: {bad}")
        if self.scope is Scope.ALL_ATR and self.socio_fields:
            raise UsageError(
                "socio fields are not allowed in the all-station scope "
                "(socio data need not exist for every station)"
            )


_BASE_ALTERNATIVES = {
    # volume_form, day onehot, month onehot, socio fields, row filter, reconstructed
    1: ("factors", False, False, SOCIO_FIELDS, "all", True),
    2: ("factors", True, True, (), "all", False),
    3: ("factors", False, False, (), "all", False),
    4: ("factors", True, True, (), "monday_only", False),
    5: ("factors", True, True, (), "january_only", False),
    6: ("factors", True, True, ("urban",), "all", True),
    7: ("factors", True, True, ("income", "employment"), "all", True),
    8: ("factors", True, True, ("pct_below_poverty", "vehicles"), "all", True),
    9: ("factors", True, True, SOCIO_FIELDS, "all", True),
}

ALL_SCOPE_ALTERNATIVES = (2, 3, 4, 5)


def alternative(alt_id: int, scope: Scope) -> AlternativeSpec:
    """Look up one of the nine numbered feature-set presets for a scope.

    The all-station scope only offers presets 2-5 (the socio-free ones).
    Presets 1 and 6-9 carry ``reconstructed=True``: their socio-field
    composition is a documented configuration choice, not a fixed recipe.
    """
    if alt_id not in _BASE_ALTERNATIVES:
        raise UsageError(f"alternative id must be 1..9, got {alt_id}")
    if scope is Scope.ALL_ATR and alt_id not in ALL_SCOPE_ALTERNATIVES:
        raise UsageError(
            f"alternative {alt_id} is not available in the all-station scope "
            f"(only {ALL_SCOPE_ALTERNATIVES} are)"
        )
    form, day, month, socio, row_filter, reconstructed = _BASE_ALTERNATIVES[alt_id]
    return AlternativeSpec(
        alt_id=alt_id,
        volume_form=form,
        use_day_onehot=day,
        use_month_onehot=month,
        socio_fields=socio,
        row_filter=row_filter,
        scope=scope,
        reconstructed=reconstructed,
    )


def ols_spec(scope: Scope) -> AlternativeSpec:
    """Feature recipe for the regression models: raw counts, no calendar.

    Class-specific models add all six socio fields; the all-station model
    instead encodes the roadway class as dummy columns and omits socio
    fields (which need not exist for every station).
    """
    return AlternativeSpec(
        alt_id=0,
        volume_form="raw_counts",
        socio_fields=() if scope is Scope.ALL_ATR else SOCIO_FIELDS,
        scope=scope,
        use_class_onehot=scope is Scope.ALL_ATR,
    )


@dataclass(frozen=True)
class DesignMatrix:
    """Numeric rows with provenance, a named column order, and targets."""

    station_ids: tuple
    dates: tuple
    columns: tuple
    X: np.ndarray
    y: np.ndarray
    target_kind: str

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise UsageError(f"no column named {name!r}") from None

    def hour_columns(self) -> list:
        prefix = "hf" if any(c.startswith("hf") for c in self.columns) else "v"
        return [c for c in self.columns if c.startswith(prefix) and c[len(prefix):].isdigit()]

    def to_csv(self, out: TextIO) -> None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["station_id", "date", *self.columns, "target"])
        for i in range(self.n_rows):
            writer.writerow(
                [self.station_ids[i], self.dates[i].isoformat()]
                + [repr(float(v)) for v in self.X[i]]
                + [repr(float(self.y[i]))]
            )


@dataclass(frozen=True)
class SplitSpec:
    """Station-level train/test split: deterministic shuffle, 2/3 train."""

    train_fraction: float = 2.0 / 3.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise UsageError("train_fraction must be in (0, 1)")


def hourly_factors(day: DayCount) -> np.ndarray:
    """The day's 24 hourly shares: each hour divided by the daily total."""
    if not day.is_complete:
        raise DataError(f"{day.station} {day.date}: day has missing hours")
    total = day.total()
    if total <= 0:
        raise DataError(f"{day.station} {day.date}: zero daily total")
    return np.asarray(day.hours, dtype=float) / total


def daily_total(day: DayCount) -> float:
    """Sum of the day's 24 hourly volumes."""
    return day.total()


def ground_truth_aadt(days: Sequence) -> float:
    """AADT of a station: mean daily total over its retained days."""
    if not days:
        raise DataError("cannot compute AADT from zero days")
    return float(sum(d.total() for d in days) / len(days))


def aadt_factor(day: DayCount, aadt: float) -> float:
    """Day expansion factor: AADT over the daily total (Eq. target scale)."""
    total = daily_total(day)
    if total <= 0:
        raise DataError(f"{day.station} {day.date}: zero daily total")
    if not (aadt > 0) or not math.isfinite(aadt):
        raise DataError(f"aadt must be positive and finite, got {aadt!r}")
    return aadt / total


def encode_calendar(date: dt.date) -> np.ndarray:
    """7 day-of-week + 12 month indicator bits (Monday and January first)."""
    enc = np.zeros(19)
    enc[date.weekday()] = 1.0
    enc[7 + date.month - 1] = 1.0
    return enc


def stations_in_scope(corpus: CleanCorpus, scope: Scope) -> list:
    """Stations covered by a scope; class scopes require metadata."""
    if scope is Scope.ALL_ATR:
        return corpus.stations()
    fc = scope.functional_class()
    return [
        s
        for s in corpus.stations()
        if s in corpus.meta and corpus.meta[s].functional_class is fc
    ]


def feature_columns(alt: AlternativeSpec, selected_hours=None) -> tuple:
    """Canonical column order: hours, day one-hot, month one-hot, socio, class."""
    hours = sorted(selected_hours) if selected_hours is not None else range(24)
    prefix = "hf" if alt.volume_form == "factors" else "v"
    cols = [f"{prefix}{h:02d}" for h in hours]
    if alt.use_day_onehot:
        cols.extend(DOW_COLUMNS)
    if alt.use_month_onehot:
        cols.extend(MONTH_COLUMNS)
    cols.extend(alt.socio_fields)
    if alt.use_class_onehot:
        cols.extend(CLASS_COLUMNS)
    return tuple(cols)


def _row_passes_filter(date: dt.date, row_filter: str) -> bool:
    if row_filter == "monday_only":
        return date.weekday() == 0
    if row_filter == "january_only":
        return date.month == 1
    return True


def feature_row(
    day: DayCount,
    alt: AlternativeSpec,
    selected_hours=None,
    meta: StationMeta | None = None,
) -> np.ndarray:
    """One day's feature vector in the canonical column order."""
    hours = sorted(selected_hours) if selected_hours is not None else range(24)
    if alt.volume_form == "factors":
        volume = hourly_factors(day)
    else:
        if not day.is_complete:
            raise DataError(f"{day.station} {day.date}: day has missing hours")
        volume = np.asarray(day.hours, dtype=float)
    parts = [volume[list(hours)]]
    if alt.use_day_onehot or alt.use_month_onehot:
        cal = encode_calendar(day.date)
        if alt.use_day_onehot:
            parts.append(cal[:7])
        if alt.use_month_onehot:
            parts.append(cal[7:])
    if alt.socio_fields or alt.use_class_onehot:
        if meta is None:
            raise DataError(
                f"station {day.station}: alternative needs socio or class data "
                "but no metadata was supplied"
            )
    if alt.socio_fields:
        parts.append(np.array([meta.socio_value(f) for f in alt.socio_fields]))
    if alt.use_class_onehot:
        dummy = np.zeros(len(CLASS_COLUMNS))
        col = _CLASS_COLUMN_OF.get(meta.functional_class)
        if col is not None:
            dummy[CLASS_COLUMNS.index(col)] = 1.0
        parts.append(dummy)
    return np.concatenate(parts)


def assemble(
    corpus: CleanCorpus,
    alt: AlternativeSpec,
    selected_hours=None,
    target_kind: str = "aadt_factor",
) -> DesignMatrix:
    """Build the design matrix for a feature recipe over a cleaned corpus.

    One row per retained station-day passing the recipe's row filter;
    targets are the day expansion factor (``aadt_factor``) or the station
    AADT (``aadt``), with station AADT computed as the mean daily total
    over the station's retained days.
    """
    if target_kind not in ("aadt_factor", "aadt"):
        raise UsageError(f"bad target_kind {target_kind!r}")
    stations = stations_in_scope(corpus, alt.scope)
    if not stations:
        raise DataError(f"no stations in scope {alt.scope.value!r}")
    needs_meta = bool(alt.socio_fields) or alt.use_class_onehot
    if needs_meta:
        lacking = [s for s in stations if s not in corpus.meta]
        if lacking:
            raise DataError(
                f"alternative {alt.alt_id} needs metadata but station "
                f"{lacking[0]} has none"
            )

    columns = feature_columns(alt, selected_hours)
    rows, targets, sids, dates = [], [], [], []
    for station in stations:
        days = corpus.station_days(station)
        aadt = ground_truth_aadt(days)
        meta = corpus.meta.get(station)
        for day in days:
            if not _row_passes_filter(day.date, alt.row_filter):
                continue
            rows.append(feature_row(day, alt, selected_hours, meta))
            targets.append(
                aadt_factor(day, aadt) if target_kind == "aadt_factor" else aadt
            )
            sids.append(station)
            dates.append(day.date)
    if not rows:
        raise DataError(
            f"no rows survive row_filter {alt.row_filter!r} in scope "
            f"{alt.scope.value!r}"
        )
    return DesignMatrix(
        station_ids=tuple(sids),
        dates=tuple(dates),
        columns=columns,
        X=np.vstack(rows),
        y=np.asarray(targets, dtype=float),
        target_kind=target_kind,
    )


def restrict_hours(matrix: DesignMatrix, hours: Sequence) -> DesignMatrix:
    """Keep only the given hour columns (ascending), all others unchanged."""
    keep = sorted(hours)
    hour_cols = set(matrix.hour_columns())
    prefix = "hf" if any(c.startswith("hf") for c in hour_cols) else "v"
    wanted = {f"{prefix}{h:02d}" for h in keep}
    missing = wanted - hour_cols
    if missing:
        raise UsageError(f"matrix lacks hour columns: {sorted(missing)}")
    indices = [
        k
        for k, c in enumerate(matrix.columns)
        if c not in hour_cols or c in wanted
    ]
    return DesignMatrix(
        station_ids=matrix.station_ids,
        dates=matrix.dates,
        columns=tuple(matrix.columns[k] for k in indices),
        X=matrix.X[:, indices],
        y=matrix.y,
        target_kind=matrix.target_kind,
    )


def split(corpus: CleanCorpus, spec: SplitSpec, scope: Scope = Scope.ALL_ATR) -> tuple:
    """Deterministic station-level split: shuffled, first ceil(n*frac) train."""
    stations = stations_in_scope(corpus, scope)
    n = len(stations)
    if n < 3:
        raise DataError(f"need at least 3 stations in scope, got {n}")
    order = list(stations)
    rng = rng_for(spec.seed, "split")
    rng.shuffle(order)
    n_train = math.ceil(n * spec.train_fraction - 1e-12)
    n_train = min(max(n_train, 1), n - 1)
    return sorted(order[:n_train]), sorted(order[n_train:])


def _ols_rss(A: np.ndarray, y: np.ndarray):
    """Least-squares residual sum of squares, or None if rank-deficient."""
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < A.shape[1]:
        return None
    resid = y - A @ coef
    return float(resid @ resid)


def sfs(matrix: DesignMatrix, max_k: int = 20) -> tuple:
    """Greedy forward selection over the 24 hourly columns.

    At each step the candidate hour whose inclusion yields the smallest
    residual sum of squares of an intercept-augmented least-squares fit is
    added (ties broken by the lowest hour index).  Returns the hour indices
    in selection order and the per-step RSS path.  Candidates that make the
    fit rank-deficient are skipped; a step where every candidate is
    singular raises.
    """
    hour_cols = matrix.hour_columns()
    if len(hour_cols) != 24:
        raise UsageError(
            f"need all 24 hourly columns for selection, found {len(hour_cols)}"
        )
    if not 1 <= max_k <= 24:
        raise UsageError(f"max_k must be in 1..24, got {max_k}")
    n = matrix.n_rows
    if n < max_k + 1:
        raise UsageError(f"{n} rows cannot support selecting {max_k} hours")

    H = np.column_stack([matrix.X[:, matrix.column_index(c)] for c in hour_cols])
    y = matrix.y
    ones = np.ones((n, 1))
    selected = []
    rss_path = []
    remaining = list(range(24))
    for _ in range(max_k):
        best_j, best_rss = None, None
        base = H[:, selected]
        for j in remaining:
            A = np.hstack([ones, base, H[:, [j]]])
            rss = _ols_rss(A, y)
            if rss is None:
                continue
            # Strict < plus ascending iteration breaks ties by lowest hour.
            if best_rss is None or rss < best_rss:
                best_j, best_rss = j, rss
        if best_j is None:
            raise DataError("every remaining hour makes the selection fit singular")
        selected.append(best_j)
        remaining.remove(best_j)
        rss_path.append(best_rss)
    return selected, rss_path
