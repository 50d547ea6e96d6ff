"""Permanent-count corpus ingestion: parsing, validation, and cleaning.

The on-disk schemas handled here are shared by the whole toolkit:

Count CSV
    header ``station_id,date,h00,h01,...,h23``; dates are ``YYYY-MM-DD``;
    hour cells are non-negative decimal numbers or the literal ``NA`` for a
    missing hour.  (Generated corpora in ``realistic`` mode always write
    integers; ``exact`` mode may write fractional volumes.)

Metadata CSV
    header ``station_id,functional_class,urban,income,employment,
    pct_below_poverty,vehicles,housing_units``; ``functional_class`` is one
    of ``interstate, arterial, collector, local``; ``urban`` is 0 or 1.

Cleaning applies two rules: a day is unusable if any of its 24 hourly
volumes is missing (or its total is zero, which downstream factor math
cannot divide by), and a station is unusable if it has more than
``max_missing_months`` calendar months with no complete day at all.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, TextIO

from .errors import DataError

__all__ = [
    "FunctionalClass",
    "DayCount",
    "StationMeta",
    "Diagnostic",
    "CleanEvent",
    "CleanCorpus",
    "COUNT_HEADER",
    "META_HEADER",
    "parse_counts",
    "parse_meta",
    "read_counts_csv",
    "read_meta_csv",
    "write_counts_csv",
    "write_meta_csv",
    "clean",
    "coverage_report",
    "join_meta",
    "missing_months",
]

HOURS_PER_DAY = 24

COUNT_HEADER = ["station_id", "date"] + [f"h{h:02d}" for h in range(HOURS_PER_DAY)]
META_HEADER = [
    "station_id",
    "functional_class",
    "urban",
    "income",
    "employment",
    "pct_below_poverty",
    "vehicles",
    "housing_units",
]


class FunctionalClass(enum.Enum):
    """Roadway functional classification."""

    INTERSTATE_EXPRESSWAY = "interstate"
    PRINCIPAL_MINOR_ARTERIAL = "arterial"
    COLLECTOR = "collector"
    LOCAL = "local"

    @classmethod
    def from_token(cls, token: str) -> "FunctionalClass":
        for member in cls:
            if member.value == token:
                return member
        raise DataError(f"unknown functional class {token!r}")


@dataclass(frozen=True)
class DayCount:
    """One station-day of 24 hourly volumes; ``None`` marks a missing hour."""

    station: str
    date: dt.date
    hours: tuple

    def __post_init__(self):
        if not self.station:
            raise DataError("station id must be non-empty")
        if len(self.hours) != HOURS_PER_DAY:
            raise DataError(
                f"{self.station} {self.date}: expected {HOURS_PER_DAY} hour slots, "
                f"got {len(self.hours)}"
            )
        for h, v in enumerate(self.hours):
            if v is None:
                continue
            if not math.isfinite(v) or v < 0:
                raise DataError(
                    f"{self.station} {self.date}: hour {h} volume {v!r} is not a "
                    "non-negative finite number"
                )

    @property
    def is_complete(self) -> bool:
        return all(v is not None for v in self.hours)

    def total(self) -> float:
        """Sum of the 24 hourly volumes; requires a complete day."""
        if not self.is_complete:
            raise DataError(f"{self.station} {self.date}: day has missing hours")
        return float(sum(self.hours))


@dataclass(frozen=True)
class StationMeta:
    """Per-station roadway class plus socio-economic attributes."""

    station: str
    functional_class: FunctionalClass
    urban: bool
    income: float
    employment: float
    pct_below_poverty: float
    vehicles: float
    housing_units: float

    def __post_init__(self):
        if not self.station:
            raise DataError("station id must be non-empty")
        bounds = {
            "income": (self.income, 0.0, math.inf),
            "employment": (self.employment, 0.0, math.inf),
            "pct_below_poverty": (self.pct_below_poverty, 0.0, 100.0),
            "vehicles": (self.vehicles, 0.0, math.inf),
            "housing_units": (self.housing_units, 0.0, math.inf),
        }
        for name, (value, lo, hi) in bounds.items():
            if not math.isfinite(value) or not (lo <= value <= hi):
                raise DataError(
                    f"{self.station}: {name}={value!r} outside [{lo}, {hi}]"
                )

    def socio_value(self, field_name: str) -> float:
        if field_name == "urban":
            return 1.0 if self.urban else 0.0
        return float(getattr(self, field_name))


@dataclass(frozen=True)
class Diagnostic:
    """A per-row parse problem; line numbers are 1-based including header."""

    line: int
    message: str


@dataclass(frozen=True)
class CleanEvent:
    """One removal recorded by the cleaner.

    ``kind`` is ``day`` (one incomplete or zero-total day), ``station`` (a
    whole station removed for excessive missing months; ``n_days`` complete
    days were discarded with it), or ``no_socio`` (flag added by
    ``join_meta`` for stations lacking metadata).
    """

    kind: str
    station: str
    reason: str
    date: dt.date | None = None
    n_days: int = 0


@dataclass(frozen=True)
class CleanCorpus:
    """Retained complete station-days plus optional metadata and the log."""

    days: dict
    meta: dict = field(default_factory=dict)
    log: tuple = ()

    def stations(self) -> list:
        return sorted(self.days)

    def station_days(self, station: str) -> tuple:
        return self.days[station]

    def iter_days(self) -> Iterator[DayCount]:
        for station in self.stations():
            yield from self.days[station]

    def n_days(self) -> int:
        return sum(len(v) for v in self.days.values())

    def stations_without_meta(self) -> list:
        return [s for s in self.stations() if s not in self.meta]

    def fingerprint(self) -> str:
        """Content hash of retained days and metadata (order-independent)."""
        h = hashlib.sha256()
        for day in self.iter_days():
            cells = ",".join(_format_volume(v) for v in day.hours)
            h.update(f"{day.station}|{day.date.isoformat()}|{cells}\n".encode())
        for station in sorted(self.meta):
            m = self.meta[station]
            h.update(
                f"{station}|{m.functional_class.value}|{int(m.urban)}|"
                f"{m.income!r}|{m.employment!r}|{m.pct_below_poverty!r}|"
                f"{m.vehicles!r}|{m.housing_units!r}\n".encode()
            )
        return h.hexdigest()


def _format_volume(value) -> str:
    if value is None:
        return "NA"
    f = float(value)
    if f.is_integer():
        return str(int(f))
    return repr(f)


def _parse_hour_cell(cell: str):
    if cell == "NA":
        return None
    value = float(cell)
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"volume {cell!r} is not a non-negative finite number")
    return value


def parse_counts(stream: Iterable) -> tuple:
    """Parse the count CSV into DayCounts plus per-row diagnostics.

    Structural problems (unreadable stream, wrong header) raise DataError;
    malformed rows never abort the parse and are reported as diagnostics
    with their 1-based line number.
    """
    try:
        reader = csv.reader(stream)
        rows = list(reader)
    except (UnicodeDecodeError, csv.Error, OSError) as exc:
        raise DataError(f"count stream unreadable: {exc}") from exc
    if not rows:
        raise DataError("count stream is empty (missing header)")
    if rows[0] != COUNT_HEADER:
        raise DataError(
            f"bad count header: expected {','.join(COUNT_HEADER)!r}"
        )

    records = []
    diagnostics = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(COUNT_HEADER):
            diagnostics.append(
                Diagnostic(line_no, f"wrong column count: expected "
                                    f"{len(COUNT_HEADER)}, got {len(row)}")
            )
            continue
        station = row[0].strip()
        if not station:
            diagnostics.append(Diagnostic(line_no, "empty station_id"))
            continue
        try:
            date = dt.date.fromisoformat(row[1])
        except ValueError:
            diagnostics.append(Diagnostic(line_no, f"bad date {row[1]!r}"))
            continue
        hours = []
        bad_cell = None
        for h, cell in enumerate(row[2:]):
            try:
                hours.append(_parse_hour_cell(cell.strip()))
            except ValueError:
                bad_cell = f"bad volume in h{h:02d}: {cell!r}"
                break
        if bad_cell is not None:
            diagnostics.append(Diagnostic(line_no, bad_cell))
            continue
        records.append(DayCount(station, date, tuple(hours)))
    return records, diagnostics


def parse_meta(stream: Iterable) -> list:
    """Parse the metadata CSV; structural or row errors raise DataError."""
    try:
        reader = csv.reader(stream)
        rows = list(reader)
    except (UnicodeDecodeError, csv.Error, OSError) as exc:
        raise DataError(f"metadata stream unreadable: {exc}") from exc
    if not rows or rows[0] != META_HEADER:
        raise DataError(f"bad metadata header: expected {','.join(META_HEADER)!r}")
    metas = []
    for line_no, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(META_HEADER):
            raise DataError(f"metadata line {line_no}: expected "
                            f"{len(META_HEADER)} columns, got {len(row)}")
        if row[2] not in ("0", "1"):
            raise DataError(f"metadata line {line_no}: urban must be 0 or 1")
        try:
            metas.append(
                StationMeta(
                    station=row[0].strip(),
                    functional_class=FunctionalClass.from_token(row[1].strip()),
                    urban=row[2] == "1",
                    income=float(row[3]),
                    employment=float(row[4]),
                    pct_below_poverty=float(row[5]),
                    vehicles=float(row[6]),
                    housing_units=float(row[7]),
                )
            )
        except ValueError as exc:
            raise DataError(f"metadata line {line_no}: {exc}") from exc
    return metas


def read_counts_csv(path) -> tuple:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_counts(fh)


def read_meta_csv(path) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_meta(fh)


def write_counts_csv(out: TextIO, days: Sequence) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(COUNT_HEADER)
    for day in days:
        writer.writerow(
            [day.station, day.date.isoformat()]
            + [_format_volume(v) for v in day.hours]
        )


def write_meta_csv(out: TextIO, metas: Sequence) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(META_HEADER)
    for m in metas:
        writer.writerow(
            [
                m.station,
                m.functional_class.value,
                "1" if m.urban else "0",
                _format_volume(m.income),
                _format_volume(m.employment),
                _format_volume(m.pct_below_poverty),
                _format_volume(m.vehicles),
                _format_volume(m.housing_units),
            ]
        )


def missing_months(station_records: Sequence) -> int:
    """Months with no complete day, over the years a station reports at all.

    A "missing month" is a calendar month (of any year the station has
    records in) that contains zero complete days.  A station whose records
    span one year is therefore judged against that year's 12 months.
    """
    years = sorted({r.date.year for r in station_records})
    complete = {
        (r.date.year, r.date.month) for r in station_records if r.is_complete
    }
    return sum(
        1 for y in years for m in range(1, 13) if (y, m) not in complete
    )


def clean(records: Sequence, max_missing_months: int = 6) -> CleanCorpus:
    """Drop unusable days and stations, recording every removal.

    Removes each day with any missing hour, each complete day whose total is
    zero (downstream factor math divides by the daily total), and each
    station with more than ``max_missing_months`` missing months.
    """
    if not records:
        raise DataError("no count records to clean")

    by_station = {}
    for record in records:
        by_station.setdefault(record.station, []).append(record)

    kept = {}
    log = []
    for station in sorted(by_station):
        recs = sorted(by_station[station], key=lambda r: r.date)
        n_missing = missing_months(recs)
        usable = []
        day_events = []
        for day in recs:
            if not day.is_complete:
                day_events.append(
                    CleanEvent("day", station, "missing hours", day.date, n_days=1)
                )
            elif day.total() <= 0:
                day_events.append(
                    CleanEvent("day", station, "zero total", day.date, n_days=1)
                )
            else:
                usable.append(day)
        log.extend(day_events)
        if n_missing > max_missing_months:
            log.append(
                CleanEvent(
                    "station",
                    station,
                    f"{n_missing} missing months exceeds limit of "
                    f"{max_missing_months}",
                    n_days=len(usable),
                )
            )
            continue
        if usable:
            kept[station] = tuple(usable)
        else:
            log.append(
                CleanEvent("station", station, "no usable days", n_days=0)
            )

    if not kept:
        raise DataError("empty corpus after cleaning")
    return CleanCorpus(days=kept, log=tuple(log))


def coverage_report(records: Sequence) -> dict:
    """Histogram of stations by number of missing months (buckets 0..12)."""
    by_station = {}
    for record in records:
        by_station.setdefault(record.station, []).append(record)
    buckets = {k: 0 for k in range(13)}
    for station in sorted(by_station):
        buckets[min(missing_months(by_station[station]), 12)] += 1
    return buckets


def join_meta(corpus: CleanCorpus, metas: Sequence) -> CleanCorpus:
    """Attach station metadata; stations without it are flagged, not dropped."""
    seen = {}
    for m in metas:
        if m.station in seen:
            raise DataError(f"duplicate metadata for station {m.station}")
        seen[m.station] = m
    joined = {s: m for s, m in seen.items() if s in corpus.days}
    log = list(corpus.log)
    for station in corpus.stations():
        if station not in joined:
            log.append(
                CleanEvent("no_socio", station,
                           "no socio data: station missing from metadata")
            )
    return CleanCorpus(days=corpus.days, meta=joined, log=tuple(log))
