"""Synthetic multi-station count corpora with known ground truth.

Volumes follow a separable model: each station-day-hour volume is the
station's annual average daily traffic scaled by a monthly factor, a
day-of-week factor, an hour-of-day share, and (optionally) multiplicative
lognormal noise with mean one.  Because every factor is planted, downstream
estimators can be scored against exact truth instead of another estimate.

Generation is a pure function of the configuration: every station draws
from its own substream derived from (seed, station index), so corpora are
bit-reproducible and stations can be generated independently.
"""

from __future__ import annotations

import calendar
import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .errors import DataError, UsageError
from .ingest import DayCount, FunctionalClass, StationMeta

__all__ = [
    "SynthConfig",
    "SynthTruth",
    "generate",
    "monthly_pattern",
    "dow_pattern",
    "commuter_hourly_profile",
    "uniform_hourly_profile",
    "write_truth_csv",
    "read_truth_csv",
]

TRUTH_HEADER = ["station_id", "true_aadt"]

_CLASS_PREFIX = {
    FunctionalClass.INTERSTATE_EXPRESSWAY: "I",
    FunctionalClass.PRINCIPAL_MINOR_ARTERIAL: "A",
    FunctionalClass.COLLECTOR: "C",
    FunctionalClass.LOCAL: "L",
}

# Relative weekday shape: light build through the week, Friday peak,
# weekend dip.  Scaled by the requested amplitude and renormalized.
_DOW_SHAPE = np.array([0.45, 0.55, 0.55, 0.65, 1.0, -1.0, -0.85])

# Plausible commuter curve with AM and PM peaks (share of daily volume).
_COMMUTER_SHAPE = np.array(
    [
        0.008, 0.005, 0.004, 0.004, 0.008, 0.022, 0.052, 0.078,
        0.065, 0.048, 0.044, 0.047, 0.052, 0.053, 0.058, 0.068,
        0.082, 0.088, 0.066, 0.047, 0.035, 0.028, 0.020, 0.018,
    ]
)

_SOCIO_RANGES = {
    "income": (25_000.0, 95_000.0),
    "employment": (500.0, 60_000.0),
    "pct_below_poverty": (3.0, 35.0),
    "vehicles": (2_000.0, 120_000.0),
    "housing_units": (1_000.0, 60_000.0),
}


def monthly_pattern(amplitude: float, year: int | None = None) -> tuple:
    """Sinusoidal monthly factors (summer peak) with mean exactly one.

    With ``year`` given, the vector is additionally balanced so that its
    day-weighted mean over that calendar year is one, i.e. the mean daily
    total over the generated year reproduces the planted AADT exactly in
    the noise-free case (month lengths differ, so an unweighted mean-one
    vector alone does not guarantee that).
    """
    k = np.arange(12)
    m = 1.0 + amplitude * np.cos(2.0 * np.pi * (k - 6) / 12.0)
    m = m / m.mean()
    if year is not None:
        days = np.array([calendar.monthrange(year, mo)[1] for mo in range(1, 13)])
        deficit = days.sum() - float(days @ m)
        # Shift weight between two months of unequal length: keeps the
        # unweighted mean intact while fixing the day-weighted mean.
        a = deficit / (days[0] - days[1])
        m[0] += a
        m[1] -= a
    if np.any(m <= 0):
        raise UsageError(f"monthly amplitude {amplitude} yields non-positive factors")
    return tuple(float(v) for v in m)


def dow_pattern(amplitude: float) -> tuple:
    """Day-of-week factors (Monday first) with mean exactly one."""
    w = 1.0 + amplitude * _DOW_SHAPE / np.abs(_DOW_SHAPE).max()
    w = w / w.mean()
    if np.any(w <= 0):
        raise UsageError(f"dow amplitude {amplitude} yields non-positive factors")
    return tuple(float(v) for v in w)


def commuter_hourly_profile() -> tuple:
    """Double-peak hourly shares summing to one."""
    p = _COMMUTER_SHAPE / _COMMUTER_SHAPE.sum()
    return tuple(float(v) for v in p)


def uniform_hourly_profile() -> tuple:
    return tuple([1.0 / 24.0] * 24)


@dataclass(frozen=True)
class SynthConfig:
    """Everything the generator needs; validated on construction."""

    stations_per_class: dict
    aadt_range: dict
    monthly_factors: tuple
    dow_factors: tuple
    hourly_profile: tuple
    noise_sigma: float = 0.0
    missing_day_rate: float = 0.0
    missing_hour_rate: float = 0.0
    year: int = 2011
    mode: str = "realistic"
    seed: int = 0
    socio_link: float = 0.0

    def __post_init__(self):
        if self.mode not in ("exact", "realistic"):
            raise UsageError(f"mode must be 'exact' or 'realistic', got {self.mode!r}")
        if sum(self.stations_per_class.values()) <= 0:
            raise UsageError("empty corpus: stations_per_class sums to zero")
        for fc, n in self.stations_per_class.items():
            if n < 0:
                raise UsageError(f"negative station count for {fc}")
            if n > 0 and fc not in self.aadt_range:
                raise UsageError(f"missing aadt_range for {fc}")
        for fc, (lo, hi) in self.aadt_range.items():
            if not (0 < lo <= hi):
                raise UsageError(f"aadt_range for {fc} must satisfy 0 < low <= high")
        if len(self.monthly_factors) != 12:
            raise UsageError("monthly_factors must have 12 entries")
        if len(self.dow_factors) != 7:
            raise UsageError("dow_factors must have 7 entries")
        if len(self.hourly_profile) != 24:
            raise UsageError("hourly_profile must have 24 entries")
        if any(v <= 0 for v in self.monthly_factors):
            raise UsageError("monthly_factors must be positive")
        if any(v <= 0 for v in self.dow_factors):
            raise UsageError("dow_factors must be positive")
        if any(v < 0 for v in self.hourly_profile):
            raise UsageError("hourly_profile must be non-negative")
        if abs(sum(self.monthly_factors) / 12.0 - 1.0) > 1e-12:
            raise UsageError("monthly_factors mean must be 1 within 1e-12")
        if abs(sum(self.dow_factors) / 7.0 - 1.0) > 1e-12:
            raise UsageError("dow_factors mean must be 1 within 1e-12")
        if abs(sum(self.hourly_profile) - 1.0) > 1e-12:
            raise UsageError("hourly_profile must sum to 1 within 1e-12")
        if self.noise_sigma < 0:
            raise UsageError("noise_sigma must be >= 0")
        for name in ("missing_day_rate", "missing_hour_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise UsageError(f"{name} must be in [0, 1]")
        if not 0.0 <= self.socio_link <= 1.0:
            raise UsageError("socio_link must be in [0, 1]")


@dataclass(frozen=True)
class SynthTruth:
    """Planted ground truth for one generated corpus."""

    true_aadt: dict
    monthly_factors: tuple
    dow_factors: tuple
    hourly_profile: tuple
    year: int
    mode: str


def _year_dates(year: int) -> list:
    start = dt.date(year, 1, 1)
    n = 366 if calendar.isleap(year) else 365
    return [start + dt.timedelta(days=i) for i in range(n)]


def _station_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, index])


def _draw_socio(rng: np.random.Generator, aadt_pos: float, link: float) -> dict:
    values = {}
    for name, (lo, hi) in _SOCIO_RANGES.items():
        u = rng.random()
        q = min(max((1.0 - link) * u + link * aadt_pos, 0.0), 1.0)
        values[name] = round(lo + (hi - lo) * q, 2)
    values["urban"] = bool(rng.random() < 0.5)
    return values


def generate(config: SynthConfig) -> tuple:
    """Generate (day counts, station metas, truth) for one calendar year.

    Identical configs yield identical output.  Each hour's volume is
    ``aadt * monthly[month] * dow[weekday] * profile[hour] * eps`` with
    ``eps`` lognormal of mean one (exactly 1 when noise_sigma is 0);
    ``realistic`` mode rounds volumes to whole vehicles.  Whole days and
    individual hours are then knocked out at the configured rates.
    """
    dates = _year_dates(config.year)
    months = np.array([d.month - 1 for d in dates])
    dows = np.array([d.weekday() for d in dates])
    m = np.asarray(config.monthly_factors)
    w = np.asarray(config.dow_factors)
    p = np.asarray(config.hourly_profile)

    days = []
    metas = []
    truth_aadt = {}
    station_index = 0
    for fc in FunctionalClass:
        count = config.stations_per_class.get(fc, 0)
        for i in range(count):
            station = f"{_CLASS_PREFIX[fc]}{i + 1:03d}"
            rng = _station_rng(config.seed, station_index)
            station_index += 1
            lo, hi = config.aadt_range[fc]
            aadt = float(rng.uniform(lo, hi))
            socio = _draw_socio(rng, (aadt - lo) / (hi - lo) if hi > lo else 0.5,
                                config.socio_link)

            base = aadt * m[months][:, None] * w[dows][:, None] * p[None, :]
            if config.noise_sigma > 0:
                eps = rng.lognormal(
                    mean=-0.5 * config.noise_sigma ** 2,
                    sigma=config.noise_sigma,
                    size=base.shape,
                )
                volumes = base * eps
            else:
                volumes = base
            if config.mode == "realistic":
                volumes = np.rint(volumes)

            drop_day = rng.random(len(dates)) < config.missing_day_rate
            drop_hour = rng.random(base.shape) < config.missing_hour_rate

            for di, date in enumerate(dates):
                if drop_day[di]:
                    continue
                hours = tuple(
                    None if drop_hour[di, h] else float(volumes[di, h])
                    for h in range(24)
                )
                days.append(DayCount(station, date, hours))

            metas.append(
                StationMeta(
                    station=station,
                    functional_class=fc,
                    urban=socio["urban"],
                    income=socio["income"],
                    employment=socio["employment"],
                    pct_below_poverty=socio["pct_below_poverty"],
                    vehicles=socio["vehicles"],
                    housing_units=socio["housing_units"],
                )
            )
            truth_aadt[station] = aadt

    days.sort(key=lambda d: (d.station, d.date))
    metas.sort(key=lambda x: x.station)
    truth = SynthTruth(
        true_aadt=truth_aadt,
        monthly_factors=tuple(config.monthly_factors),
        dow_factors=tuple(config.dow_factors),
        hourly_profile=tuple(config.hourly_profile),
        year=config.year,
        mode=config.mode,
    )
    return days, metas, truth


def write_truth_csv(out: TextIO, truth: SynthTruth) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRUTH_HEADER)
    for station in sorted(truth.true_aadt):
        writer.writerow([station, repr(truth.true_aadt[station])])


def read_truth_csv(path) -> dict:
    """Load a truth file as {station_id: true_aadt}."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TRUTH_HEADER:
        raise DataError(f"bad truth header: expected {','.join(TRUTH_HEADER)!r}")
    out = {}
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise DataError(f"truth line {line_no}: expected 2 columns")
        try:
            value = float(row[1])
        except ValueError as exc:
            raise DataError(f"truth line {line_no}: {exc}") from exc
        if not math.isfinite(value) or value <= 0:
            raise DataError(f"truth line {line_no}: true_aadt must be positive")
        out[row[0]] = value
    return out
