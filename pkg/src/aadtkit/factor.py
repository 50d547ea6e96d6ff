"""Seasonal-factor baseline: the expansion-factor method DOTs run today.

Permanent-count stations are grouped by roadway functional class.  For each
group and month, the factor is the unweighted mean over member stations of
(station AADT / station monthly average daily total).  A short count is
expanded to AADT by multiplying its daily total with the group's monthly
factor and a pass-through axle correction.  No day-of-week factor exists in
this baseline; that blind spot is what the learned models exploit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .features import daily_total, ground_truth_aadt
from .ingest import CleanCorpus, DayCount, FunctionalClass

__all__ = ["FactorTable", "build_factors", "estimate"]


@dataclass(frozen=True)
class FactorTable:
    """Per-class monthly factors with provenance of contributing stations."""

    monthly: dict
    axle_correction: float = 1.0
    provenance: dict = None

    def groups(self) -> list:
        return sorted(self.monthly, key=lambda fc: fc.value)

    def to_dict(self) -> dict:
        return {
            "kind": "factor",
            "version": 1,
            "axle_correction": float(self.axle_correction),
            "monthly": {
                fc.value: [float(v) for v in factors]
                for fc, factors in self.monthly.items()
            },
            "provenance": {
                fc.value: list(stations)
                for fc, stations in (self.provenance or {}).items()
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FactorTable":
        if doc.get("kind") != "factor":
            raise DataError(f"not a factor artifact: kind={doc.get('kind')!r}")
        monthly = {
            FunctionalClass.from_token(token): tuple(float(v) for v in vals)
            for token, vals in doc["monthly"].items()
        }
        provenance = {
            FunctionalClass.from_token(token): tuple(stations)
            for token, stations in doc.get("provenance", {}).items()
        }
        return cls(
            monthly=monthly,
            axle_correction=float(doc.get("axle_correction", 1.0)),
            provenance=provenance,
        )


def build_factors(corpus: CleanCorpus, axle_correction: float = 1.0) -> FactorTable:
    """Monthly factors per functional-class group from a cleaned corpus.

    Station factor for month m is AADT / mean daily total over the station's
    retained days of m; the group factor is the unweighted mean over member
    stations that have data for m.  A month no member station covers raises.
    Only stations with metadata (hence a known class) contribute.
    """
    if axle_correction <= 0:
        raise DataError("axle correction must be positive")
    groups = {}
    for station in corpus.stations():
        meta = corpus.meta.get(station)
        if meta is None:
            continue
        groups.setdefault(meta.functional_class, []).append(station)
    if not groups:
        raise DataError("no stations carry metadata; cannot build factor groups")

    monthly = {}
    provenance = {}
    for fc in sorted(groups, key=lambda f: f.value):
        stations = groups[fc]
        per_month = []
        for month in range(1, 13):
            ratios = []
            for station in stations:
                days = corpus.station_days(station)
                totals = [d.total() for d in days if d.date.month == month]
                if not totals:
                    continue
                madt = float(np.mean(totals))
                if madt <= 0:
                    continue
                ratios.append(ground_truth_aadt(days) / madt)
            if not ratios:
                raise DataError(
                    f"group {fc.value!r} has no data for month {month}"
                )
            per_month.append(float(np.mean(ratios)))
        monthly[fc] = tuple(per_month)
        provenance[fc] = tuple(stations)
    return FactorTable(
        monthly=monthly,
        axle_correction=float(axle_correction),
        provenance=provenance,
    )


def estimate(day: DayCount, table: FactorTable, group: FunctionalClass) -> float:
    """AADT from one complete day: total x monthly factor x axle correction."""
    if group not in table.monthly:
        raise DataError(f"factor table has no group {group.value!r}")
    factor = table.monthly[group][day.date.month - 1]
    return daily_total(day) * factor * table.axle_correction
