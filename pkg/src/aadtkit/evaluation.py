"""Metrics, held-out evaluation, cross-model comparison, and validation
protocols (cross-dataset retraining and short-duration counts).

Error is reported on two scales.  Factor-scale metrics score the per-day
expansion-factor predictions of the kernel and network models (their native
target).  AADT-scale metrics exist for every model and are computed both
per day (every station-day's estimate against the station's AADT) and per
station (the year-mean estimate against the station's AADT); short counts
make the day-level numbers meaningful, full years the station-level ones.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .ann import AnnModel, forward_many
from .errors import DataError, UsageError
from .factor import FactorTable
from .factor import estimate as factor_estimate
from .features import (
    AlternativeSpec,
    Scope,
    assemble,
    daily_total,
    ground_truth_aadt,
    ols_spec,
)
from .ingest import CleanCorpus
from .ols import OlsModel, predict_many as ols_predict_many
from .svr import SvrModel, predict_many as svr_predict_many

__all__ = [
    "EvalReport",
    "ComparisonTable",
    "ShortCountCase",
    "rmse",
    "mape",
    "station_set_hash",
    "evaluate",
    "compare",
    "cross_year",
    "short_count",
    "single_day_estimate",
    "make_short_count_cases",
]


def rmse(actual: Sequence, predicted: Sequence) -> float:
    """Root mean square error."""
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape or a.ndim != 1 or len(a) == 0:
        raise UsageError(
            f"need equal nonzero-length vectors, got {a.shape} and {p.shape}"
        )
    return float(np.sqrt(np.mean((a - p) ** 2)))


def mape(actual: Sequence, predicted: Sequence) -> float:
    """Mean absolute percentage error (percent of the actual values)."""
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape or a.ndim != 1 or len(a) == 0:
        raise UsageError(
            f"need equal nonzero-length vectors, got {a.shape} and {p.shape}"
        )
    if np.any(a == 0):
        raise UsageError("actual values must be nonzero for percentage error")
    return float(np.mean(np.abs(a - p) / np.abs(a)) * 100.0)


def station_set_hash(stations: Sequence) -> str:
    joined = ",".join(sorted(stations))
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class EvalReport:
    """Scores of one model over one held-out station set."""

    model_id: str
    alternative: int
    scope: str
    n_rows: int
    n_stations: int
    rmse_factor: float | None
    mape_factor: float | None
    rmse_aadt: float
    mape_aadt: float
    rmse_aadt_station: float
    mape_aadt_station: float
    per_station: tuple
    test_hash: str
    train_hash: str | None = None
    labels: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": "eval_report",
            "version": 1,
            "model": self.model_id,
            "alternative": self.alternative,
            "scope": self.scope,
            "n_rows": self.n_rows,
            "n_stations": self.n_stations,
            "rmse_factor": self.rmse_factor,
            "mape_factor": self.mape_factor,
            "rmse_aadt": self.rmse_aadt,
            "mape_aadt": self.mape_aadt,
            "rmse_aadt_station": self.rmse_aadt_station,
            "mape_aadt_station": self.mape_aadt_station,
            "per_station": [dict(row) for row in self.per_station],
            "test_hash": self.test_hash,
            "train_hash": self.train_hash,
            "labels": dict(self.labels),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        if doc.get("kind") != "eval_report":
            raise DataError(f"not an eval report: kind={doc.get('kind')!r}")
        return cls(
            model_id=doc["model"],
            alternative=int(doc["alternative"]),
            scope=doc["scope"],
            n_rows=int(doc["n_rows"]),
            n_stations=int(doc["n_stations"]),
            rmse_factor=doc["rmse_factor"],
            mape_factor=doc["mape_factor"],
            rmse_aadt=float(doc["rmse_aadt"]),
            mape_aadt=float(doc["mape_aadt"]),
            rmse_aadt_station=float(doc["rmse_aadt_station"]),
            mape_aadt_station=float(doc["mape_aadt_station"]),
            per_station=tuple(doc["per_station"]),
            test_hash=doc["test_hash"],
            train_hash=doc.get("train_hash"),
            labels=doc.get("labels", {}),
        )

    def to_text(self) -> str:
        def fmt(v):
            return "-" if v is None else f"{v:.4f}"

        lines = [
            f"model={self.model_id} alternative={self.alternative} "
            f"scope={self.scope}",
            f"rows={self.n_rows} stations={self.n_stations} "
            f"test_hash={self.test_hash} train_hash={self.train_hash or '-'}",
            f"factor scale : rmse={fmt(self.rmse_factor)} "
            f"mape%={fmt(self.mape_factor)}",
            f"aadt per day : rmse={self.rmse_aadt:.2f} "
            f"mape%={self.mape_aadt:.3f}",
            f"aadt per stn : rmse={self.rmse_aadt_station:.2f} "
            f"mape%={self.mape_aadt_station:.3f}",
            "",
            f"{'station':<10} {'true_aadt':>12} {'mean_estimate':>14} {'mape%':>8}",
        ]
        for row in self.per_station:
            lines.append(
                f"{row['station']:<10} {row['true_aadt']:>12.1f} "
                f"{row['mean_estimate']:>14.1f} {row['mape_pct']:>8.3f}"
            )
        return "\n".join(lines) + "\n"


def _day_estimates(model, corpus, stations, alt, selected_hours):
    """Per-day tuples (station, date, pred_factor|None, est_aadt, true_aadt,
    daily_total) for the given stations."""
    sub = CleanCorpus(
        days={s: corpus.days[s] for s in stations},
        meta={s: m for s, m in corpus.meta.items() if s in stations},
    )
    totals = {
        (s, day.date): daily_total(day)
        for s in stations
        for day in sub.station_days(s)
    }
    rows = []
    if isinstance(model, FactorTable):
        for station in sorted(stations):
            days = sub.station_days(station)
            true_aadt = ground_truth_aadt(days)
            meta = sub.meta.get(station)
            if meta is None:
                raise DataError(
                    f"station {station} has no metadata; cannot pick a factor group"
                )
            for day in days:
                est = factor_estimate(day, model, meta.functional_class)
                rows.append((station, day.date, None, est, true_aadt,
                             totals[(station, day.date)]))
        return rows

    if isinstance(model, OlsModel):
        matrix = assemble(sub, alt, selected_hours, target_kind="aadt")
        estimates = ols_predict_many(model, matrix.X, matrix.columns)
        factors = [None] * matrix.n_rows
    else:
        matrix = assemble(sub, alt, selected_hours, target_kind="aadt_factor")
        if isinstance(model, SvrModel):
            factors = svr_predict_many(model, matrix.X)
        elif isinstance(model, AnnModel):
            factors = forward_many(model, matrix.X)
        else:
            raise UsageError(f"cannot evaluate model of type {type(model).__name__}")
        estimates = [
            f * totals[(matrix.station_ids[i], matrix.dates[i])]
            for i, f in enumerate(factors)
        ]
    truth = {s: ground_truth_aadt(sub.station_days(s)) for s in stations}
    for i in range(matrix.n_rows):
        s = matrix.station_ids[i]
        rows.append(
            (s, matrix.dates[i],
             None if factors[i] is None else float(factors[i]),
             float(estimates[i]), truth[s],
             totals[(s, matrix.dates[i])])
        )
    return rows


def _model_id(model) -> str:
    if isinstance(model, SvrModel):
        return "svr"
    if isinstance(model, AnnModel):
        return "ann"
    if isinstance(model, OlsModel):
        return "ols"
    if isinstance(model, FactorTable):
        return "factor"
    return type(model).__name__


def evaluate(
    model,
    corpus: CleanCorpus,
    test_stations: Sequence,
    alt: AlternativeSpec,
    selected_hours=None,
    train_stations: Sequence | None = None,
    labels: dict | None = None,
) -> EvalReport:
    """Score a fitted model on held-out stations of a cleaned corpus.

    Per-station truth is the station's mean retained daily total.  The
    caller asserts train/test disjointness by passing ``train_stations``;
    both sets are hashed into the report and overlap raises.
    """
    test_stations = sorted(test_stations)
    if not test_stations:
        raise DataError("empty test station set")
    missing = [s for s in test_stations if s not in corpus.days]
    if missing:
        raise DataError(f"test stations not in corpus: {missing}")
    if train_stations is not None:
        overlap = sorted(set(test_stations) & set(train_stations))
        if overlap:
            raise DataError(f"train/test station overlap: {overlap}")

    rows = _day_estimates(model, corpus, test_stations, alt, selected_hours)
    est_aadt = np.array([r[3] for r in rows])
    true_aadt = np.array([r[4] for r in rows])

    rmse_factor = mape_factor = None
    if rows and all(r[2] is not None for r in rows):
        pred_factor = np.array([r[2] for r in rows])
        actual_factor = np.array([r[4] / r[5] for r in rows])
        rmse_factor = rmse(actual_factor, pred_factor)
        mape_factor = mape(actual_factor, pred_factor)

    per_station = []
    stations = sorted({r[0] for r in rows})
    station_true, station_est = [], []
    for s in stations:
        ests = [r[3] for r in rows if r[0] == s]
        truth = next(r[4] for r in rows if r[0] == s)
        mean_est = float(np.mean(ests))
        per_station.append(
            {
                "station": s,
                "true_aadt": truth,
                "mean_estimate": mean_est,
                "mape_pct": abs(mean_est - truth) / truth * 100.0,
                "n_days": len(ests),
            }
        )
        station_true.append(truth)
        station_est.append(mean_est)

    return EvalReport(
        model_id=_model_id(model),
        alternative=alt.alt_id,
        scope=alt.scope.value,
        n_rows=len(rows),
        n_stations=len(stations),
        rmse_factor=rmse_factor,
        mape_factor=mape_factor,
        rmse_aadt=rmse(true_aadt, est_aadt),
        mape_aadt=mape(true_aadt, est_aadt),
        rmse_aadt_station=rmse(station_true, station_est),
        mape_aadt_station=mape(station_true, station_est),
        per_station=tuple(per_station),
        test_hash=station_set_hash(test_stations),
        train_hash=None if train_stations is None else station_set_hash(train_stations),
        labels=labels or {},
    )


@dataclass(frozen=True)
class ComparisonTable:
    """Reports side by side over one shared test set; best rows flagged."""

    rows: tuple
    test_hash: str

    CSV_HEADER = [
        "model", "alternative", "scope", "rmse_factor", "mape_factor",
        "rmse_aadt", "mape_aadt", "best",
    ]

    def to_csv(self, out: TextIO) -> None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.CSV_HEADER)
        for row in self.rows:
            writer.writerow(
                [
                    row["model"],
                    row["alternative"],
                    row["scope"],
                    "" if row["rmse_factor"] is None else repr(row["rmse_factor"]),
                    "" if row["mape_factor"] is None else repr(row["mape_factor"]),
                    repr(row["rmse_aadt"]),
                    repr(row["mape_aadt"]),
                    "1" if row["best"] else "0",
                ]
            )

    def to_text(self) -> str:
        lines = [
            f"comparison over test set {self.test_hash}",
            f"{'model':<8} {'alt':>3} {'scope':<11} {'rmse_f':>8} "
            f"{'mape_f%':>8} {'rmse_aadt':>10} {'mape_aadt%':>10} {'best':>5}",
        ]
        for row in self.rows:
            rf = "-" if row["rmse_factor"] is None else f"{row['rmse_factor']:.4f}"
            mf = "-" if row["mape_factor"] is None else f"{row['mape_factor']:.3f}"
            lines.append(
                f"{row['model']:<8} {row['alternative']:>3} {row['scope']:<11} "
                f"{rf:>8} {mf:>8} {row['rmse_aadt']:>10.2f} "
                f"{row['mape_aadt']:>10.3f} {'*' if row['best'] else '':>5}"
            )
        return "\n".join(lines) + "\n"


def compare(reports: Sequence) -> ComparisonTable:
    """Tabulate reports sharing a test set; flag the best MAPE per scope."""
    if len(reports) < 2:
        raise UsageError("need at least 2 reports to compare")
    hashes = {r.test_hash for r in reports}
    if len(hashes) != 1:
        raise DataError(f"reports cover different test sets: {sorted(hashes)}")
    rows = []
    for r in reports:
        rows.append(
            {
                "model": r.model_id,
                "alternative": r.alternative,
                "scope": r.scope,
                "rmse_factor": r.rmse_factor,
                "mape_factor": r.mape_factor,
                "rmse_aadt": r.rmse_aadt,
                "mape_aadt": r.mape_aadt,
                "best": False,
            }
        )
    for scope in sorted({row["scope"] for row in rows}):
        scoped = [row for row in rows if row["scope"] == scope]
        best = min(row["mape_aadt"] for row in scoped)
        for row in scoped:
            if row["mape_aadt"] == best:
                row["best"] = True
    return ComparisonTable(rows=tuple(rows), test_hash=reports[0].test_hash)


def cross_year(
    train_corpus: CleanCorpus,
    validate_corpus: CleanCorpus,
    method: str,
    alternative_id: int,
    scope: Scope,
    seed: int,
    overrides: dict | None = None,
) -> EvalReport:
    """Retrain from scratch on one corpus, score on another's held-out set.

    The corpora must differ (checked by content fingerprint); the report is
    labelled with both fingerprints and "cross-year".
    """
    fp_train = train_corpus.fingerprint()
    fp_val = validate_corpus.fingerprint()
    if fp_train == fp_val:
        raise DataError("training and validation corpora are identical")
    from .pipeline import train_method  # local import: pipeline pulls models

    bundle = train_method(train_corpus, method, alternative_id, scope, seed,
                          overrides or {})
    _, val_test = _split_like(validate_corpus, scope, seed)
    report = evaluate(
        bundle.model,
        validate_corpus,
        val_test,
        bundle.alt,
        bundle.selected_hours,
        train_stations=bundle.train_stations,
        labels={
            "protocol": "cross-year",
            "train_corpus": fp_train[:16],
            "validate_corpus": fp_val[:16],
        },
    )
    return report


def _split_like(corpus: CleanCorpus, scope: Scope, seed: int) -> tuple:
    from .features import SplitSpec, split

    return split(corpus, SplitSpec(seed=seed), scope)


@dataclass(frozen=True)
class ShortCountCase:
    """A portable-count scenario: a few consecutive complete days."""

    station: str
    days: tuple
    true_aadt: float

    def __post_init__(self):
        if not self.days:
            raise DataError("short-count case needs at least one day")
        if not self.true_aadt > 0:
            raise DataError("short-count truth must be positive")
        dates = [d.date for d in self.days]
        for a, b in zip(dates, dates[1:]):
            if (b - a).days != 1:
                raise DataError(
                    f"{self.station}: short-count days must be consecutive "
                    f"({a} then {b})"
                )
        for d in self.days:
            if not d.is_complete:
                raise DataError(f"{self.station} {d.date}: incomplete day in case")
            if d.station != self.station:
                raise DataError("case contains a day from another station")


def make_short_count_cases(
    corpus: CleanCorpus,
    stations: Sequence,
    k: int,
    truth: dict,
) -> list:
    """First run of k consecutive complete days per station, with given truth."""
    cases = []
    for station in stations:
        days = corpus.station_days(station)
        run = []
        for day in days:
            if run and (day.date - run[-1].date).days != 1:
                run = []
            run.append(day)
            if len(run) == k:
                break
        if len(run) < k:
            raise DataError(f"station {station} has no {k} consecutive days")
        cases.append(ShortCountCase(station, tuple(run), float(truth[station])))
    return cases


def short_count(
    cases: Sequence,
    model,
    alt: AlternativeSpec,
    selected_hours=None,
    train_stations: Sequence | None = None,
    corpus_meta: dict | None = None,
) -> EvalReport:
    """Score AADT estimates from short-duration counts.

    Each case's estimate is the mean of its per-day estimates and is
    compared against the case's own ground truth.  Case stations found in
    the model's training set raise.
    """
    if not cases:
        raise DataError("no short-count cases")
    if train_stations is not None:
        bad = sorted(
            {c.station for c in cases} & set(train_stations)
        )
        if bad:
            raise DataError(f"case stations were trained on: {bad}")

    meta = corpus_meta or {}
    day_rows = []
    per_station = []
    case_true, case_est = [], []
    for case in sorted(cases, key=lambda c: c.station):
        ests = []
        for day in case.days:
            ests.append(
                single_day_estimate(model, day, alt, selected_hours,
                                    meta.get(case.station))
            )
        mean_est = float(np.mean(ests))
        per_station.append(
            {
                "station": case.station,
                "true_aadt": case.true_aadt,
                "mean_estimate": mean_est,
                "mape_pct": abs(mean_est - case.true_aadt) / case.true_aadt * 100.0,
                "n_days": len(case.days),
            }
        )
        case_true.append(case.true_aadt)
        case_est.append(mean_est)
        day_rows.extend((case.true_aadt, e) for e in ests)

    day_true = np.array([r[0] for r in day_rows])
    day_est = np.array([r[1] for r in day_rows])
    stations = [c.station for c in cases]
    return EvalReport(
        model_id=_model_id(model),
        alternative=alt.alt_id,
        scope=alt.scope.value,
        n_rows=len(day_rows),
        n_stations=len(cases),
        rmse_factor=None,
        mape_factor=None,
        rmse_aadt=rmse(day_true, day_est),
        mape_aadt=mape(day_true, day_est),
        rmse_aadt_station=rmse(case_true, case_est),
        mape_aadt_station=mape(case_true, case_est),
        per_station=tuple(per_station),
        test_hash=station_set_hash(stations),
        train_hash=None if train_stations is None else station_set_hash(train_stations),
        labels={"protocol": "short-count"},
    )


def single_day_estimate(model, day, alt, selected_hours=None, meta=None) -> float:
    """AADT estimate for one complete day from any fitted model kind."""
    from .ann import predict_aadt as ann_predict_aadt
    from .ols import predict as ols_predict
    from .svr import predict_aadt as svr_predict_aadt

    if isinstance(model, SvrModel):
        return svr_predict_aadt(model, day, alt, selected_hours, meta)
    if isinstance(model, AnnModel):
        return ann_predict_aadt(model, day, alt, selected_hours, meta)
    if isinstance(model, OlsModel):
        from .features import feature_columns, feature_row

        row = feature_row(day, alt, selected_hours, meta)
        named = dict(zip(feature_columns(alt, selected_hours), row))
        return ols_predict(model, named)
    if isinstance(model, FactorTable):
        if meta is None:
            raise DataError(
                f"station {day.station} has no metadata; cannot pick a factor group"
            )
        return factor_estimate(day, model, meta.functional_class)
    raise UsageError(f"cannot predict with model of type {type(model).__name__}")
