"""Ordinary least squares with stepwise variable selection.

The solver runs on a pivoted QR decomposition of the intercept-augmented
design matrix, so rank deficiencies are detected and reported by column
name instead of silently producing one of many minimizers.  Stepwise
selection alternates forward steps (add the candidate with the smallest
partial-F p-value while it clears ``p_enter``) and backward steps (drop
the included column with the largest p-value once it exceeds
``p_remove``), with ties broken by the lowest canonical column index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats
from scipy.linalg import qr, solve_triangular

from .errors import DataError, UsageError

__all__ = [
    "OlsModel",
    "StepwiseConfig",
    "fit",
    "stepwise",
    "correlation_check",
    "predict",
    "predict_many",
]


@dataclass(frozen=True)
class OlsModel:
    """Fitted linear model keyed by column name."""

    intercept: float
    coefficients: dict
    selected: tuple
    dof: int
    r_squared: float
    trace: tuple = ()
    columns: tuple = ()

    def to_dict(self) -> dict:
        return {
            "kind": "ols",
            "version": 1,
            "intercept": float(self.intercept),
            "coefficients": {k: float(v) for k, v in self.coefficients.items()},
            "selected": list(self.selected),
            "dof": int(self.dof),
            "r_squared": float(self.r_squared),
            "trace": [list(t) for t in self.trace],
            "columns": list(self.columns),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "OlsModel":
        if doc.get("kind") != "ols":
            raise DataError(f"not an ols artifact: kind={doc.get('kind')!r}")
        return cls(
            intercept=float(doc["intercept"]),
            coefficients={k: float(v) for k, v in doc["coefficients"].items()},
            selected=tuple(doc["selected"]),
            dof=int(doc["dof"]),
            r_squared=float(doc["r_squared"]),
            trace=tuple(tuple(t) for t in doc.get("trace", [])),
            columns=tuple(doc.get("columns", ())),
        )


@dataclass(frozen=True)
class StepwiseConfig:
    p_enter: float = 0.05
    p_remove: float = 0.10
    max_steps: int = 100

    def __post_init__(self):
        if not 0 < self.p_enter <= self.p_remove < 1:
            raise UsageError(
                "thresholds must satisfy 0 < p_enter <= p_remove < 1"
            )
        if self.max_steps < 1:
            raise UsageError("max_steps must be >= 1")


def _qr_solve(A: np.ndarray, y: np.ndarray, names: Sequence) -> tuple:
    """Least squares via pivoted QR; returns (coef, rss, cov_unscaled).

    Raises DataError naming the dependent columns on rank deficiency.
    """
    n, p = A.shape
    Q, R, piv = qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(n, p) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < p:
        dependent = [names[k] for k in piv[rank:]]
        raise DataError(f"rank-deficient fit; dependent columns: {dependent}")
    c = Q.T @ y
    coef_piv = solve_triangular(R, c)
    coef = np.empty(p)
    coef[piv] = coef_piv
    resid = y - A @ coef
    rss = float(resid @ resid)
    r_inv = solve_triangular(R, np.eye(p))
    cov_piv = r_inv @ r_inv.T  # (A'A)^-1 in pivoted order
    cov = np.empty((p, p))
    cov[np.ix_(piv, piv)] = cov_piv
    return coef, rss, cov


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((X.shape[0], 1)), X])


def fit(X: np.ndarray, y: np.ndarray, columns: Sequence | None = None) -> OlsModel:
    """Least-squares fit with intercept; R-squared on the fitting data."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n != len(y):
        raise UsageError(f"X {X.shape} and y {y.shape} do not align")
    if n <= p + 1:
        raise UsageError(f"{n} rows cannot fit {p} columns plus intercept")
    if columns is None:
        columns = tuple(f"x{i}" for i in range(p))
    columns = tuple(columns)

    names = ("_intercept",) + columns
    coef, rss, _ = _qr_solve(_augment(X), y, names)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 0.0 if sst <= 0 else 1.0 - rss / sst
    return OlsModel(
        intercept=float(coef[0]),
        coefficients={c: float(v) for c, v in zip(columns, coef[1:])},
        selected=columns,
        dof=n - p - 1,
        r_squared=min(max(r2, 0.0), 1.0),
        columns=columns,
    )


def _subset_stats(X: np.ndarray, y: np.ndarray, cols: Sequence, names) -> tuple:
    """(rss, coef, cov) for the intercept + cols subset fit."""
    A = _augment(X[:, list(cols)]) if cols else _augment(np.empty((len(y), 0)))
    subset_names = ("_intercept",) + tuple(names[j] for j in cols)
    coef, rss, cov = _qr_solve(A, y, subset_names)
    return rss, coef, cov


def stepwise(
    X: np.ndarray,
    y: np.ndarray,
    cfg: StepwiseConfig = StepwiseConfig(),
    columns: Sequence | None = None,
) -> OlsModel:
    """Forward/backward selection on partial-F p-values.

    Candidates that would make the fit rank-deficient are skipped.  The
    returned model is refit on the surviving columns and carries the
    ordered add/remove trace.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n != len(y):
        raise UsageError(f"X {X.shape} and y {y.shape} do not align")
    if n <= p + 1:
        raise UsageError(f"{n} rows cannot drive selection over {p} columns")
    if columns is None:
        columns = tuple(f"x{i}" for i in range(p))
    columns = tuple(columns)

    selected = []
    trace = []
    rss_current = float(np.sum((y - y.mean()) ** 2))
    for _ in range(cfg.max_steps):
        changed = False

        # Forward: smallest partial-F p-value among candidates.
        best = None
        for j in range(p):
            if j in selected:
                continue
            try:
                rss_j, _, _ = _subset_stats(X, y, selected + [j], columns)
            except DataError:
                continue
            dof_j = n - len(selected) - 2
            if dof_j <= 0:
                continue
            if rss_j <= 0:
                pval = 0.0
            else:
                f_stat = (rss_current - rss_j) / (rss_j / dof_j)
                pval = float(stats.f.sf(max(f_stat, 0.0), 1, dof_j))
            if best is None or pval < best[1]:
                best = (j, pval, rss_j)
        if best is not None and best[1] < cfg.p_enter:
            selected.append(best[0])
            rss_current = best[2]
            trace.append(("add", columns[best[0]], best[1]))
            changed = True

        # Backward: largest coefficient p-value among included columns.
        if selected:
            rss_s, coef, cov = _subset_stats(X, y, selected, columns)
            dof_s = n - len(selected) - 1
            sigma2 = rss_s / dof_s if dof_s > 0 else 0.0
            worst = None
            for pos, j in enumerate(sorted(selected)):
                k = selected.index(j) + 1  # position in the subset fit
                se = np.sqrt(max(sigma2 * cov[k, k], 0.0))
                if se == 0.0:
                    pval = 0.0
                else:
                    t = coef[k] / se
                    pval = float(2.0 * stats.t.sf(abs(t), dof_s))
                if worst is None or pval > worst[1]:
                    worst = (j, pval)
            if worst is not None and worst[1] > cfg.p_remove:
                selected.remove(worst[0])
                trace.append(("remove", columns[worst[0]], worst[1]))
                rss_current, _, _ = _subset_stats(X, y, selected, columns)
                changed = True

        if not changed:
            break

    final_cols = sorted(selected)
    if final_cols:
        model = fit(X[:, final_cols], y, [columns[j] for j in final_cols])
    else:
        model = OlsModel(
            intercept=float(y.mean()),
            coefficients={},
            selected=(),
            dof=n - 1,
            r_squared=0.0,
            columns=columns,
        )
    return OlsModel(
        intercept=model.intercept,
        coefficients=model.coefficients,
        selected=model.selected,
        dof=model.dof,
        r_squared=model.r_squared,
        trace=tuple(trace),
        columns=columns,
    )


def correlation_check(
    X: np.ndarray,
    columns: Sequence | None = None,
    threshold: float = 0.7,
) -> tuple:
    """Pairs with |Pearson r| >= threshold, plus zero-variance columns."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, p = X.shape
    if n < 2:
        raise UsageError("need at least 2 rows for correlations")
    if columns is None:
        columns = tuple(f"x{i}" for i in range(p))
    std = X.std(axis=0)
    zero_variance = [columns[j] for j in range(p) if std[j] == 0.0]
    live = [j for j in range(p) if std[j] > 0.0]
    flagged = []
    if len(live) >= 2:
        corr = np.corrcoef(X[:, live], rowvar=False)
        for a in range(len(live)):
            for b in range(a + 1, len(live)):
                r = float(corr[a, b])
                if abs(r) >= threshold:
                    flagged.append((columns[live[a]], columns[live[b]], r))
    return flagged, zero_variance


def predict(model: OlsModel, x: Mapping) -> float:
    """Intercept plus the weighted selected columns of one named row."""
    value = model.intercept
    for name, coef in model.coefficients.items():
        if name not in x:
            raise UsageError(f"row is missing selected column {name!r}")
        value += coef * float(x[name])
    return float(value)


def predict_many(model: OlsModel, X: np.ndarray, columns: Sequence) -> np.ndarray:
    """Vectorized prediction for rows whose columns are named by ``columns``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    index = {c: k for k, c in enumerate(columns)}
    out = np.full(X.shape[0], model.intercept)
    for name, coef in model.coefficients.items():
        if name not in index:
            raise UsageError(f"matrix is missing selected column {name!r}")
        out += coef * X[:, index[name]]
    return out
