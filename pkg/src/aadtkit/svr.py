"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual quadratic program is solved by sequential minimal optimization:
at every step the maximal-violating pair of dual coordinates is updated
analytically, and convergence is declared when the largest violation of
the optimality conditions drops below ``kkt_tol``.  Features are
standardized internally (training mean and spread are stored on the
model); targets are used on their natural scale, so ``epsilon`` is a tube
half-width in target units.

Desk-scale by design: the full kernel matrix is materialized, so training
set sizes should stay in the low thousands of rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError, NumericalError, UsageError
from .features import AlternativeSpec, daily_total, feature_row
from .ingest import DayCount, StationMeta
from .seeding import rng_for

__all__ = [
    "SvrParams",
    "SvrModel",
    "CvGrid",
    "rbf",
    "rbf_matrix",
    "solve_dual",
    "dual_objective",
    "train",
    "predict",
    "predict_many",
    "predict_aadt",
    "grid_search",
]


@dataclass(frozen=True)
class SvrParams:
    """Training hyperparameters; ``epsilon`` may be zero, the rest positive."""

    C: float = 8.0
    gamma: float = 0.05
    epsilon: float = 0.01
    kkt_tol: float = 1e-3
    max_passes: int = 2_000_000

    def __post_init__(self):
        if not self.C > 0:
            raise UsageError(f"C must be positive, got {self.C}")
        if not self.gamma > 0:
            raise UsageError(f"gamma must be positive, got {self.gamma}")
        if self.epsilon < 0:
            raise UsageError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.kkt_tol > 0:
            raise UsageError(f"kkt_tol must be positive, got {self.kkt_tol}")
        if self.max_passes < 1:
            raise UsageError("max_passes must be >= 1")


@dataclass(frozen=True, eq=False)
class SvrModel:
    """Fitted regressor: support rows (scaled), dual coefficients, bias."""

    columns: tuple
    gamma: float
    epsilon: float
    C: float
    bias: float
    support_X: np.ndarray
    beta: np.ndarray
    scale_mean: np.ndarray
    scale_std: np.ndarray
    n_iterations: int = 0

    @property
    def n_support(self) -> int:
        return len(self.beta)

    def scale(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.scale_mean) / self.scale_std

    def to_dict(self) -> dict:
        return {
            "kind": "svr",
            "version": 1,
            "columns": list(self.columns),
            "gamma": float(self.gamma),
            "epsilon": float(self.epsilon),
            "C": float(self.C),
            "b": float(self.bias),
            "scale_mean": [float(v) for v in self.scale_mean],
            "scale_std": [float(v) for v in self.scale_std],
            "support_rows": [[float(v) for v in row] for row in self.support_X],
            "betas": [float(v) for v in self.beta],
            "n_iterations": int(self.n_iterations),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SvrModel":
        if doc.get("kind") != "svr":
            raise DataError(f"not an svr artifact: kind={doc.get('kind')!r}")
        d = len(doc["scale_mean"])
        support = np.array(doc["support_rows"], dtype=float).reshape(-1, d)
        return cls(
            columns=tuple(doc["columns"]),
            gamma=float(doc["gamma"]),
            epsilon=float(doc["epsilon"]),
            C=float(doc["C"]),
            bias=float(doc["b"]),
            support_X=support,
            beta=np.array(doc["betas"], dtype=float),
            scale_mean=np.array(doc["scale_mean"], dtype=float),
            scale_std=np.array(doc["scale_std"], dtype=float),
            n_iterations=int(doc.get("n_iterations", 0)),
        )


@dataclass(frozen=True)
class CvGrid:
    """Power-of-two search grid with k-fold cross validation."""

    c_values: tuple = tuple(2.0 ** k for k in range(-3, 16))
    gamma_values: tuple = tuple(2.0 ** k for k in range(-15, 4))
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.c_values or not self.gamma_values:
            raise UsageError("grid must have at least one C and one gamma")
        if self.folds < 2:
            raise UsageError("folds must be >= 2")


def rbf(x: Sequence, z: Sequence, gamma: float) -> float:
    """exp(-gamma * squared distance); 1 at zero distance."""
    xa = np.asarray(x, dtype=float)
    za = np.asarray(z, dtype=float)
    if xa.shape != za.shape:
        raise UsageError(f"dimension mismatch: {xa.shape} vs {za.shape}")
    diff = xa - za
    return float(np.exp(-gamma * float(diff @ diff)))


def rbf_matrix(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    return np.exp(-gamma * cdist(A, B, "sqeuclidean"))


def solve_dual(
    K: np.ndarray,
    y: np.ndarray,
    C: float,
    epsilon: float,
    kkt_tol: float = 1e-3,
    max_passes: int = 2_000_000,
) -> tuple:
    """SMO on the tube-regression dual for a precomputed kernel matrix.

    Returns ``(alpha, alpha_star, bias, n_iterations)`` where the dual
    coefficient of sample i is ``alpha[i] - alpha_star[i]``.  Raises
    NumericalError (carrying ``.violation``) if the largest optimality
    violation is still above ``kkt_tol`` after ``max_passes`` updates.
    """
    n = len(y)
    alpha = np.zeros(n)
    alpha_star = np.zeros(n)
    f = np.zeros(n)  # K @ (alpha - alpha_star)
    tau = 1e-12

    it = 0
    while True:
        sp = y - f - epsilon  # optimality score of the +side coordinates
        sm = y - f + epsilon  # optimality score of the -side coordinates
        up_plus = np.where(alpha < C, sp, -np.inf)
        up_minus = np.where(alpha_star > 0, sm, -np.inf)
        low_plus = np.where(alpha > 0, sp, np.inf)
        low_minus = np.where(alpha_star < C, sm, np.inf)

        i_plus = int(np.argmax(up_plus))
        i_minus = int(np.argmax(up_minus))
        if up_plus[i_plus] >= up_minus[i_minus]:
            i, i_side, m = i_plus, +1, up_plus[i_plus]
        else:
            i, i_side, m = i_minus, -1, up_minus[i_minus]
        j_plus = int(np.argmin(low_plus))
        j_minus = int(np.argmin(low_minus))
        if low_plus[j_plus] <= low_minus[j_minus]:
            j, j_side, M = j_plus, +1, low_plus[j_plus]
        else:
            j, j_side, M = j_minus, -1, low_minus[j_minus]

        violation = m - M
        if violation <= kkt_tol:
            break
        if it >= max_passes:
            err = NumericalError(
                f"SMO did not converge in {max_passes} iterations "
                f"(KKT violation {violation:.3e} > {kkt_tol:.3e})"
            )
            err.violation = float(violation)
            raise err

        a = K[i, i] + K[j, j] - 2.0 * K[i, j]
        if a < tau:
            a = tau
        delta = violation / a
        # Box caps: i moves "up" within its side, j moves "down".
        cap_i = (C - alpha[i]) if i_side > 0 else alpha_star[i]
        cap_j = alpha[j] if j_side > 0 else (C - alpha_star[j])
        delta = min(delta, cap_i, cap_j)

        if i_side > 0:
            alpha[i] += delta
        else:
            alpha_star[i] -= delta
        if j_side > 0:
            alpha[j] -= delta
        else:
            alpha_star[j] += delta
        f += delta * (K[:, i] - K[:, j])
        it += 1

    # Bias from free coordinates when any exist, else the midpoint of the
    # optimality interval.
    free_plus = (alpha > 0) & (alpha < C)
    free_minus = (alpha_star > 0) & (alpha_star < C)
    parts = []
    if free_plus.any():
        parts.append((y - f - epsilon)[free_plus])
    if free_minus.any():
        parts.append((y - f + epsilon)[free_minus])
    if parts:
        bias = float(np.concatenate(parts).mean())
    else:
        bias = float((m + M) / 2.0)
    return alpha, alpha_star, bias, it


def dual_objective(
    K: np.ndarray,
    y: np.ndarray,
    epsilon: float,
    alpha: np.ndarray,
    alpha_star: np.ndarray,
) -> float:
    """Minimization-form dual value; lower is better."""
    u = alpha - alpha_star
    return float(
        0.5 * u @ K @ u + epsilon * np.sum(alpha + alpha_star) - y @ u
    )


def _scaling_stats(X: np.ndarray) -> tuple:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


def train(
    X: np.ndarray,
    y: np.ndarray,
    params: SvrParams,
    columns: Sequence | None = None,
) -> SvrModel:
    """Fit the regressor; returns a model satisfying the dual optimality
    conditions within ``params.kkt_tol``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise UsageError(f"X {X.shape} and y {y.shape} do not align")
    if X.shape[0] < 2:
        raise UsageError("need at least 2 training rows")
    if columns is None:
        columns = tuple(f"x{i}" for i in range(X.shape[1]))
    mean, std = _scaling_stats(X)
    Xs = (X - mean) / std
    K = rbf_matrix(Xs, Xs, params.gamma)
    alpha, alpha_star, bias, iters = solve_dual(
        K, y, params.C, params.epsilon, params.kkt_tol, params.max_passes
    )
    beta = alpha - alpha_star
    mask = beta != 0.0
    return SvrModel(
        columns=tuple(columns),
        gamma=params.gamma,
        epsilon=params.epsilon,
        C=params.C,
        bias=bias,
        support_X=Xs[mask],
        beta=beta[mask],
        scale_mean=mean,
        scale_std=std,
        n_iterations=iters,
    )


def predict(model: SvrModel, x: Sequence) -> float:
    """Estimate the target for one raw (unscaled) feature row."""
    xa = np.asarray(x, dtype=float)
    if xa.shape != model.scale_mean.shape:
        raise UsageError(
            f"feature row has {xa.shape} entries, model expects "
            f"{model.scale_mean.shape}"
        )
    if model.n_support == 0:
        return model.bias
    xs = model.scale(xa)
    diff = model.support_X - xs
    k = np.exp(-model.gamma * np.einsum("ij,ij->i", diff, diff))
    return float(model.beta @ k + model.bias)


def predict_many(model: SvrModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.shape[1] != len(model.scale_mean):
        raise UsageError(
            f"feature matrix has {X.shape[1]} columns, model expects "
            f"{len(model.scale_mean)}"
        )
    if model.n_support == 0:
        return np.full(X.shape[0], model.bias)
    Xs = (X - model.scale_mean) / model.scale_std
    K = rbf_matrix(Xs, model.support_X, model.gamma)
    return K @ model.beta + model.bias


def predict_aadt(
    model: SvrModel,
    day: DayCount,
    alt: AlternativeSpec,
    selected_hours=None,
    meta: StationMeta | None = None,
) -> float:
    """AADT estimate for one complete day: predicted factor times its total."""
    row = feature_row(day, alt, selected_hours, meta)
    return predict(model, row) * daily_total(day)


def _fold_assignment(n_rows: int, groups, grid: CvGrid) -> np.ndarray:
    rng = rng_for(grid.seed, "folds")
    if groups is None:
        order = np.arange(n_rows)
        rng.shuffle(order)
        fold_of_row = np.empty(n_rows, dtype=int)
        fold_of_row[order] = np.arange(n_rows) % grid.folds
        return fold_of_row
    groups = np.asarray(groups)
    unique = sorted(set(groups.tolist()))
    if len(unique) < grid.folds:
        raise UsageError(
            f"{len(unique)} groups cannot fill {grid.folds} folds"
        )
    order = list(unique)
    rng.shuffle(order)
    fold_of_group = {g: k % grid.folds for k, g in enumerate(order)}
    return np.array([fold_of_group[g] for g in groups.tolist()])


def grid_search(
    X: np.ndarray,
    y: np.ndarray,
    grid: CvGrid,
    p0: SvrParams,
    groups=None,
) -> tuple:
    """Mean validation RMSE per (C, gamma) cell; returns the arg-min cell.

    Fold assignment is deterministic from the grid seed and, when ``groups``
    (e.g. station ids per row) are given, whole groups stay inside one fold.
    Ties prefer the smaller C, then the smaller gamma.  Cells whose training
    fails are excluded; if every cell fails the search raises.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] < grid.folds:
        raise UsageError(f"{X.shape[0]} rows cannot fill {grid.folds} folds")
    fold_of_row = _fold_assignment(X.shape[0], groups, grid)

    table = []
    best = None
    for c in grid.c_values:
        for gamma in grid.gamma_values:
            params = SvrParams(
                C=c, gamma=gamma, epsilon=p0.epsilon,
                kkt_tol=p0.kkt_tol, max_passes=p0.max_passes,
            )
            fold_rmse = []
            failed = False
            for k in range(grid.folds):
                val = fold_of_row == k
                if not val.any() or val.all():
                    continue
                try:
                    model = train(X[~val], y[~val], params)
                except (NumericalError, UsageError):
                    failed = True
                    break
                resid = predict_many(model, X[val]) - y[val]
                fold_rmse.append(float(np.sqrt(np.mean(resid ** 2))))
            if failed or not fold_rmse:
                table.append(
                    {"C": c, "gamma": gamma, "mean_rmse": None,
                     "fold_rmse": [], "failed": True}
                )
                continue
            mean_rmse = float(np.mean(fold_rmse))
            table.append(
                {"C": c, "gamma": gamma, "mean_rmse": mean_rmse,
                 "fold_rmse": fold_rmse, "failed": False}
            )
            if best is None or mean_rmse < best[2]:
                best = (c, gamma, mean_rmse)
    if best is None:
        raise NumericalError("every grid cell failed to train")
    return best[0], best[1], table
