"""End-to-end training: split, assemble, select hours, fit one estimator.

This is the shared path behind the command-line ``train`` step and the
cross-dataset validation protocol.  All stochastic choices (station split,
row subsampling, network init, validation carve-out) draw named substreams
from the single run seed, so a bundle is reproducible from its manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ann as ann_mod
from . import ols as ols_mod
from . import svr as svr_mod
from .errors import UsageError
from .factor import build_factors
from .features import (
    AlternativeSpec,
    Scope,
    SplitSpec,
    alternative,
    assemble,
    ols_spec,
    restrict_hours,
    sfs,
    split,
)
from .ingest import CleanCorpus
from .seeding import rng_for

__all__ = ["TrainedBundle", "train_method", "DEFAULT_SVR_MAX_TRAIN_ROWS"]

# The SMO solver materializes the full kernel matrix, so training rows are
# capped by seeded subsampling; override with svr_max_train_rows.
DEFAULT_SVR_MAX_TRAIN_ROWS = 3000
DEFAULT_ANN_MAX_TRAIN_ROWS = 6000
DEFAULT_ANN_HIDDEN = (4, 8, 12, 16)
DEFAULT_SFS_HOURS = 20


@dataclass(frozen=True)
class TrainedBundle:
    """A fitted model plus everything needed to evaluate or re-run it."""

    model: object
    method: str
    alt: AlternativeSpec
    selected_hours: list | None
    train_stations: list
    test_stations: list
    seed: int
    extras: dict = field(default_factory=dict)


def _subsample_rows(n_rows: int, cap: int, seed: int, label: str) -> np.ndarray:
    if n_rows <= cap:
        return np.arange(n_rows)
    rng = rng_for(seed, label)
    picked = rng.choice(n_rows, size=cap, replace=False)
    return np.sort(picked)


def _select_hours(matrix, max_k: int) -> tuple:
    if max_k >= 24:
        return None, None
    hours, rss_path = sfs(matrix, max_k=max_k)
    return sorted(hours), {"order": hours, "rss_path": rss_path}


def train_method(
    corpus: CleanCorpus,
    method: str,
    alternative_id: int,
    scope: Scope,
    seed: int,
    overrides: dict | None = None,
) -> TrainedBundle:
    """Split the corpus by station, fit the requested estimator, and return
    the bundle (model, feature recipe, selected hours, split)."""
    ov = dict(overrides or {})
    train_stations, test_stations = split(corpus, SplitSpec(seed=seed), scope)
    train_sub = CleanCorpus(
        days={s: corpus.days[s] for s in train_stations},
        meta={s: m for s, m in corpus.meta.items() if s in train_stations},
    )

    if method == "factor":
        alt = AlternativeSpec(alt_id=0, volume_form="factors", scope=scope)
        table = build_factors(
            train_sub, axle_correction=float(ov.get("axle_correction", 1.0))
        )
        return TrainedBundle(
            model=table, method=method, alt=alt, selected_hours=None,
            train_stations=train_stations, test_stations=test_stations,
            seed=seed,
            extras={"groups": [fc.value for fc in table.groups()]},
        )

    if method == "ols":
        alt = ols_spec(scope)
        matrix = assemble(train_sub, alt, None, target_kind="aadt")
        cfg = ols_mod.StepwiseConfig(
            p_enter=float(ov.get("ols_p_enter", 0.05)),
            p_remove=float(ov.get("ols_p_remove", 0.10)),
        )
        model = ols_mod.stepwise(matrix.X, matrix.y, cfg, matrix.columns)
        return TrainedBundle(
            model=model, method=method, alt=alt, selected_hours=None,
            train_stations=train_stations, test_stations=test_stations,
            seed=seed,
            extras={
                "r_squared": model.r_squared,
                "selected": list(model.selected),
                "trace": [list(t) for t in model.trace],
            },
        )

    if method not in ("svr", "ann"):
        raise UsageError(f"unknown method {method!r}")

    alt = alternative(alternative_id, scope)
    matrix = assemble(train_sub, alt, None, target_kind="aadt_factor")

    max_k = int(ov.get("sfs_hours", DEFAULT_SFS_HOURS))
    cap = int(
        ov.get(
            "svr_max_train_rows" if method == "svr" else "ann_max_train_rows",
            DEFAULT_SVR_MAX_TRAIN_ROWS if method == "svr" else DEFAULT_ANN_MAX_TRAIN_ROWS,
        )
    )
    rows = _subsample_rows(matrix.n_rows, cap, seed, f"{method}-subsample")
    sub_matrix = type(matrix)(
        station_ids=tuple(matrix.station_ids[i] for i in rows),
        dates=tuple(matrix.dates[i] for i in rows),
        columns=matrix.columns,
        X=matrix.X[rows],
        y=matrix.y[rows],
        target_kind=matrix.target_kind,
    )
    selected_hours, sfs_info = _select_hours(sub_matrix, max_k)
    if selected_hours is not None:
        sub_matrix = restrict_hours(sub_matrix, selected_hours)

    extras = {"n_train_rows": sub_matrix.n_rows}
    if sfs_info is not None:
        extras["sfs"] = sfs_info

    if method == "svr":
        params = svr_mod.SvrParams(
            C=float(ov.get("svr_c", 8.0)),
            gamma=float(ov.get("svr_gamma", 1.0 / (2 * len(sub_matrix.columns)))),
            epsilon=float(ov.get("svr_epsilon", 0.01)),
            kkt_tol=float(ov.get("svr_kkt_tol", 1e-3)),
            max_passes=int(ov.get("svr_max_passes", 2_000_000)),
        )
        if ov.get("svr_grid"):
            grid = svr_mod.CvGrid(
                c_values=tuple(ov.get("grid_c_values", svr_mod.CvGrid().c_values)),
                gamma_values=tuple(
                    ov.get("grid_gamma_values", svr_mod.CvGrid().gamma_values)
                ),
                folds=int(ov.get("grid_folds", 5)),
                seed=seed,
            )
            groups = list(sub_matrix.station_ids)
            best_c, best_gamma, table = svr_mod.grid_search(
                sub_matrix.X, sub_matrix.y, grid, params, groups=groups
            )
            params = svr_mod.SvrParams(
                C=best_c, gamma=best_gamma, epsilon=params.epsilon,
                kkt_tol=params.kkt_tol, max_passes=params.max_passes,
            )
            extras["cv_table"] = table
        model = svr_mod.train(
            sub_matrix.X, sub_matrix.y, params, columns=sub_matrix.columns
        )
        extras.update(
            {
                "C": params.C,
                "gamma": params.gamma,
                "epsilon": params.epsilon,
                "n_support": model.n_support,
                "n_iterations": model.n_iterations,
            }
        )
        return TrainedBundle(
            model=model, method=method, alt=alt, selected_hours=selected_hours,
            train_stations=train_stations, test_stations=test_stations,
            seed=seed, extras=extras,
        )

    # ann: carve a validation sixth of the training stations for early stop.
    stations = sorted(set(sub_matrix.station_ids))
    rng = rng_for(seed, "ann-val")
    shuffled = list(stations)
    rng.shuffle(shuffled)
    n_val = max(1, len(shuffled) // 6)
    val_set = set(shuffled[:n_val])
    val_mask = np.array([s in val_set for s in sub_matrix.station_ids])
    if val_mask.all() or not val_mask.any():
        raise UsageError("validation carve-out consumed every training row")
    cfg = ann_mod.LmConfig(
        max_epochs=int(ov.get("ann_max_epochs", 150)),
        patience=int(ov.get("ann_patience", 20)),
        sse_goal=float(ov.get("ann_sse_goal", 0.0)),
        seed=seed,
    )
    candidates = tuple(ov.get("ann_hidden", DEFAULT_ANN_HIDDEN))
    best_h, table, model = ann_mod.pick_hidden(
        candidates,
        sub_matrix.X[~val_mask], sub_matrix.y[~val_mask],
        sub_matrix.X[val_mask], sub_matrix.y[val_mask],
        cfg,
        columns=sub_matrix.columns,
    )
    extras.update(
        {
            "n_hidden": best_h,
            "hidden_table": table,
            "validation_stations": sorted(val_set),
        }
    )
    return TrainedBundle(
        model=model, method=method, alt=alt, selected_hours=selected_hours,
        train_stations=train_stations, test_stations=test_stations,
        seed=seed, extras=extras,
    )
