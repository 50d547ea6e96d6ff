"""Three-layer feedforward regression network trained by Levenberg-Marquardt.

Architecture: linear input scaling to [-1, 1], one tanh hidden layer, and a
linear output unit whose result is mapped back to target units.  (A bounded
output activation cannot represent targets outside its range, so the output
layer is linear and targets are min-max scaled internally.)

Training is damped Gauss-Newton on the sum of squared residuals: solve
``(J'J + mu*I) delta = J'e`` and accept the step only if the SSE strictly
decreases, shrinking ``mu`` on success and growing it on rejection.  With a
validation set, training stops after ``patience`` epochs without validation
improvement and the best-validation weights are restored.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, NumericalError, UsageError
from .features import AlternativeSpec, daily_total, feature_row
from .ingest import DayCount, StationMeta
from .seeding import substream_seed

__all__ = [
    "AnnTopology",
    "AnnModel",
    "LmConfig",
    "init",
    "init_zero",
    "forward",
    "forward_many",
    "jacobian",
    "train_lm",
    "pick_hidden",
    "predict_aadt",
]


@dataclass(frozen=True)
class AnnTopology:
    n_in: int
    n_hidden: int
    n_out: int = 1

    def __post_init__(self):
        if self.n_in < 1 or self.n_hidden < 1 or self.n_out != 1:
            raise UsageError(
                f"topology must have n_in>=1, n_hidden>=1, n_out=1; got {self}"
            )

    @property
    def n_params(self) -> int:
        return self.n_hidden * self.n_in + 2 * self.n_hidden + 1


@dataclass(frozen=True, eq=False)
class AnnModel:
    """Weights plus the input/target scaling learned from training data."""

    topology: AnnTopology
    w1: np.ndarray  # (n_hidden, n_in)
    b1: np.ndarray  # (n_hidden,)
    w2: np.ndarray  # (n_hidden,)
    b2: float
    in_lo: np.ndarray
    in_hi: np.ndarray
    out_lo: float
    out_hi: float
    columns: tuple = ()

    def scale_inputs(self, X: np.ndarray) -> np.ndarray:
        span = self.in_hi - self.in_lo
        span = np.where(span > 0, span, 1.0)
        return 2.0 * (X - self.in_lo) / span - 1.0

    def scale_targets(self, y: np.ndarray) -> np.ndarray:
        span = self.out_hi - self.out_lo
        if span <= 0:
            return np.zeros_like(np.asarray(y, dtype=float))
        return 2.0 * (np.asarray(y, dtype=float) - self.out_lo) / span - 1.0

    def unscale_targets(self, ys) -> np.ndarray:
        span = self.out_hi - self.out_lo
        if span <= 0:
            return np.full_like(np.asarray(ys, dtype=float), self.out_lo)
        return (np.asarray(ys, dtype=float) + 1.0) / 2.0 * span + self.out_lo

    def pack(self) -> np.ndarray:
        return np.concatenate(
            [self.w1.ravel(), self.b1, self.w2, [self.b2]]
        )

    def with_params(self, theta: np.ndarray) -> "AnnModel":
        h, d = self.topology.n_hidden, self.topology.n_in
        w1 = theta[: h * d].reshape(h, d)
        b1 = theta[h * d: h * d + h]
        w2 = theta[h * d + h: h * d + 2 * h]
        b2 = float(theta[-1])
        return AnnModel(
            self.topology, w1.copy(), b1.copy(), w2.copy(), b2,
            self.in_lo, self.in_hi, self.out_lo, self.out_hi, self.columns,
        )

    def with_scaling(self, in_lo, in_hi, out_lo, out_hi) -> "AnnModel":
        return AnnModel(
            self.topology, self.w1, self.b1, self.w2, self.b2,
            np.asarray(in_lo, dtype=float), np.asarray(in_hi, dtype=float),
            float(out_lo), float(out_hi), self.columns,
        )

    def to_dict(self) -> dict:
        return {
            "kind": "ann",
            "version": 1,
            "topology": {
                "n_in": self.topology.n_in,
                "n_hidden": self.topology.n_hidden,
                "n_out": self.topology.n_out,
            },
            "columns": list(self.columns),
            "w1": [[float(v) for v in row] for row in self.w1],
            "b1": [float(v) for v in self.b1],
            "w2": [float(v) for v in self.w2],
            "b2": float(self.b2),
            "in_lo": [float(v) for v in self.in_lo],
            "in_hi": [float(v) for v in self.in_hi],
            "out_lo": float(self.out_lo),
            "out_hi": float(self.out_hi),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AnnModel":
        if doc.get("kind") != "ann":
            raise DataError(f"not an ann artifact: kind={doc.get('kind')!r}")
        topo = AnnTopology(**doc["topology"])
        return cls(
            topology=topo,
            w1=np.array(doc["w1"], dtype=float).reshape(topo.n_hidden, topo.n_in),
            b1=np.array(doc["b1"], dtype=float),
            w2=np.array(doc["w2"], dtype=float),
            b2=float(doc["b2"]),
            in_lo=np.array(doc["in_lo"], dtype=float),
            in_hi=np.array(doc["in_hi"], dtype=float),
            out_lo=float(doc["out_lo"]),
            out_hi=float(doc["out_hi"]),
            columns=tuple(doc.get("columns", ())),
        )


@dataclass(frozen=True)
class LmConfig:
    mu0: float = 1e-3
    mu_increase: float = 10.0
    mu_decrease: float = 0.1
    mu_max: float = 1e10
    max_epochs: int = 200
    sse_goal: float = 0.0
    patience: int = 25
    seed: int = 0

    def __post_init__(self):
        if not self.mu0 > 0:
            raise UsageError("mu0 must be positive")
        if not self.mu_increase > 1:
            raise UsageError("mu_increase must be > 1")
        if not 0 < self.mu_decrease < 1:
            raise UsageError("mu_decrease must be in (0, 1)")


def _identity_scaling(n_in: int) -> tuple:
    # lo=-1, hi=1 makes both scalings the identity map.
    return -np.ones(n_in), np.ones(n_in), -1.0, 1.0


def init(topology: AnnTopology, seed: int) -> AnnModel:
    """Weights drawn uniformly from [-0.5, 0.5]; identity scaling."""
    rng = np.random.default_rng(seed)
    in_lo, in_hi, out_lo, out_hi = _identity_scaling(topology.n_in)
    return AnnModel(
        topology=topology,
        w1=rng.uniform(-0.5, 0.5, size=(topology.n_hidden, topology.n_in)),
        b1=rng.uniform(-0.5, 0.5, size=topology.n_hidden),
        w2=rng.uniform(-0.5, 0.5, size=topology.n_hidden),
        b2=float(rng.uniform(-0.5, 0.5)),
        in_lo=in_lo, in_hi=in_hi, out_lo=out_lo, out_hi=out_hi,
    )


def init_zero(topology: AnnTopology) -> AnnModel:
    """All-zero weights; forward output equals the output bias."""
    in_lo, in_hi, out_lo, out_hi = _identity_scaling(topology.n_in)
    return AnnModel(
        topology=topology,
        w1=np.zeros((topology.n_hidden, topology.n_in)),
        b1=np.zeros(topology.n_hidden),
        w2=np.zeros(topology.n_hidden),
        b2=0.0,
        in_lo=in_lo, in_hi=in_hi, out_lo=out_lo, out_hi=out_hi,
    )


def _hidden_and_output(model: AnnModel, Xs: np.ndarray) -> tuple:
    Z = np.tanh(Xs @ model.w1.T + model.b1)
    return Z, Z @ model.w2 + model.b2


def forward_many(model: AnnModel, X: np.ndarray) -> np.ndarray:
    """Unscaled estimates for raw feature rows."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.topology.n_in:
        raise UsageError(
            f"input has {X.shape[1]} features, model expects {model.topology.n_in}"
        )
    _, out = _hidden_and_output(model, model.scale_inputs(X))
    return model.unscale_targets(out)


def forward(model: AnnModel, x: Sequence) -> float:
    return float(forward_many(model, np.asarray(x, dtype=float)[None, :])[0])


def jacobian(model: AnnModel, X: np.ndarray) -> np.ndarray:
    """Residual derivatives d(y_scaled - f_scaled)/d(params), shape (n, P).

    Parameter order matches :meth:`AnnModel.pack`: hidden weights
    (row-major), hidden biases, output weights, output bias.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xs = model.scale_inputs(X)
    Z, _ = _hidden_and_output(model, Xs)
    G = (1.0 - Z ** 2) * model.w2  # (n, h): df/d(pre-activation)
    n = X.shape[0]
    dW1 = np.einsum("nh,nd->nhd", G, Xs).reshape(n, -1)
    ones = np.ones((n, 1))
    return -np.hstack([dW1, G, Z, ones])


def _sse(resid: np.ndarray) -> float:
    return float(resid @ resid)


def train_lm(
    model: AnnModel,
    X: np.ndarray,
    y: np.ndarray,
    cfg: LmConfig,
    validation: tuple | None = None,
) -> tuple:
    """Levenberg-Marquardt fit; returns (trained model, per-epoch log).

    The model's scaling is (re)computed from the training data; its incoming
    weights are the starting point.  The logged ``sse`` is in original
    target units (comparable across scalings); steps are accepted only on a
    strict decrease.  Stop reasons: ``goal``, ``mu_max``, ``max_epochs``,
    ``patience``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if X.shape[0] != len(y):
        raise UsageError(f"X {X.shape} and y {y.shape} do not align")
    if X.shape[0] < 2:
        raise UsageError("need at least 2 training rows")

    model = model.with_scaling(
        X.min(axis=0), X.max(axis=0), float(y.min()), float(y.max())
    )
    Xs = model.scale_inputs(X)
    ys = model.scale_targets(y)
    # SSE in original units is the scaled SSE times this factor.
    span = model.out_hi - model.out_lo
    unscale_sq = (span / 2.0) ** 2 if span > 0 else 1.0

    if validation is not None:
        Xv = np.atleast_2d(np.asarray(validation[0], dtype=float))
        yv = np.asarray(validation[1], dtype=float)

    def val_rmse_of(m: AnnModel) -> float:
        resid = forward_many(m, Xv) - yv
        return float(np.sqrt(np.mean(resid ** 2)))

    theta = model.pack()
    current = model.with_params(theta)
    _, out = _hidden_and_output(current, Xs)
    resid = ys - out
    sse = _sse(resid)
    if not np.isfinite(sse):
        raise NumericalError("initial SSE is not finite")

    mu = cfg.mu0
    log = []
    stop = "max_epochs"
    best_val = None
    best_theta = theta.copy()
    epochs_since_best = 0

    for epoch in range(1, cfg.max_epochs + 1):
        if sse * unscale_sq <= cfg.sse_goal:
            stop = "goal"
            break
        J = jacobian(current, X)
        g = J.T @ resid
        H = J.T @ J
        eye = np.eye(len(theta))
        delta = None
        while delta is None:
            try:
                delta = np.linalg.solve(H + mu * eye, g)
            except np.linalg.LinAlgError:
                mu *= cfg.mu_increase
                if mu > cfg.mu_max:
                    raise NumericalError(
                        "normal-equation solve kept failing up to mu_max"
                    ) from None
        candidate_theta = theta - delta
        candidate = current.with_params(candidate_theta)
        _, out_c = _hidden_and_output(candidate, Xs)
        resid_c = ys - out_c
        sse_c = _sse(resid_c)

        accepted = np.isfinite(sse_c) and sse_c < sse
        entry = {"epoch": epoch, "mu": mu, "accepted": bool(accepted)}
        improved = False
        if accepted:
            theta, current, resid, sse = candidate_theta, candidate, resid_c, sse_c
            mu *= cfg.mu_decrease
            if validation is not None:
                vr = val_rmse_of(current)
                entry["val_rmse"] = vr
                if best_val is None or vr < best_val:
                    best_val, best_theta = vr, theta.copy()
                    improved = True
        else:
            mu *= cfg.mu_increase
        entry["sse"] = sse * unscale_sq
        log.append(entry)
        if validation is not None:
            epochs_since_best = 0 if improved else epochs_since_best + 1
            if epochs_since_best > cfg.patience:
                stop = "patience"
                break
        if mu > cfg.mu_max:
            stop = "mu_max"
            break
    if sse * unscale_sq <= cfg.sse_goal:
        stop = "goal"

    final_theta = best_theta if (validation is not None and best_val is not None) else theta
    trained = current.with_params(final_theta)
    return trained, {"epochs": log, "stop": stop}


def pick_hidden(
    candidates: Sequence,
    X: np.ndarray,
    y: np.ndarray,
    Xv: np.ndarray,
    yv: np.ndarray,
    cfg: LmConfig,
    columns: Sequence = (),
) -> tuple:
    """Train one net per hidden size; keep the least validation RMSE.

    Each candidate gets a fresh deterministic initialization derived from
    the config seed.  Ties prefer the smaller hidden size.
    """
    if not candidates:
        raise UsageError("no hidden-size candidates")
    table = []
    best = None
    for h in candidates:
        topo = AnnTopology(n_in=np.atleast_2d(X).shape[1], n_hidden=int(h))
        seed = substream_seed(cfg.seed, f"ann-init-h{h}") % (2 ** 63)
        start = init(topo, seed)
        try:
            trained, info = train_lm(start, X, y, cfg, validation=(Xv, yv))
        except NumericalError as exc:
            table.append({"n_hidden": int(h), "val_rmse": None,
                          "error": str(exc)})
            continue
        resid = forward_many(trained, Xv) - np.asarray(yv, dtype=float)
        vr = float(np.sqrt(np.mean(resid ** 2)))
        table.append({"n_hidden": int(h), "val_rmse": vr,
                      "epochs": len(info["epochs"]), "stop": info["stop"]})
        if best is None or vr < best[1]:
            best = (
                AnnModel(
                    trained.topology, trained.w1, trained.b1, trained.w2,
                    trained.b2, trained.in_lo, trained.in_hi,
                    trained.out_lo, trained.out_hi, tuple(columns),
                ),
                vr,
                int(h),
            )
    if best is None:
        raise NumericalError("every hidden-size candidate failed to train")
    return best[2], table, best[0]


def predict_aadt(
    model: AnnModel,
    day: DayCount,
    alt: AlternativeSpec,
    selected_hours=None,
    meta: StationMeta | None = None,
) -> float:
    """AADT estimate for one complete day: predicted factor times its total."""
    row = feature_row(day, alt, selected_hours, meta)
    return forward(model, row) * daily_total(day)
