"""Multinomial logistic regression trained by seeded mini-batch gradient descent."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .binio import read_blob, write_blob
from .errors import DataError, NumericalError
from .features import FeatureMatrix

MODEL_MAGIC = b"GFLM"


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    l2_penalty: float = 1e-4
    epochs: int = 50
    batch_size: int = 256
    seed: int = 0
    tol: float = 0.0  # stop once |loss change| over an epoch drops below this; 0 disables
    init_scale: float = 0.01

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DataError("learning_rate must be positive")
        if self.epochs < 1:
            raise DataError("epochs must be at least 1")
        if self.l2_penalty < 0:
            raise DataError("l2_penalty must be non-negative")
        if self.batch_size < 1:
            raise DataError("batch_size must be at least 1")

    def replace(self, **changes: Any) -> TrainConfig:
        return TrainConfig(**{**asdict(self), **changes})


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray  # (C, d)
    bias: np.ndarray  # (C,)
    meta: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.dim:
            raise DataError(f"feature dimension {X.shape[1]} does not match model dimension {self.dim}")
        return X @ self.weights.T + self.bias


def _as_matrix(X: FeatureMatrix | np.ndarray) -> np.ndarray:
    if isinstance(X, FeatureMatrix):
        X = X.values
    return np.asarray(X, dtype=np.float64)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def loss_and_grad(
    W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean softmax cross-entropy plus ``l2/2 * ||W||^2`` (bias unpenalized), with gradients."""
    n = X.shape[0]
    logits = X @ W.T + b
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(lse - shifted[rows, y])) + 0.5 * l2 * float(np.sum(W * W))
    P = np.exp(shifted - lse[:, None])
    P[rows, y] -= 1.0
    P /= n
    gW = P.T @ X + l2 * W
    gb = P.sum(axis=0)
    return loss, gW, gb


def train(
    features: FeatureMatrix | np.ndarray,
    labels: np.ndarray,
    config: TrainConfig = TrainConfig(),
    n_classes: int | None = None,
) -> LinearModel:
    X = _as_matrix(features)
    y = np.asarray(labels, dtype=np.int64)
    if X.shape[0] != y.shape[0]:
        raise DataError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
    if X.shape[0] == 0:
        raise DataError("cannot train on zero examples")
    C = int(y.max()) + 1 if n_classes is None else n_classes
    if y.min() < 0 or y.max() >= C:
        raise DataError(f"labels must lie in [0, {C})")
    if len(np.unique(y)) < 2:
        raise DataError("training labels contain a single class")

    rng = np.random.default_rng(config.seed)
    n, d = X.shape
    W = rng.normal(0.0, config.init_scale, size=(C, d))
    b = np.zeros(C)
    lr, l2, bs = config.learning_rate, config.l2_penalty, config.batch_size

    initial, _, _ = loss_and_grad(W, b, X, y, l2)
    history = [initial]
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, bs):
            idx = perm[start : start + bs]
            _, gW, gb = loss_and_grad(W, b, X[idx], y[idx], l2)
            W -= lr * gW
            b -= lr * gb
        loss, _, _ = loss_and_grad(W, b, X, y, l2)
        if not np.isfinite(loss) or not np.all(np.isfinite(W)):
            raise NumericalError(f"training diverged at epoch {epoch + 1} (loss={loss})")
        history.append(loss)
        if config.tol > 0 and abs(history[-2] - loss) < config.tol:
            break

    meta = {
        **asdict(config),
        "initial_loss": initial,
        "final_loss": history[-1],
        "epochs_run": len(history) - 1,
        "loss_history": history,
    }
    return LinearModel(W, b, meta)


def predict_proba(model: LinearModel, features: FeatureMatrix | np.ndarray) -> np.ndarray:
    return softmax(model.scores(features))


def predict(model: LinearModel, features: FeatureMatrix | np.ndarray) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class id."""
    return np.argmax(model.scores(features), axis=1)


def save_model(model: LinearModel, path: str | Path) -> None:
    write_blob(path, MODEL_MAGIC, (model.n_classes, model.dim), model.bias, model.weights)


def load_model(path: str | Path) -> LinearModel:
    (C, d), payload = read_blob(path, MODEL_MAGIC, 2)
    if payload.size != C + C * d:
        raise DataError(f"{path}: expected {C + C * d} floats for C={C}, d={d}, found {payload.size}")
    values = payload.astype(np.float64)
    return LinearModel(values[C:].reshape(C, d), values[:C].copy())
