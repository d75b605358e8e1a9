"""Iterative nullspace projection.

Each round trains a linear guard to predict the group from the projected features,
removes the guard's weight direction from the projector, and repeats until the guard
is no better than the majority-group rate plus a margin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import classifier
from ..binio import read_blob, write_blob
from ..classifier import TrainConfig
from ..errors import DataError
from ..features import FeatureMatrix

PROJECTION_MAGIC = b"GFPJ"
MIN_DIRECTION_NORM = 1e-8


@dataclass(frozen=True)
class InlpParams:
    max_iters: int = 30
    stop_margin: float = 0.02
    guard: TrainConfig = field(default_factory=TrainConfig)


@dataclass(frozen=True, eq=False)
class Projection:
    matrix: np.ndarray  # (d, d)
    directions: np.ndarray  # (k, d) orthonormal rows
    iterations_run: int = 0
    guard_accuracy: tuple[float, ...] = ()
    majority_rate: float = float("nan")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def rank(self) -> int:
        return self.dim - self.directions.shape[0]

    @classmethod
    def identity(cls, d: int) -> Projection:
        return cls(np.eye(d), np.zeros((0, d)))


def _projector(directions: np.ndarray, d: int) -> np.ndarray:
    return np.eye(d) - directions.T @ directions


def _orthogonalize(w: np.ndarray, basis: list[np.ndarray]) -> np.ndarray:
    # two Gram-Schmidt passes keep the accumulated basis orthonormal to ~1e-15
    for _ in range(2):
        for u in basis:
            w = w - (u @ w) * u
    return w


def inlp_fit(features: FeatureMatrix | np.ndarray, groups, params: InlpParams = InlpParams()) -> Projection:
    X = np.asarray(features.values if isinstance(features, FeatureMatrix) else features, dtype=np.float64)
    z = np.asarray(groups, dtype=np.int64)
    n, d = X.shape
    if len(z) != n:
        raise DataError(f"{n} feature rows but {len(z)} group ids")
    if params.max_iters > d:
        raise DataError(f"max_iters={params.max_iters} exceeds the feature dimension {d}")
    G = int(z.max()) + 1
    if len(np.unique(z)) < 2:
        raise DataError("INLP needs at least two groups present")
    majority = float(np.bincount(z).max()) / n

    basis: list[np.ndarray] = []
    trace: list[float] = []
    rounds = 0
    for it in range(params.max_iters + 1):
        if basis:
            D = np.array(basis)
            Xp = X - (X @ D.T) @ D
        else:
            Xp = X
        guard = classifier.train(Xp, z, params.guard.replace(seed=params.guard.seed + it), n_classes=G)
        acc = float(np.mean(classifier.predict(guard, Xp) == z))
        trace.append(acc)
        if acc <= majority + params.stop_margin or it == params.max_iters:
            break
        if G == 2:
            candidates = guard.weights[1:2] - guard.weights[0:1]
        else:
            candidates = guard.weights - guard.weights.mean(axis=0)
        added = 0
        for w in candidates:
            w = _orthogonalize(w, basis)
            norm = np.linalg.norm(w)
            if norm < MIN_DIRECTION_NORM or len(basis) >= d:
                continue
            basis.append(w / norm)
            added += 1
        if not added:
            break
        rounds += 1
    D = np.array(basis).reshape(-1, d)
    return Projection(_projector(D, d), D, rounds, tuple(trace), majority)


def inlp_apply(projection: Projection, features: FeatureMatrix | np.ndarray) -> FeatureMatrix:
    fm = features if isinstance(features, FeatureMatrix) else FeatureMatrix.from_array(features)
    if fm.dim != projection.dim:
        raise DataError(f"feature dimension {fm.dim} does not match projection dimension {projection.dim}")
    # P is symmetric, so row-wise P @ x is X @ P
    return FeatureMatrix(fm.values.astype(np.float64) @ projection.matrix, fm.row_ids)


def save_projection(projection: Projection, path: str | Path) -> None:
    k, d = projection.directions.shape[0], projection.dim
    write_blob(path, PROJECTION_MAGIC, (d, k), projection.matrix, projection.directions)


def load_projection(path: str | Path) -> Projection:
    (d, k), payload = read_blob(path, PROJECTION_MAGIC, 2)
    if payload.size != d * d + k * d:
        raise DataError(f"{path}: expected {d * d + k * d} floats for d={d}, k={k}, found {payload.size}")
    values = payload.astype(np.float64)
    return Projection(values[: d * d].reshape(d, d), values[d * d :].reshape(k, d), iterations_run=k)
