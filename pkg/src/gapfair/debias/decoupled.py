"""Independent per-group classifiers routed by the observed group attribute."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import classifier
from ..classifier import LinearModel, TrainConfig
from ..errors import DataError
from ..features import FeatureMatrix


@dataclass(frozen=True, eq=False)
class DecoupledModel:
    models: dict[int, LinearModel]
    n_classes: int

    def _route(self, X: np.ndarray, groups: np.ndarray, fn) -> np.ndarray:
        groups = np.asarray(groups, dtype=np.int64)
        if len(groups) != X.shape[0]:
            raise DataError(f"{X.shape[0]} rows but {len(groups)} group ids")
        missing = set(np.unique(groups).tolist()) - set(self.models)
        if missing:
            raise DataError(f"no decoupled model for group(s) {sorted(missing)}")
        out = None
        for z, model in self.models.items():
            rows = np.flatnonzero(groups == z)
            if rows.size == 0:
                continue
            res = fn(model, X[rows])
            if out is None:
                out = np.zeros((X.shape[0],) + res.shape[1:], dtype=res.dtype)
            out[rows] = res
        if out is None:
            raise DataError("cannot route an empty batch")
        return out

    def predict(self, features: FeatureMatrix | np.ndarray, groups) -> np.ndarray:
        X = features.values if isinstance(features, FeatureMatrix) else np.asarray(features)
        return self._route(X, groups, classifier.predict)

    def predict_proba(self, features: FeatureMatrix | np.ndarray, groups) -> np.ndarray:
        X = features.values if isinstance(features, FeatureMatrix) else np.asarray(features)
        return self._route(X, groups, classifier.predict_proba)


def train_decoupled(
    features: FeatureMatrix | np.ndarray,
    labels,
    groups,
    config: TrainConfig = TrainConfig(),
    n_classes: int | None = None,
) -> DecoupledModel:
    """One model per group, each trained only on that group's rows with the shared config and seed."""
    X = features.values if isinstance(features, FeatureMatrix) else np.asarray(features)
    y = np.asarray(labels, dtype=np.int64)
    z = np.asarray(groups, dtype=np.int64)
    if not (X.shape[0] == len(y) == len(z)):
        raise DataError("features, labels and groups must have the same length")
    C = int(y.max()) + 1 if n_classes is None else n_classes
    models = {}
    for g in np.unique(z).tolist():
        rows = np.flatnonzero(z == g)
        if len(np.unique(y[rows])) < 2:
            raise DataError(f"group {g} has a single class; a per-group model cannot be trained")
        models[g] = classifier.train(X[rows], y[rows], config, n_classes=C)
    return DecoupledModel(models, C)
