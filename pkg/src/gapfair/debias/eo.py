"""Equal-opportunity post-processing by randomized demotion.

For every class the target TPR is the smallest calibration TPR across groups.
Predictions of class p for a group above that target are demoted with probability
``1 - target / tpr`` to a fallback label, so expected TPRs line up at the target.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError

log = logging.getLogger(__name__)

FALLBACKS = ("second_best", "abstain_class")


@dataclass(frozen=True, eq=False)
class EoPolicy:
    theta: np.ndarray  # (C, G) demotion probabilities
    calibration_tpr: np.ndarray  # (C, G) percent, NaN for empty cells
    target_tpr: np.ndarray  # (C,) percent, NaN when no group has support
    fallback: str = "second_best"
    abstain_label: int = -1
    warnings: tuple[str, ...] = ()

    @property
    def is_identity(self) -> bool:
        return not np.any(self.theta > 0)


def eo_calibrate(
    predictions,
    labels,
    groups,
    proba: np.ndarray | None = None,
    n_classes: int | None = None,
    n_groups: int | None = None,
    fallback: str = "second_best",
    abstain_label: int = -1,
) -> EoPolicy:
    if fallback not in FALLBACKS:
        raise ConfigError(f"unknown EO fallback {fallback!r}; expected one of {FALLBACKS}")
    yhat = np.asarray(predictions, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    z = np.asarray(groups, dtype=np.int64)
    if not (len(yhat) == len(y) == len(z)):
        raise DataError("predictions, labels and groups must have the same length")
    C = n_classes or (proba.shape[1] if proba is not None else int(max(y.max(), yhat.max())) + 1)
    G = n_groups or int(z.max()) + 1

    support = np.zeros((C, G), dtype=np.int64)
    hits = np.zeros((C, G), dtype=np.int64)
    np.add.at(support, (y, z), 1)
    ok = yhat == y
    np.add.at(hits, (y[ok], z[ok]), 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        tpr = np.where(support > 0, 100.0 * hits / support, np.nan)

    warnings = []
    theta = np.zeros((C, G))
    target = np.full(C, np.nan)
    for p in range(C):
        defined = ~np.isnan(tpr[p])
        for g in np.flatnonzero(~defined):
            msg = f"empty calibration cell (class {p}, group {g}); demotion disabled for it"
            warnings.append(msg)
            log.warning(msg)
        if not defined.any():
            continue
        t_star = float(np.min(tpr[p, defined]))
        target[p] = t_star
        if t_star == 0.0:
            continue
        for g in np.flatnonzero(defined):
            if tpr[p, g] > t_star:
                theta[p, g] = 1.0 - t_star / tpr[p, g]
    return EoPolicy(theta, tpr, target, fallback, abstain_label, tuple(warnings))


def eo_apply(policy: EoPolicy, predictions, groups, proba: np.ndarray | None, seed: int) -> np.ndarray:
    """Demote each prediction with its cell's probability; returns a new label array."""
    yhat = np.asarray(predictions, dtype=np.int64)
    z = np.asarray(groups, dtype=np.int64)
    C, G = policy.theta.shape
    if len(yhat) != len(z):
        raise DataError("predictions and groups must have the same length")
    if yhat.size and (yhat.min() < 0 or yhat.max() >= C or z.min() < 0 or z.max() >= G):
        raise DataError("prediction or group outside the calibrated policy table")
    rng = np.random.default_rng(seed)
    u = rng.random(len(yhat))
    demote = u < policy.theta[yhat, z]
    out = yhat.copy()
    if not demote.any():
        return out
    if policy.fallback == "abstain_class":
        out[demote] = policy.abstain_label
        return out
    if proba is None:
        raise DataError("second_best fallback needs the probability matrix")
    rows = np.flatnonzero(demote)
    p = np.array(proba[rows], dtype=np.float64)
    p[np.arange(len(rows)), yhat[rows]] = -np.inf
    out[rows] = np.argmax(p, axis=1)
    return out
