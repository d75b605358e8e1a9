"""Group-wise TPR, TPR gaps, GAP RMS, and do-no-harm satisfaction verdicts.

All rates are percentages in [0, 100]. A (class, group) cell without support has an
undefined TPR (NaN); any class touching such a cell gets an undefined gap and is left
out of the RMS and of every satisfaction count. The number left out is always reported.

Gap sign convention: group 0 minus group 1 for two groups. With more than two groups
the gap is the spread (max minus min) across groups and is therefore non-negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .errors import DataError


@dataclass(frozen=True, eq=False)
class EvalResult:
    tpr: np.ndarray  # (C, G) percent, NaN where undefined
    support: np.ndarray  # (C, G) counts; zeros when built from published tables
    accuracy: float
    gap: np.ndarray  # (C,)
    gap_rms: float
    class_names: tuple[str, ...]
    group_names: tuple[str, ...]
    group_tpr: np.ndarray | None = None  # (G,) share of each group's examples predicted correctly

    @property
    def n_classes(self) -> int:
        return self.tpr.shape[0]

    @property
    def n_groups(self) -> int:
        return self.tpr.shape[1]

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.gap)

    @property
    def n_undefined(self) -> int:
        return int(np.count_nonzero(np.isnan(self.gap)))

    @property
    def class_population(self) -> np.ndarray:
        return self.support.sum(axis=1)

    @classmethod
    def from_rates(
        cls,
        tpr: np.ndarray,
        class_names: Sequence[str],
        group_names: Sequence[str],
        gap: np.ndarray | None = None,
        accuracy: float = math.nan,
        support: np.ndarray | None = None,
    ) -> EvalResult:
        """Build a result from already-aggregated rates (e.g. a published table).

        ``gap`` overrides the gap recomputed from ``tpr``; averaged tables report the
        mean of per-run gaps, which differs slightly from the gap of mean TPRs.
        """
        tpr = np.asarray(tpr, dtype=np.float64)
        gaps = compute_gaps(tpr) if gap is None else np.asarray(gap, dtype=np.float64)
        sup = np.zeros(tpr.shape, dtype=np.int64) if support is None else np.asarray(support)
        return cls(tpr, sup, float(accuracy), gaps, _rms_or_nan(gaps), tuple(class_names), tuple(group_names))

    def to_dict(self) -> dict[str, Any]:
        return {
            "class_names": list(self.class_names),
            "group_names": list(self.group_names),
            "accuracy": _f(self.accuracy),
            "gap_rms": _f(self.gap_rms),
            "n_undefined": self.n_undefined,
            "tpr": [[_f(v) for v in row] for row in self.tpr],
            "support": self.support.astype(int).tolist(),
            "gap": [_f(v) for v in self.gap],
            "group_tpr": None if self.group_tpr is None else [_f(v) for v in self.group_tpr],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> EvalResult:
        return cls(
            tpr=_arr(d["tpr"]),
            support=np.asarray(d["support"], dtype=np.int64),
            accuracy=_unf(d["accuracy"]),
            gap=_arr(d["gap"]),
            gap_rms=_unf(d["gap_rms"]),
            class_names=tuple(d["class_names"]),
            group_names=tuple(d["group_names"]),
            group_tpr=None if d.get("group_tpr") is None else _arr(d["group_tpr"]),
        )

    def same_as(self, other: EvalResult) -> bool:
        """Value equality, treating NaN as equal to NaN."""
        return (
            self.class_names == other.class_names
            and self.group_names == other.group_names
            and np.array_equal(self.tpr, other.tpr, equal_nan=True)
            and np.array_equal(self.support, other.support)
            and np.array_equal(self.gap, other.gap, equal_nan=True)
            and _same_float(self.accuracy, other.accuracy)
            and _same_float(self.gap_rms, other.gap_rms)
            and (
                (self.group_tpr is None and other.group_tpr is None)
                or (
                    self.group_tpr is not None
                    and other.group_tpr is not None
                    and np.array_equal(self.group_tpr, other.group_tpr, equal_nan=True)
                )
            )
        )


def _same_float(a: float, b: float) -> bool:
    return (math.isnan(a) and math.isnan(b)) or a == b


def _f(v: float) -> float | None:
    v = float(v)
    return None if math.isnan(v) else v


def _unf(v: float | None) -> float:
    return math.nan if v is None else float(v)


def _arr(values) -> np.ndarray:
    if values and isinstance(values[0], list):
        return np.array([[_unf(v) for v in row] for row in values], dtype=np.float64)
    return np.array([_unf(v) for v in values], dtype=np.float64)


def compute_gaps(tpr: np.ndarray) -> np.ndarray:
    C, G = tpr.shape
    if G < 2:
        return np.full(C, np.nan)
    if G == 2:
        return tpr[:, 0] - tpr[:, 1]
    spread = tpr.max(axis=1) - tpr.min(axis=1)
    spread[np.isnan(tpr).any(axis=1)] = np.nan
    return spread


def gap_rms(gaps: Sequence[float] | np.ndarray) -> float:
    """Root mean square of the defined (non-NaN) gaps."""
    g = np.asarray(gaps, dtype=np.float64)
    g = g[~np.isnan(g)]
    if g.size == 0:
        raise DataError("gap_rms needs at least one defined gap")
    return math.sqrt(float(np.sum(g * g)) / g.size)


def _rms_or_nan(gaps: np.ndarray) -> float:
    return gap_rms(gaps) if np.any(~np.isnan(gaps)) else math.nan


def evaluate(
    predictions: Sequence[int] | np.ndarray,
    labels: Sequence[int] | np.ndarray,
    groups: Sequence[int] | np.ndarray,
    class_names: Sequence[str] | None = None,
    group_names: Sequence[str] | None = None,
) -> EvalResult:
    """Tally per-(class, group) true positive rates, accuracy, gaps and GAP RMS.

    Predictions outside the class range (e.g. an abstain marker) count as errors.
    """
    yhat = np.asarray(predictions, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    z = np.asarray(groups, dtype=np.int64)
    if not (len(yhat) == len(y) == len(z)):
        raise DataError(f"length mismatch: {len(yhat)} predictions, {len(y)} labels, {len(z)} groups")
    if len(y) == 0:
        raise DataError("cannot evaluate an empty prediction set")
    C = len(class_names) if class_names is not None else int(y.max()) + 1
    G = len(group_names) if group_names is not None else int(z.max()) + 1
    if y.min() < 0 or y.max() >= C or z.min() < 0 or z.max() >= G:
        raise DataError("labels or groups fall outside the catalogs")

    support = np.zeros((C, G), dtype=np.int64)
    hits = np.zeros((C, G), dtype=np.int64)
    np.add.at(support, (y, z), 1)
    correct = yhat == y
    np.add.at(hits, (y[correct], z[correct]), 1)

    with np.errstate(invalid="ignore", divide="ignore"):
        tpr = np.where(support > 0, 100.0 * hits / support, np.nan)
        group_n = support.sum(axis=0)
        group_tpr = np.where(group_n > 0, 100.0 * hits.sum(axis=0) / group_n, np.nan)
    gaps = compute_gaps(tpr)
    return EvalResult(
        tpr=tpr,
        support=support,
        accuracy=100.0 * int(correct.sum()) / len(y),
        gap=gaps,
        gap_rms=_rms_or_nan(gaps),
        class_names=tuple(class_names) if class_names is not None else tuple(str(c) for c in range(C)),
        group_names=tuple(group_names) if group_names is not None else tuple(str(g) for g in range(G)),
        group_tpr=group_tpr,
    )


def mean_eval(results: Sequence[EvalResult]) -> EvalResult:
    """Cell-wise mean over repeated runs (gaps are averaged, not recomputed)."""
    if not results:
        raise DataError("no results to average")
    first = results[0]
    for r in results[1:]:
        _check_catalogs(first, r)
    tpr = np.mean([r.tpr for r in results], axis=0)
    gap = np.mean([r.gap for r in results], axis=0)
    group_tpr = None
    if all(r.group_tpr is not None for r in results):
        group_tpr = np.mean([r.group_tpr for r in results], axis=0)
    return EvalResult(
        tpr=tpr,
        support=first.support.copy(),
        accuracy=float(np.mean([r.accuracy for r in results])),
        gap=gap,
        gap_rms=_rms_or_nan(gap),
        class_names=first.class_names,
        group_names=first.group_names,
        group_tpr=group_tpr,
    )


def _check_catalogs(a: EvalResult, b: EvalResult) -> None:
    if a.class_names != b.class_names or a.group_names != b.group_names:
        raise DataError("results use different class or group catalogs")


# -- satisfaction ------------------------------------------------------------------------------


@dataclass(frozen=True)
class SatisfactionVerdict:
    class_index: int
    defined: bool
    protected_group: int
    protected_tie: bool
    gap_decreased: bool
    protected_no_harm: bool
    others_no_harm: bool

    @property
    def base(self) -> bool:
        return self.defined and self.gap_decreased and self.protected_no_harm

    @property
    def advanced(self) -> bool:
        return self.base and self.others_no_harm


def judge_satisfaction(
    before: EvalResult, after: EvalResult, epsilon_gap: float = 0.0, epsilon_harm: float = 0.0
) -> list[SatisfactionVerdict]:
    """Per-class base/advanced verdicts.

    The protected group of a class is the group with the lowest TPR *before* the
    intervention (ties go to the lower group index and are flagged). Base: the absolute
    gap shrank by more than ``epsilon_gap`` and the protected group lost at most
    ``epsilon_harm`` points. Advanced additionally requires no other group to lose more
    than ``epsilon_harm``.
    """
    _check_catalogs(before, after)
    verdicts = []
    for p in range(before.n_classes):
        tb, ta = before.tpr[p], after.tpr[p]
        gb, ga = before.gap[p], after.gap[p]
        defined = not (np.isnan(tb).any() or np.isnan(ta).any() or np.isnan(gb) or np.isnan(ga))
        if not defined:
            verdicts.append(SatisfactionVerdict(p, False, -1, False, False, False, False))
            continue
        prot = int(np.argmin(tb))
        tie = int(np.count_nonzero(tb == tb[prot])) > 1
        ok = ta >= tb - epsilon_harm
        others = np.delete(ok, prot)
        verdicts.append(
            SatisfactionVerdict(
                class_index=p,
                defined=True,
                protected_group=prot,
                protected_tie=tie,
                gap_decreased=bool(abs(ga) < abs(gb) - epsilon_gap),
                protected_no_harm=bool(ok[prot]),
                others_no_harm=bool(others.all()),
            )
        )
    return verdicts


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    method: str
    before: EvalResult
    after: EvalResult
    verdicts: tuple[SatisfactionVerdict, ...]
    populations: np.ndarray | None
    epsilon_gap: float
    epsilon_harm: float

    @property
    def class_names(self) -> tuple[str, ...]:
        return self.before.class_names

    @property
    def compared(self) -> np.ndarray:
        return np.array([v.defined for v in self.verdicts], dtype=bool)

    @property
    def n_compared(self) -> int:
        return int(self.compared.sum())

    @property
    def n_excluded(self) -> int:
        return len(self.verdicts) - self.n_compared

    @property
    def base_flags(self) -> np.ndarray:
        return np.array([v.base for v in self.verdicts], dtype=bool)

    @property
    def advanced_flags(self) -> np.ndarray:
        return np.array([v.advanced for v in self.verdicts], dtype=bool)

    @property
    def delta_tpr(self) -> np.ndarray:
        return self.after.tpr - self.before.tpr

    @property
    def delta_gap(self) -> np.ndarray:
        """Change in absolute gap; negative means the gap shrank."""
        return np.abs(self.after.gap) - np.abs(self.before.gap)

    @property
    def worsened(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return self.compared & (np.abs(self.after.gap) > np.abs(self.before.gap))

    @property
    def worsened_count(self) -> int:
        return int(self.worsened.sum())

    @property
    def worsened_gap_fraction(self) -> float:
        return self.worsened_count / self.n_compared if self.n_compared else 0.0

    def _unweighted(self, flags: np.ndarray) -> float:
        return int(flags.sum()) / self.n_compared if self.n_compared else 0.0

    def _weighted(self, flags: np.ndarray) -> float | None:
        if self.populations is None:
            return None
        w = np.where(self.compared, self.populations, 0).astype(np.float64)
        return float(w[flags].sum() / w.sum())

    @property
    def unweighted_base_rate(self) -> float:
        return self._unweighted(self.base_flags)

    @property
    def unweighted_advanced_rate(self) -> float:
        return self._unweighted(self.advanced_flags)

    @property
    def weighted_base_rate(self) -> float | None:
        return self._weighted(self.base_flags)

    @property
    def weighted_advanced_rate(self) -> float | None:
        return self._weighted(self.advanced_flags)

    def summary(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "classes_compared": self.n_compared,
            "classes_excluded": self.n_excluded,
            "base_count": int(self.base_flags.sum()),
            "advanced_count": int(self.advanced_flags.sum()),
            "unweighted_base_rate": self.unweighted_base_rate,
            "unweighted_advanced_rate": self.unweighted_advanced_rate,
            "weighted_base_rate": self.weighted_base_rate,
            "weighted_advanced_rate": self.weighted_advanced_rate,
            "worsened_count": self.worsened_count,
            "worsened_gap_fraction": self.worsened_gap_fraction,
            "gap_rms_before": _f(self.before.gap_rms),
            "gap_rms_after": _f(self.after.gap_rms),
            "accuracy_before": _f(self.before.accuracy),
            "accuracy_after": _f(self.after.accuracy),
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "epsilon_gap": self.epsilon_gap,
            "epsilon_harm": self.epsilon_harm,
            "populations": None if self.populations is None else [int(v) for v in self.populations],
            "before": self.before.to_dict(),
            "after": self.after.to_dict(),
            "verdicts": [
                {
                    "class": self.class_names[v.class_index],
                    "defined": v.defined,
                    "protected_group": v.protected_group,
                    "protected_tie": v.protected_tie,
                    "gap_decreased": v.gap_decreased,
                    "protected_no_harm": v.protected_no_harm,
                    "others_no_harm": v.others_no_harm,
                    "base": v.base,
                    "advanced": v.advanced,
                }
                for v in self.verdicts
            ],
            "summary": self.summary(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ComparisonReport:
        verdicts = tuple(
            SatisfactionVerdict(
                class_index=i,
                defined=bool(v["defined"]),
                protected_group=int(v["protected_group"]),
                protected_tie=bool(v["protected_tie"]),
                gap_decreased=bool(v["gap_decreased"]),
                protected_no_harm=bool(v["protected_no_harm"]),
                others_no_harm=bool(v["others_no_harm"]),
            )
            for i, v in enumerate(d["verdicts"])
        )
        pops = d.get("populations")
        return cls(
            method=d["method"],
            before=EvalResult.from_dict(d["before"]),
            after=EvalResult.from_dict(d["after"]),
            verdicts=verdicts,
            populations=None if pops is None else np.asarray(pops, dtype=np.int64),
            epsilon_gap=float(d["epsilon_gap"]),
            epsilon_harm=float(d["epsilon_harm"]),
        )


def compare(
    before: EvalResult,
    after: EvalResult,
    class_populations: Sequence[int] | np.ndarray | None = None,
    epsilon_gap: float = 0.0,
    epsilon_harm: float = 0.0,
    method: str = "debiased",
) -> ComparisonReport:
    """Join two evaluations into satisfaction rates and the worsened-gap share.

    Weighted rates use ``class_populations`` (defaults to the before-split support when
    it is non-zero); they are ``None`` when no populations are known.
    """
    verdicts = tuple(judge_satisfaction(before, after, epsilon_gap, epsilon_harm))
    pops = None
    if class_populations is not None:
        pops = np.asarray(class_populations, dtype=np.int64)
        if pops.shape != (before.n_classes,):
            raise DataError(f"expected {before.n_classes} class populations, got {pops.shape}")
    elif before.support.sum() > 0:
        pops = before.class_population
    if pops is not None:
        mask = np.array([v.defined for v in verdicts], dtype=bool)
        if pops[mask].sum() <= 0:
            raise DataError("total class population is zero")
    return ComparisonReport(method, before, after, verdicts, pops, float(epsilon_gap), float(epsilon_harm))
