"""Repeated seeded runs and Welch's two-sample t-test."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .errors import DataError, GapfairError

DEFAULT_SEEDS = (1, 2, 3, 4, 5)
ALPHA = 0.05


# -- incomplete beta / t distribution ------------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, 10000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc needs a > 0 and b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    return min(1.0, betainc(df / 2.0, 0.5, df / (df + t * t)))


def welch_t_test(sample_a: Sequence[float], sample_b: Sequence[float]) -> tuple[float, float, float]:
    """Welch's unequal-variance t-test: (t, Welch-Satterthwaite df, two-sided p).

    ``t`` is positive when ``sample_a`` has the larger mean.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise DataError(f"each sample needs at least 2 values (got {na} and {nb})")
    ma, mb = float(a.mean()), float(b.mean())
    va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
    sa, sb = va / na, vb / nb
    se2 = sa + sb
    diff = ma - mb
    if se2 == 0.0:
        df = float(na + nb - 2)
        if diff == 0.0:
            return 0.0, df, 1.0
        return math.copysign(math.inf, diff), df, 0.0
    t = diff / math.sqrt(se2)
    df = se2 * se2 / (sa * sa / (na - 1) + sb * sb / (nb - 1))
    return t, df, t_two_sided_p(t, df)


# -- aggregates -----------------------------------------------------------------------------------


@dataclass(frozen=True)
class RunAggregate:
    metric: str
    values: tuple[float, ...]
    baseline_values: tuple[float, ...] | None = None

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values, ddof=1)) if len(self.values) > 1 else 0.0

    @property
    def baseline_mean(self) -> float | None:
        return None if self.baseline_values is None else float(np.mean(self.baseline_values))

    @property
    def delta(self) -> float | None:
        bm = self.baseline_mean
        return None if bm is None else self.mean - bm

    def _test(self) -> tuple[float, float, float] | None:
        if self.baseline_values is None or any(math.isnan(v) for v in self.values + self.baseline_values):
            return None
        return welch_t_test(self.values, self.baseline_values)

    @property
    def t(self) -> float | None:
        r = self._test()
        return None if r is None else r[0]

    @property
    def df(self) -> float | None:
        r = self._test()
        return None if r is None else r[1]

    @property
    def p(self) -> float | None:
        r = self._test()
        return None if r is None else r[2]

    @property
    def significant(self) -> bool:
        p = self.p
        return p is not None and p < ALPHA

    def to_dict(self) -> dict[str, Any]:
        r = self._test()
        return {
            "metric": self.metric,
            "values": [_num(v) for v in self.values],
            "mean": _num(self.mean),
            "std": _num(self.std),
            "baseline_values": None if self.baseline_values is None else [_num(v) for v in self.baseline_values],
            "baseline_mean": None if self.baseline_mean is None else _num(self.baseline_mean),
            "t": None if r is None else _num(r[0]),
            "df": None if r is None else _num(r[1]),
            "p": None if r is None else _num(r[2]),
            "significant": self.significant,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RunAggregate:
        base = d.get("baseline_values")
        return cls(
            d["metric"],
            tuple(_unnum(v) for v in d["values"]),
            None if base is None else tuple(_unnum(v) for v in base),
        )


def _num(v: float) -> float | str | None:
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _unnum(v) -> float:
    return math.nan if v is None else float(v)


def run_metrics(result) -> dict[str, float]:
    """Flatten one run's EvalResult into named scalars."""
    ev = result.evaluation if hasattr(result, "evaluation") else result
    out = {"accuracy": ev.accuracy, "gap_rms": ev.gap_rms}
    if ev.group_tpr is not None:
        for g, name in enumerate(ev.group_names):
            out[f"tpr_{name}"] = float(ev.group_tpr[g])
    for c, cname in enumerate(ev.class_names):
        for g, gname in enumerate(ev.group_names):
            out[f"tpr/{cname}/{gname}"] = float(ev.tpr[c, g])
        out[f"gap/{cname}"] = float(ev.gap[c])
    return out


def aggregate(runs: Sequence, baseline_runs: Sequence | None = None) -> dict[str, RunAggregate]:
    per_run = [run_metrics(r) for r in runs]
    base = [run_metrics(r) for r in baseline_runs] if baseline_runs is not None else None
    out = {}
    for key in per_run[0]:
        values = tuple(m[key] for m in per_run)
        bvals = tuple(m[key] for m in base) if base is not None else None
        out[key] = RunAggregate(key, values, bvals)
    return out


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("GAPFAIR_THREADS", "1")))
    except ValueError:
        return 1


def run_seeds(data, config, seeds: Sequence[int], **kwargs) -> list:
    """Run the pipeline once per seed; failures abort with the offending run index."""
    from .debias.pipeline import run_pipeline

    def one(i_seed):
        i, seed = i_seed
        try:
            return run_pipeline(data, config, seed, **kwargs)
        except GapfairError as exc:
            raise type(exc)(f"run {i} (seed {seed}) of pipeline {config.name!r} failed: {exc}") from exc

    workers = min(thread_cap(), len(seeds))
    if workers <= 1:
        return [one(x) for x in enumerate(seeds)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, enumerate(seeds)))


def run_repeated(data, config, seeds: Sequence[int] = DEFAULT_SEEDS, baseline=None, **kwargs) -> dict[str, RunAggregate]:
    """Per-metric aggregates over seeded runs, t-tested against ``baseline`` when given."""
    if len(seeds) < 2:
        raise DataError("repeated runs need at least 2 seeds")
    runs = run_seeds(data, config, seeds, **kwargs)
    base = run_seeds(data, baseline, seeds, **kwargs) if baseline is not None else None
    return aggregate(runs, base)
