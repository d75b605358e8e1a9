import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special
from scipy import stats as sps

from gapfair import stats
from gapfair.classifier import TrainConfig
from gapfair.corpus import SyntheticConfig, generate_synthetic
from gapfair.debias.pipeline import PipelineConfig, Stage
from gapfair.errors import DataError
from gapfair.stats import RunAggregate


def test_hand_computed_example():
    t, df, p = stats.welch_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
    assert t == pytest.approx(-1.0, abs=1e-12)
    assert df == pytest.approx(8.0, abs=1e-12)
    assert p == pytest.approx(0.34659350708733405, abs=1e-9)


def test_identical_samples():
    assert stats.welch_t_test([1, 2, 3], [1, 2, 3]) == (0.0, 4.0, 1.0)
    assert stats.welch_t_test([2, 2], [2, 2, 2]) == (0.0, 3.0, 1.0)
    t, _, p = stats.welch_t_test([2, 2], [3, 3])
    assert t == -math.inf and p == 0.0


def test_sample_size_check():
    with pytest.raises(DataError):
        stats.welch_t_test([1.0], [1.0, 2.0])


@pytest.mark.parametrize("a, b, x", [
    (0.5, 0.5, 0.3), (2.5, 0.5, 0.99), (50.0, 0.5, 0.2), (1.0, 1.0, 0.42), (4.0, 0.5, 0.9999), (0.5, 7.0, 1e-6),
])
def test_betainc_against_reference(a, b, x):
    assert stats.betainc(a, b, x) == pytest.approx(special.betainc(a, b, x), rel=1e-8, abs=1e-300)


samples = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=12)


@given(samples, samples)
def test_matches_reference_welch(a, b):
    if np.var(a) + np.var(b) < 1e-6:  # near-constant samples make both routes ill-conditioned
        return
    t, df, p = stats.welch_t_test(a, b)
    ref = sps.ttest_ind(a, b, equal_var=False)
    assert t == pytest.approx(ref.statistic, rel=1e-9, abs=1e-9)
    assert p == pytest.approx(ref.pvalue, rel=1e-7, abs=1e-12)
    assert 0.0 <= p <= 1.0


@given(samples, samples)
def test_swap_negates_t_and_keeps_p(a, b):
    t1, df1, p1 = stats.welch_t_test(a, b)
    t2, df2, p2 = stats.welch_t_test(b, a)
    assert t1 == -t2 and df1 == pytest.approx(df2) and p1 == pytest.approx(p2)


@given(samples, samples, st.floats(1e-3, 1e3))
def test_scale_invariance(a, b, k):
    if np.var(a) + np.var(b) < 1e-6:
        return
    t1, _, p1 = stats.welch_t_test(a, b)
    t2, _, p2 = stats.welch_t_test([k * v for v in a], [k * v for v in b])
    assert t2 == pytest.approx(t1, rel=1e-9, abs=1e-9)
    assert p2 == pytest.approx(p1, rel=1e-9, abs=1e-12)


def test_p_decreases_with_mean_difference():
    base = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    ps = [stats.welch_t_test(base + shift, base)[2] for shift in np.linspace(0, 6, 25)]
    assert all(x > y for x, y in zip(ps, ps[1:]))


def test_aggregate_fields():
    agg = RunAggregate("accuracy", (70.0, 72.0, 74.0), (80.0, 80.5, 79.5))
    assert agg.mean == 72.0 and agg.std == pytest.approx(2.0)
    assert agg.delta == pytest.approx(-8.0)
    assert agg.significant and agg.p < 0.05
    assert RunAggregate.from_dict(agg.to_dict()) == agg
    lone = RunAggregate("x", (1.0, 2.0))
    assert lone.p is None and not lone.significant and lone.to_dict()["t"] is None


DATA = generate_synthetic(SyntheticConfig(n_classes=3, n=600, bias=0.5, seed=3, class_signal=0.3, marker_rate=0.2))
CFG = PipelineConfig(train=TrainConfig(epochs=5))


def test_repeated_identical_seeds_have_zero_variance():
    aggs = stats.run_repeated(DATA, CFG, seeds=(4, 4, 4))
    assert aggs["accuracy"].std == 0.0
    assert aggs["gap_rms"].values[0] == aggs["gap_rms"].values[2]


def test_repeated_mean_is_arithmetic_mean_and_baseline_self_delta_is_zero():
    aggs = stats.run_repeated(DATA, CFG, seeds=(1, 2, 3), baseline=CFG)
    for key in ("accuracy", "gap_rms", "tpr_male", "tpr_female", "tpr/class0/male", "gap/class1"):
        agg = aggs[key]
        assert agg.mean == pytest.approx(sum(agg.values) / 3, rel=1e-12)
        assert agg.delta == 0.0 and agg.p == 1.0


def test_repeated_needs_two_seeds():
    with pytest.raises(DataError):
        stats.run_repeated(DATA, CFG, seeds=(1,))


def test_failed_run_reports_its_index():
    bad = PipelineConfig("boom", (Stage("inlp", {"max_iters": 10**6}),), train=TrainConfig(epochs=1))
    with pytest.raises(DataError, match=r"run 0 \(seed 7\) of pipeline 'boom'"):
        stats.run_seeds(DATA, bad, (7, 8))


def test_threaded_runs_match_serial(monkeypatch):
    serial = stats.run_seeds(DATA, CFG, (1, 2))
    monkeypatch.setenv("GAPFAIR_THREADS", "2")
    assert stats.thread_cap() == 2
    threaded = stats.run_seeds(DATA, CFG, (1, 2))
    for a, b in zip(serial, threaded):
        assert np.array_equal(a.test_predictions, b.test_predictions)
