import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gapfair import classifier, corpus
from gapfair.classifier import TrainConfig
from gapfair.corpus import Dataset, Example, SyntheticConfig, generate_synthetic
from gapfair.debias import (
    InlpParams,
    Projection,
    cda_augment,
    eo_apply,
    eo_calibrate,
    inlp_apply,
    inlp_fit,
    load_projection,
    save_projection,
    train_decoupled,
)
from gapfair.debias.pipeline import (
    FeaturizerConfig,
    PipelineConfig,
    Splits,
    Stage,
    derive_seed,
    run_pipeline,
)
from gapfair.errors import ConfigError, DataError
from gapfair.features import FeatureMatrix

LEX = corpus.default_lexicon()


def ds_from(token_lists, groups=None, C=2):
    groups = groups or [i % 2 for i in range(len(token_lists))]
    ex = tuple(Example(tuple(t), i % C, g) for i, (t, g) in enumerate(zip(token_lists, groups)))
    return Dataset(ex, tuple(f"c{i}" for i in range(C)), ("male", "female"))


# -- CDA -------------------------------------------------------------------------------------


def test_cda_swaps_she_is_happy():
    out = cda_augment(ds_from([["she", "is", "happy"], ["x"]]), LEX)
    assert out.examples[2].tokens == ("he", "is", "happy")


def test_cda_keeps_label_and_flips_group():
    src = ds_from([["she", "is", "happy"], ["plain", "words"]], groups=[1, 0])
    out = cda_augment(src, LEX)
    assert out.examples[:2] == src.examples
    assert out.examples[2].class_label == 0 and out.examples[2].group == 0
    assert out.examples[3].tokens == ("plain", "words") and out.examples[3].group == 1
    kept = cda_augment(src, LEX, flip_group=False)
    assert [e.group for e in kept.examples] == [1, 0, 1, 0]


def test_cda_flip_needs_two_groups():
    ex = (Example(("a",), 0, 0), Example(("b",), 1, 2))
    with pytest.raises(ConfigError):
        cda_augment(Dataset(ex, ("a", "b"), ("g0", "g1", "g2")), LEX)


@given(st.lists(st.lists(st.sampled_from(["he", "she", "his", "her", "mr", "nurse", "x"]), max_size=8), min_size=1, max_size=20))
def test_cda_doubles_and_preserves_labels(token_lists):
    src = ds_from(token_lists)
    out = cda_augment(src, LEX)
    assert len(out) == 2 * len(src)
    n = len(src)
    assert np.array_equal(out.labels[:n], src.labels) and np.array_equal(out.labels[n:], src.labels)
    assert all(LEX.swap(c.tokens) == o.tokens for o, c in zip(src.examples, out.examples[n:]))


# -- INLP ------------------------------------------------------------------------------------

GUARD = TrainConfig(learning_rate=0.5, epochs=40, batch_size=256, seed=0)


def planted(n=10000, d=8, seed=0):
    rng = np.random.default_rng(seed)
    z = rng.integers(0, 2, n)
    X = rng.normal(size=(n, d))
    X[:, 0] = np.where(z == 1, 1.0, -1.0)
    return X, z


def test_inlp_removes_planted_direction():
    X, z = planted()
    proj = inlp_fit(X, z, InlpParams(max_iters=8, stop_margin=0.02, guard=GUARD))
    assert proj.iterations_run == 1
    assert abs(proj.directions[0, 0]) >= 0.99
    assert proj.guard_accuracy[0] > 0.99
    assert proj.guard_accuracy[-1] <= proj.majority_rate + 0.02


def test_inlp_stops_immediately_without_group_signal():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(4000, 6))
    z = rng.integers(0, 2, 4000)
    proj = inlp_fit(X, z, InlpParams(max_iters=5, guard=GUARD))
    assert proj.iterations_run == 0 and len(proj.guard_accuracy) == 1
    assert np.array_equal(proj.matrix, np.eye(6))


def spread_signal(n=6000, d=10, seed=2):
    # group information spread over several coordinates so several rounds are needed
    rng = np.random.default_rng(seed)
    z = rng.integers(0, 2, n)
    X = rng.normal(size=(n, d))
    X[:, :4] += np.where(z == 1, 1.0, -1.0)[:, None] * np.array([1.5, 1.2, 0.9, 0.7])
    X[:, 4:6] = X[:, :2] * 0.5 + rng.normal(size=(n, 2))
    return X, z


def test_inlp_projector_properties():
    X, z = spread_signal()
    proj = inlp_fit(X, z, InlpParams(max_iters=10, guard=GUARD))
    P, D = proj.matrix, proj.directions
    assert proj.iterations_run >= 2
    assert np.abs(P @ P - P).max() < 1e-6
    assert np.abs(P - P.T).max() < 1e-6
    assert np.linalg.matrix_rank(P) == proj.rank == 10 - proj.iterations_run
    assert np.allclose(D @ D.T, np.eye(len(D)), atol=1e-10)
    Y = inlp_apply(proj, X).values.astype(np.float64)
    assert np.abs(Y @ D.T).max() < 1e-5
    assert np.abs(inlp_apply(proj, Y).values - Y).max() < 1e-6


def test_inlp_rank_drops_by_one_per_iteration():
    X, z = spread_signal(seed=3)
    prev = 10
    for k in range(1, 4):
        proj = inlp_fit(X, z, InlpParams(max_iters=k, stop_margin=-1.0, guard=GUARD))
        assert proj.iterations_run == k
        assert proj.rank == prev - 1 == np.linalg.matrix_rank(proj.matrix)
        prev = proj.rank


def test_inlp_multigroup_uses_centered_rows():
    rng = np.random.default_rng(4)
    n, d = 6000, 8
    z = rng.integers(0, 3, n)
    X = rng.normal(size=(n, d))
    X[:, 0] += np.array([-2.0, 0.0, 2.0])[z]
    X[:, 1] += np.array([0.0, 2.0, 0.0])[z]
    proj = inlp_fit(X, z, InlpParams(max_iters=4, guard=GUARD))
    assert np.abs(proj.matrix @ proj.matrix - proj.matrix).max() < 1e-6
    Y = inlp_apply(proj, X).values
    acc = np.mean(classifier.predict(classifier.train(Y, z, GUARD, 3), Y) == z)
    assert acc <= proj.majority_rate + 0.05


def test_inlp_validation_and_identity():
    X, z = planted(n=100, d=3)
    with pytest.raises(DataError, match="max_iters"):
        inlp_fit(X, z, InlpParams(max_iters=4))
    with pytest.raises(DataError, match="two groups"):
        inlp_fit(X, np.zeros(100, int), InlpParams(max_iters=2))
    ident = Projection.identity(3)
    assert np.array_equal(inlp_apply(ident, X).values, X.astype(np.float32))
    with pytest.raises(DataError, match="dimension"):
        inlp_apply(ident, np.ones((2, 4)))


def test_projection_file_round_trip(tmp_path):
    X, z = spread_signal(seed=5)
    proj = inlp_fit(X, z, InlpParams(max_iters=3, guard=GUARD))
    save_projection(proj, tmp_path / "p.bin")
    raw = (tmp_path / "p.bin").read_bytes()
    k = proj.directions.shape[0]
    assert raw[:4] == b"GFPJ" and len(raw) == 4 + 16 + 4 * (100 + 10 * k)
    back = load_projection(tmp_path / "p.bin")
    assert np.allclose(back.matrix, proj.matrix, atol=1e-6) and back.rank == proj.rank


# -- decoupled -------------------------------------------------------------------------------


def xor_by_group(n=800, seed=6):
    rng = np.random.default_rng(seed)
    z = rng.integers(0, 2, n)
    s = rng.choice([-1.0, 1.0], n)
    X = np.c_[s * rng.uniform(0.5, 1.0, n), rng.normal(scale=0.1, size=n)]
    y = np.where(z == 0, s > 0, s < 0).astype(int)
    return X, y, z


def test_decoupled_beats_pooled_on_group_specific_rules():
    X, y, z = xor_by_group()
    cfg = TrainConfig(epochs=100, batch_size=64)
    dec = train_decoupled(X, y, z, cfg)
    pooled = classifier.train(X, y, cfg)
    assert np.mean(dec.predict(X, z) == y) == 1.0
    assert np.mean(classifier.predict(pooled, X) == y) < 0.75


def test_decoupled_single_group_equals_plain_training():
    X, y, _ = xor_by_group(seed=7)
    cfg = TrainConfig(epochs=5, seed=3)
    dec = train_decoupled(X, y, np.zeros(len(y), int), cfg)
    plain = classifier.train(X, y, cfg)
    assert np.array_equal(dec.models[0].weights, plain.weights)
    assert np.array_equal(dec.predict(X, np.zeros(len(y), int)), classifier.predict(plain, X))


def test_decoupled_routes_to_own_group_model():
    X, y, z = xor_by_group(seed=8)
    dec = train_decoupled(X, y, z, TrainConfig(epochs=5))
    P = dec.predict_proba(X, z)
    for g in (0, 1):
        rows = z == g
        assert np.array_equal(P[rows], classifier.predict_proba(dec.models[g], X[rows]))
    with pytest.raises(DataError, match="no decoupled model"):
        dec.predict(X[:2], [0, 5])


def test_decoupled_rejects_single_class_group():
    X = np.zeros((4, 1))
    with pytest.raises(DataError, match="single class"):
        train_decoupled(X, [0, 1, 0, 0], [0, 0, 1, 1])


# -- EO --------------------------------------------------------------------------------------


def cells(tpr_by_group, n=1000):
    """Predictions with exactly the requested class-0 TPR per group (class 1 errors become 1)."""
    pred, y, z = [], [], []
    for g, t in enumerate(tpr_by_group):
        k = int(round(t * n))
        pred += [0] * k + [1] * (n - k)
        y += [0] * n
        z += [g] * n
    pred += [1] * 10 + [1] * 10
    y += [1] * 20
    z += [0] * 10 + [1] * 10
    return np.array(pred), np.array(y), np.array(z)


def test_eo_theta_example():
    pol = eo_calibrate(*cells([0.8, 0.6]), n_classes=2, n_groups=2)
    assert pol.theta[0, 0] == pytest.approx(0.25) and pol.theta[0, 1] == 0.0
    assert pol.target_tpr[0] == pytest.approx(60.0)
    assert 0.0 <= pol.theta.min() and pol.theta.max() <= 1.0


def test_eo_equal_rates_is_identity():
    pred, y, z = cells([0.7, 0.7])
    pol = eo_calibrate(pred, y, z, n_classes=2, n_groups=2)
    assert pol.is_identity
    assert np.array_equal(eo_apply(pol, pred, z, None, seed=1), pred)


def test_eo_zero_target_disables_class():
    pol = eo_calibrate(*cells([0.5, 0.0]), n_classes=2, n_groups=2)
    assert np.all(pol.theta[0] == 0.0)


def test_eo_empty_cell_warns_instead_of_crashing():
    pol = eo_calibrate([0, 0, 1], [0, 0, 1], [0, 1, 0], n_classes=2, n_groups=2)
    assert pol.theta[1, 1] == 0.0 and any("class 1, group 1" in w for w in pol.warnings)


def test_eo_theta_one_removes_every_prediction():
    from gapfair.debias.eo import EoPolicy

    theta = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
    pol = EoPolicy(theta, np.zeros((3, 2)), np.zeros(3))
    rng = np.random.default_rng(0)
    proba = rng.dirichlet(np.ones(3), size=500)
    pred = np.zeros(500, int)
    z = rng.integers(0, 2, 500)
    out = eo_apply(pol, pred, z, proba, seed=4)
    assert not np.any(out[z == 0] == 0) and np.all(out[z == 1] == 0)
    # the fallback is the runner-up class
    rows = np.flatnonzero(z == 0)
    assert np.array_equal(out[rows], np.argmax(proba[rows][:, 1:], axis=1) + 1)
    abstain = EoPolicy(theta, np.zeros((3, 2)), np.zeros(3), fallback="abstain_class", abstain_label=-1)
    assert np.all(eo_apply(abstain, pred, z, None, seed=4)[z == 0] == -1)


def test_eo_apply_is_seeded():
    pred, y, z = cells([0.9, 0.5])
    pol = eo_calibrate(pred, y, z, n_classes=2, n_groups=2, fallback="abstain_class")
    a = eo_apply(pol, pred, z, None, seed=11)
    assert np.array_equal(a, eo_apply(pol, pred, z, None, seed=11))
    assert not np.array_equal(a, eo_apply(pol, pred, z, None, seed=12))
    assert np.array_equal(y, cells([0.9, 0.5])[1])  # labels untouched


def test_eo_rejects_unknown_fallback():
    with pytest.raises(ConfigError):
        eo_calibrate([0], [0], [0], fallback="coin")


# -- pipeline --------------------------------------------------------------------------------

SMALL = generate_synthetic(SyntheticConfig(n_classes=3, n=900, bias=0.6, seed=2, class_signal=0.25, marker_rate=0.2))
FAST = TrainConfig(epochs=8)


def test_empty_stage_list_is_baseline():
    res = run_pipeline(SMALL, PipelineConfig(train=FAST), seed=1)
    assert res.projection is None and res.policy is None
    assert isinstance(res.model, classifier.LinearModel)
    assert res.manifest["pipeline"]["stages"] == []


def test_pipeline_is_deterministic_per_seed():
    cfg = PipelineConfig("all", (Stage("cda"), Stage("inlp", {"max_iters": 3}), Stage("eo")), train=FAST)
    a, b = run_pipeline(SMALL, cfg, seed=5), run_pipeline(SMALL, cfg, seed=5)
    assert np.array_equal(a.test_predictions, b.test_predictions)
    assert a.manifest == b.manifest
    c = run_pipeline(SMALL, cfg, seed=6)
    assert a.manifest["derived_seeds"] != c.manifest["derived_seeds"]


def test_cda_inlp_configuration_runs():
    cfg = PipelineConfig("cda+inlp", (Stage("cda"), Stage("inlp", {"max_iters": 5})), train=FAST)
    res = run_pipeline(SMALL, cfg, seed=1)
    assert res.manifest["cda"]["augmented_train_size"] == 2 * res.manifest["split_sizes"][0]
    assert res.projection is not None


def test_decoupled_and_eo_compose():
    cfg = PipelineConfig("dec+eo", (Stage("decoupled"), Stage("eo")), train=FAST)
    res = run_pipeline(SMALL, cfg, seed=1)
    assert res.policy is not None and set(res.model.models) == {0, 1}


@pytest.mark.parametrize("stages, message", [
    ((Stage("inlp"), Stage("cda")), "cannot follow"),
    ((Stage("eo"), Stage("eo")), "more than once"),
    ((Stage("reweigh"),), "unknown stage kind 'reweigh'"),
    ((Stage("inlp", {"iters": 3}),), "unknown parameter"),
])
def test_invalid_compositions(stages, message):
    with pytest.raises(ConfigError, match=message):
        PipelineConfig("bad", stages)


def test_embeddings_featurizer_and_cda_conflict():
    rng = np.random.default_rng(0)
    emb = FeatureMatrix.from_array(rng.normal(size=(len(SMALL), 5)))
    splits = Splits.from_dataset(SMALL, PipelineConfig().split, emb)
    res = run_pipeline(splits, PipelineConfig(featurizer=FeaturizerConfig("embeddings"), train=FAST), seed=1)
    assert res.evaluation.n_classes == 3
    with pytest.raises(ConfigError, match="cda"):
        run_pipeline(splits, PipelineConfig("x", (Stage("cda"),), featurizer=FeaturizerConfig("embeddings")), seed=1)
    with pytest.raises(ConfigError, match="embedding file"):
        run_pipeline(SMALL, PipelineConfig(featurizer=FeaturizerConfig("embeddings")), seed=1)


def test_derived_seeds_are_stable_and_distinct():
    seeds = {k: derive_seed(1, k) for k in ("classifier", "inlp", "eo")}
    assert len(set(seeds.values())) == 3
    ss = np.random.SeedSequence(entropy=1, spawn_key=(2,))
    assert seeds["inlp"] == int(ss.generate_state(1, dtype=np.uint64)[0])
