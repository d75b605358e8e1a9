"""Compose interventions into one train/evaluate run.

Stages always execute in the canonical order cda -> featurize -> inlp -> train
(plain or decoupled) -> eo; a config listing them in any other order is rejected.
Every random draw comes from a seed derived from the single run seed, so a run is
reproducible from its manifest.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .. import classifier, corpus, features
from ..classifier import LinearModel, TrainConfig
from ..corpus import Dataset, SplitSpec
from ..errors import ConfigError, DataError, GapfairError
from ..features import FeatureMatrix
from ..metrics import EvalResult, evaluate
from .cda import cda_augment
from .decoupled import DecoupledModel, train_decoupled
from .eo import FALLBACKS, EoPolicy, eo_apply, eo_calibrate
from .inlp import InlpParams, Projection, inlp_apply, inlp_fit

STAGE_ORDER = ("cda", "inlp", "decoupled", "eo")
STAGE_DEFAULTS: dict[str, dict[str, Any]] = {
    "cda": {"flip_group": True, "lexicon": None},
    "inlp": {"max_iters": 30, "stop_margin": 0.02, "guard": {}},
    "decoupled": {},
    "eo": {"fallback": "second_best", "abstain_label": -1},
}
FEATURIZERS = ("tfidf", "counts", "embeddings")

# counter values for the seed streams derived from a run seed
SEED_STREAMS = {"classifier": 1, "inlp": 2, "eo": 3}
SEED_SCHEME = "numpy SeedSequence(entropy=run_seed, spawn_key=(stream,)).generate_state(1, uint64)[0]"


def derive_seed(run_seed: int, stream: str) -> int:
    ss = np.random.SeedSequence(entropy=int(run_seed), spawn_key=(SEED_STREAMS[stream],))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class Stage:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def resolved(self) -> dict[str, Any]:
        if self.kind not in STAGE_DEFAULTS:
            raise ConfigError(f"unknown stage kind {self.kind!r}; expected one of {STAGE_ORDER}")
        unknown = set(self.params) - set(STAGE_DEFAULTS[self.kind])
        if unknown:
            raise ConfigError(f"stage {self.kind!r}: unknown parameter(s) {sorted(unknown)}")
        return {**STAGE_DEFAULTS[self.kind], **dict(self.params)}


@dataclass(frozen=True)
class FeaturizerConfig:
    kind: str = "tfidf"
    min_df: int = 2
    max_features: int | None = 50000

    def __post_init__(self):
        if self.kind not in FEATURIZERS:
            raise ConfigError(f"unknown featurizer {self.kind!r}; expected one of {FEATURIZERS}")


@dataclass(frozen=True)
class PipelineConfig:
    name: str = "baseline"
    stages: tuple[Stage, ...] = ()
    featurizer: FeaturizerConfig = FeaturizerConfig()
    train: TrainConfig = TrainConfig()
    split: SplitSpec = SplitSpec()
    stopwords: bool = True

    def __post_init__(self):
        validate_stages(self.stages)

    def stage(self, kind: str) -> dict[str, Any] | None:
        for s in self.stages:
            if s.kind == kind:
                return s.resolved()
        return None

    def describe(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "stages": [{"kind": s.kind, **s.resolved()} for s in self.stages],
            "featurizer": asdict(self.featurizer),
            "train": asdict(self.train),
            "split": {**asdict(self.split), "fractions": list(self.split.fractions)},
            "stopwords": self.stopwords,
        }


def validate_stages(stages: tuple[Stage, ...]) -> None:
    seen: list[str] = []
    for s in stages:
        s.resolved()  # rejects unknown kinds and parameters
        if s.kind in seen:
            raise ConfigError(f"stage {s.kind!r} appears more than once")
        if seen and STAGE_ORDER.index(s.kind) < STAGE_ORDER.index(seen[-1]):
            raise ConfigError(
                f"stage {s.kind!r} cannot follow {seen[-1]!r}; canonical order is {' -> '.join(STAGE_ORDER)}"
            )
        seen.append(s.kind)


@dataclass(frozen=True, eq=False)
class Splits:
    """Train/dev/test datasets plus, for the embeddings featurizer, their aligned rows."""

    train: Dataset
    dev: Dataset
    test: Dataset
    embeddings: tuple[FeatureMatrix, FeatureMatrix, FeatureMatrix] | None = None

    @classmethod
    def from_dataset(cls, dataset: Dataset, spec: SplitSpec, embeddings: FeatureMatrix | None = None) -> Splits:
        if embeddings is not None and embeddings.n_rows != len(dataset):
            raise DataError(f"{embeddings.n_rows} embedding rows for {len(dataset)} examples")
        idx = corpus.split_indices(dataset, spec)
        parts = tuple(dataset.subset(i) for i in idx)
        emb = None if embeddings is None else tuple(embeddings.take(i) for i in idx)
        return cls(*parts, embeddings=emb)  # type: ignore[arg-type]


@contextmanager
def _stage(name: str):
    """Prefix library errors raised inside a stage with the stage name."""
    try:
        yield
    except GapfairError as exc:
        raise type(exc)(f"stage {name!r}: {exc}") from exc


@dataclass(frozen=True, eq=False)
class PipelineResult:
    config: PipelineConfig
    seed: int
    model: LinearModel | DecoupledModel
    projection: Projection | None
    policy: EoPolicy | None
    test_predictions: np.ndarray
    evaluation: EvalResult
    manifest: dict[str, Any]


def run_pipeline(
    data: Dataset | Splits,
    config: PipelineConfig = PipelineConfig(),
    seed: int = 1,
    lexicon: corpus.SwapLexicon | None = None,
) -> PipelineResult:
    splits = data if isinstance(data, Splits) else Splits.from_dataset(data, config.split)
    train_ds, dev_ds, test_ds = splits.train, splits.dev, splits.test
    C = train_ds.n_classes
    manifest: dict[str, Any] = {
        "pipeline": config.describe(),
        "run_seed": int(seed),
        "seed_scheme": SEED_SCHEME,
        "derived_seeds": {k: derive_seed(seed, k) for k in SEED_STREAMS},
        "split_sizes": [len(train_ds), len(dev_ds), len(test_ds)],
    }

    use_emb = config.featurizer.kind == "embeddings"
    if use_emb and splits.embeddings is None:
        raise ConfigError("featurizer 'embeddings' needs an embedding file")

    cda = config.stage("cda")
    if cda is not None:
        if use_emb:
            raise ConfigError("stage 'cda' rewrites text and cannot precede precomputed embeddings")
        lex = lexicon
        if lex is None:
            lex = corpus.load_lexicon(cda["lexicon"]) if cda["lexicon"] else corpus.default_lexicon()
        with _stage("cda"):
            train_ds = cda_augment(train_ds, lex, flip_group=bool(cda["flip_group"]))
        manifest["cda"] = {"lexicon_pairs": len(lex), "augmented_train_size": len(train_ds)}

    # gendered stopwords must survive until after CDA has swapped them
    if config.stopwords and not use_emb:
        train_ds, dev_ds, test_ds = (corpus.filter_dataset(d) for d in (train_ds, dev_ds, test_ds))

    if use_emb:
        X_train, X_dev, X_test = splits.embeddings  # type: ignore[misc]
    else:
        fc = config.featurizer
        vocab = features.fit_bow(train_ds, fc.min_df, fc.max_features, tfidf=fc.kind == "tfidf")
        X_train, X_dev, X_test = (features.transform(vocab, d) for d in (train_ds, dev_ds, test_ds))
        manifest["vocabulary_size"] = len(vocab)

    y_train, z_train = train_ds.labels, train_ds.groups
    projection = None
    inlp = config.stage("inlp")
    if inlp is not None:
        with _stage("inlp"):
            guard_cfg = config.train.replace(**{**dict(inlp["guard"]), "seed": derive_seed(seed, "inlp")})
            params = InlpParams(int(inlp["max_iters"]), float(inlp["stop_margin"]), guard_cfg)
            projection = inlp_fit(X_train, z_train, params)
        X_train, X_dev, X_test = (inlp_apply(projection, X) for X in (X_train, X_dev, X_test))
        manifest["inlp"] = {
            "iterations_run": projection.iterations_run,
            "removed_directions": int(projection.directions.shape[0]),
            "guard_accuracy": list(projection.guard_accuracy),
            "majority_rate": projection.majority_rate,
        }

    train_cfg = config.train.replace(seed=derive_seed(seed, "classifier"))
    model: LinearModel | DecoupledModel
    if config.stage("decoupled") is not None:
        with _stage("decoupled"):
            model = train_decoupled(X_train, y_train, z_train, train_cfg, n_classes=C)

        def score(X, ds):
            return model.predict(X, ds.groups), model.predict_proba(X, ds.groups)

    else:
        with _stage("train"):
            model = classifier.train(X_train, y_train, train_cfg, n_classes=C)

        def score(X, ds):
            return classifier.predict(model, X), classifier.predict_proba(model, X)

    test_pred, test_proba = score(X_test, test_ds)

    policy = None
    eo = config.stage("eo")
    if eo is not None:
        if eo["fallback"] not in FALLBACKS:
            raise ConfigError(f"stage 'eo': unknown fallback {eo['fallback']!r}")
        if len(dev_ds) == 0:
            raise DataError("stage 'eo': calibration needs a non-empty dev split")
        with _stage("eo"):
            dev_pred, dev_proba = score(X_dev, dev_ds)
            policy = eo_calibrate(
                dev_pred, dev_ds.labels, dev_ds.groups, dev_proba,
                n_classes=C, n_groups=train_ds.n_groups,
                fallback=eo["fallback"], abstain_label=int(eo["abstain_label"]),
            )
            test_pred = eo_apply(policy, test_pred, test_ds.groups, test_proba, derive_seed(seed, "eo"))
        manifest["eo"] = {"calibration_split": "dev", "warnings": list(policy.warnings)}

    result = evaluate(test_pred, test_ds.labels, test_ds.groups, test_ds.class_names, test_ds.group_names)
    return PipelineResult(config, int(seed), model, projection, policy, test_pred, result, manifest)


def load_splits(
    paths: Mapping[str, str | Path], fmt: str | None = None, embeddings: Mapping[str, str | Path] | None = None
) -> Splits:
    """Load separately stored train/dev/test files (e.g. written by ``prepare``)."""
    train = corpus.load_dataset(paths["train"], fmt)
    dev = corpus.align_catalogs(train, corpus.load_dataset(paths["dev"], fmt))
    test = corpus.align_catalogs(train, corpus.load_dataset(paths["test"], fmt))
    emb = None
    if embeddings:
        emb = tuple(
            features.load_embeddings(embeddings[k], expected_rows=len(ds))
            for k, ds in (("train", train), ("dev", dev), ("test", test))
        )
    return Splits(train, dev, test, emb)  # type: ignore[arg-type]
