"""Bag-of-words / TF-IDF featurization and precomputed embedding files."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .binio import read_blob, write_blob
from .corpus import Dataset
from .errors import DataError

EMBEDDING_MAGIC = b"GFEM"


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Dense float32 rows aligned to dataset examples through ``row_ids``."""

    values: np.ndarray
    row_ids: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got shape {values.shape}")
        row_ids = np.asarray(self.row_ids, dtype=np.int64)
        if row_ids.shape != (values.shape[0],):
            raise DataError(f"{len(row_ids)} row ids for {values.shape[0]} rows")
        bad = np.argwhere(~np.isfinite(values))
        if len(bad):
            r, c = bad[0]
            raise DataError(f"non-finite feature value at row {r}, column {c}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "row_ids", row_ids)

    @classmethod
    def from_array(cls, values: np.ndarray) -> FeatureMatrix:
        return cls(values, np.arange(np.asarray(values).shape[0]))

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def take(self, rows: np.ndarray) -> FeatureMatrix:
        return FeatureMatrix(self.values[rows], self.row_ids[rows])


@dataclass(frozen=True, eq=False)
class Vocabulary:
    index: Mapping[str, int]
    doc_freq: np.ndarray
    n_docs: int
    min_df: int
    max_features: int | None
    tfidf: bool

    def __len__(self) -> int:
        return len(self.index)

    @property
    def terms(self) -> list[str]:
        return sorted(self.index, key=self.index.__getitem__)

    @property
    def idf(self) -> np.ndarray:
        return np.log((1.0 + self.n_docs) / (1.0 + self.doc_freq)) + 1.0


def fit_bow(train: Dataset, min_df: int = 2, max_features: int | None = 50000, tfidf: bool = True) -> Vocabulary:
    """Keep the ``max_features`` terms with highest document frequency (``df >= min_df``).

    Ties on document frequency are broken alphabetically.
    """
    n = len(train)
    if n == 0:
        raise DataError("cannot fit a vocabulary on an empty dataset")
    if min_df > n:
        raise DataError(f"min_df={min_df} exceeds the number of documents ({n})")
    df = Counter(t for ex in train.examples for t in set(ex.tokens))
    kept = sorted((t for t, c in df.items() if c >= min_df), key=lambda t: (-df[t], t))
    if max_features is not None:
        kept = kept[:max_features]
    if not kept:
        raise DataError(f"vocabulary is empty after filtering (min_df={min_df})")
    index = {t: i for i, t in enumerate(kept)}
    return Vocabulary(index, np.array([df[t] for t in kept], dtype=np.float64), n, min_df, max_features, tfidf)


def transform(vocab: Vocabulary, data: Dataset) -> FeatureMatrix:
    """Raw counts, or TF-IDF rows scaled to unit L2 norm. Unknown terms are dropped."""
    X = np.zeros((len(data), len(vocab)), dtype=np.float64)
    idx = vocab.index
    for i, ex in enumerate(data.examples):
        for t in ex.tokens:
            j = idx.get(t)
            if j is not None:
                X[i, j] += 1.0
    if vocab.tfidf:
        X *= vocab.idf
        norms = np.sqrt(np.einsum("ij,ij->i", X, X))
        nz = norms > 0
        X[nz] /= norms[nz, None]
    return FeatureMatrix(X.astype(np.float32), np.arange(len(data)))


def save_embeddings(fm: FeatureMatrix | np.ndarray, path: str | Path) -> None:
    values = fm.values if isinstance(fm, FeatureMatrix) else np.asarray(fm, dtype=np.float32)
    n, d = values.shape
    write_blob(path, EMBEDDING_MAGIC, (n, d), values)


def load_embeddings(path: str | Path, expected_rows: int | None = None) -> FeatureMatrix:
    """Read a ``GFEM`` file: magic, u64 n, u64 d, then n*d little-endian float32."""
    (n, d), payload = read_blob(path, EMBEDDING_MAGIC, 2)
    if payload.size != n * d:
        raise DataError(f"{path}: header says {n}x{d} = {n * d} floats, payload has {payload.size}")
    values = payload.reshape(n, d)
    bad = np.argwhere(~np.isfinite(values))
    if len(bad):
        r, c = bad[0]
        raise DataError(f"{path}: non-finite value at row {r}, column {c}")
    if expected_rows is not None and n != expected_rows:
        raise DataError(f"{path}: {n} embedding rows for a dataset of {expected_rows} examples")
    return FeatureMatrix(values.copy(), np.arange(n))

