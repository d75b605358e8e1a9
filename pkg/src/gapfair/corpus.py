"""Labeled text records: loading, tokenization, stopwords, splits, swap lexicons, synthetic corpora."""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError

# Stopword list used for the bios (kept verbatim, including the "s"/"t"/"don" fragments).
STOPWORDS: frozenset[str] = frozenset(
    """
    i me my myself we our ours ourselves you your yours yourself yourselves he him his himself
    she her hers herself it its itself they them their theirs themselves what which who whom
    this that these those am is are was were be been being have has had having do does did
    doing a an the and but if or because as until while of at by for with about against between
    into through during before after above below to from up down in out on off over under again
    further then once here there when where why how all any both each few more most other some
    such no nor not only own same so than too very s t can will just don should now
    """.split()
)

_PUNCT = re.compile(r"[^\w\s]|_", re.UNICODE)
_FIELDS = ("text", "class", "group")


def tokenize(text: str) -> tuple[str, ...]:
    """Lowercase, strip punctuation, split on whitespace."""
    return tuple(_PUNCT.sub("", text.lower()).split())


@dataclass(frozen=True)
class Example:
    tokens: tuple[str, ...]
    class_label: int
    group: int


@dataclass(frozen=True, eq=False)
class Dataset:
    examples: tuple[Example, ...]
    class_names: tuple[str, ...]
    group_names: tuple[str, ...]

    def __post_init__(self):
        if len(self.class_names) < 2:
            raise DataError(f"need at least 2 classes, got {len(self.class_names)}")
        if len(self.group_names) < 1:
            raise DataError("need at least 1 group")
        C, G = len(self.class_names), len(self.group_names)
        for i, ex in enumerate(self.examples):
            if not 0 <= ex.class_label < C or not 0 <= ex.group < G:
                raise DataError(f"example {i} references class {ex.class_label} / group {ex.group} outside the catalogs")

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_groups(self) -> int:
        return len(self.group_names)

    @property
    def labels(self) -> np.ndarray:
        return np.fromiter((e.class_label for e in self.examples), dtype=np.int64, count=len(self.examples))

    @property
    def groups(self) -> np.ndarray:
        return np.fromiter((e.group for e in self.examples), dtype=np.int64, count=len(self.examples))

    def subset(self, indices: Iterable[int]) -> Dataset:
        return Dataset(tuple(self.examples[i] for i in indices), self.class_names, self.group_names)

    def with_examples(self, examples: Iterable[Example]) -> Dataset:
        return Dataset(tuple(examples), self.class_names, self.group_names)

    def cell_counts(self) -> np.ndarray:
        counts = np.zeros((self.n_classes, self.n_groups), dtype=np.int64)
        np.add.at(counts, (self.labels, self.groups), 1)
        return counts


# -- loading / writing -------------------------------------------------------------------------


def _detect_format(path: Path, fmt: str | None) -> str:
    if fmt:
        if fmt not in ("jsonl", "csv"):
            raise DataError(f"unsupported dataset format {fmt!r}")
        return fmt
    return "csv" if path.suffix.lower() == ".csv" else "jsonl"


def _iter_records(path: Path, fmt: str):
    """Yield (line_number, record dict)."""
    if fmt == "jsonl":
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
                if not isinstance(rec, dict):
                    raise DataError(f"{path}:{lineno}: record is not an object")
                yield lineno, rec
    else:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                return
            extra = set(reader.fieldnames) - set(_FIELDS)
            if extra:
                raise DataError(f"{path}:1: unknown field(s) {sorted(extra)}")
            for rec in reader:
                yield reader.line_num, rec


def load_dataset(path: str | Path, format: str | None = None) -> Dataset:
    """Read a JSONL or CSV file with string fields ``text``, ``class`` and ``group``.

    Class and group catalogs are built in first-appearance order.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    fmt = _detect_format(path, format)
    classes: dict[str, int] = {}
    groups: dict[str, int] = {}
    examples = []
    for lineno, rec in _iter_records(path, fmt):
        unknown = set(rec) - set(_FIELDS)
        if unknown:
            raise DataError(f"{path}:{lineno}: unknown field(s) {sorted(unknown)}")
        for key in _FIELDS:
            if key not in rec or rec[key] is None:
                raise DataError(f"{path}:{lineno}: missing field {key!r}")
            if not isinstance(rec[key], str):
                raise DataError(f"{path}:{lineno}: field {key!r} must be a string")
        c = classes.setdefault(rec["class"], len(classes))
        g = groups.setdefault(rec["group"], len(groups))
        examples.append(Example(tokenize(rec["text"]), c, g))
    if not examples:
        raise DataError(f"{path}: empty dataset")
    if len(classes) < 2:
        raise DataError(f"{path}: need at least 2 classes, found {len(classes)}")
    return Dataset(tuple(examples), tuple(classes), tuple(groups))


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write JSONL; ``text`` is the space-joined token stream."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in dataset.examples:
            rec = {
                "text": " ".join(ex.tokens),
                "class": dataset.class_names[ex.class_label],
                "group": dataset.group_names[ex.group],
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def align_catalogs(reference: Dataset, other: Dataset) -> Dataset:
    """Re-index ``other`` onto the class/group catalogs of ``reference``.

    Needed when splits were written to separate files and reloaded (first-appearance
    order can differ between files).
    """
    cmap = {name: i for i, name in enumerate(reference.class_names)}
    gmap = {name: i for i, name in enumerate(reference.group_names)}
    try:
        examples = [
            Example(e.tokens, cmap[other.class_names[e.class_label]], gmap[other.group_names[e.group]])
            for e in other.examples
        ]
    except KeyError as exc:
        raise DataError(f"label {exc.args[0]!r} does not occur in the reference split") from None
    return reference.with_examples(examples)


# -- stopwords ---------------------------------------------------------------------------------


def remove_stopwords(tokens: Sequence[str], stopwords: frozenset[str] | set[str] = STOPWORDS) -> list[str]:
    return [t for t in tokens if t not in stopwords]


def filter_dataset(dataset: Dataset, stopwords: frozenset[str] | set[str] = STOPWORDS) -> Dataset:
    return dataset.with_examples(
        Example(tuple(remove_stopwords(e.tokens, stopwords)), e.class_label, e.group) for e in dataset.examples
    )


def load_stopwords(path: str | Path) -> frozenset[str]:
    with open(path, encoding="utf-8") as fh:
        return frozenset(w.strip().lower() for w in fh if w.strip())


# -- swap lexicon ------------------------------------------------------------------------------


@dataclass(frozen=True)
class SwapLexicon:
    pairs: tuple[tuple[str, str], ...]
    mapping: Mapping[str, str] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mapping: dict[str, str] = {}
        for a, b in self.pairs:
            if a == b:
                raise DataError(f"lexicon pair ({a}, {b}) swaps a word with itself")
            for w in (a, b):
                if w in mapping:
                    raise DataError(f"lexicon word {w!r} appears in more than one pair")
            mapping[a] = b
            mapping[b] = a
        object.__setattr__(self, "mapping", mapping)

    def swap(self, tokens: Sequence[str]) -> tuple[str, ...]:
        m = self.mapping
        return tuple(m.get(t, t) for t in tokens)

    def __len__(self) -> int:
        return len(self.pairs)


def load_lexicon(path: str | Path) -> SwapLexicon:
    """Two tab-separated columns per line; ``#`` lines and blanks are skipped."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 2 or not all(c.strip() for c in cols):
                raise DataError(f"{path}:{lineno}: expected two tab-separated words")
            pairs.append((cols[0].strip().lower(), cols[1].strip().lower()))
    return SwapLexicon(tuple(pairs))


def default_lexicon() -> SwapLexicon:
    ref = resources.files("gapfair") / "data" / "gender_pairs.tsv"
    with resources.as_file(ref) as p:
        return load_lexicon(p)


# -- splits ------------------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        if len(fr) != 3 or any(not 0.0 <= f <= 1.0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise DataError(f"split fractions must be three values in [0,1] summing to 1, got {self.fractions}")
        object.__setattr__(self, "fractions", fr)


def _largest_remainder(total: int, fractions: Sequence[float]) -> np.ndarray:
    quotas = np.asarray(fractions) * total
    counts = np.floor(quotas).astype(np.int64)
    short = total - counts.sum()
    order = np.lexsort((np.arange(len(quotas)), -(quotas - counts)))
    counts[order[:short]] += 1
    return counts


def split_indices(dataset: Dataset, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic index partition into (train, dev, test), each sorted ascending."""
    n = len(dataset)
    rng = np.random.default_rng(spec.seed)
    targets = _largest_remainder(n, spec.fractions)
    parts: list[list[int]] = [[], [], []]
    if not spec.stratified:
        perm = rng.permutation(n)
        bounds = np.cumsum(targets)
        for s, chunk in enumerate(np.split(perm, bounds[:2])):
            parts[s] = chunk.tolist()
    else:
        n_active = sum(f > 0 for f in spec.fractions)
        cells: dict[tuple[int, int], np.ndarray] = {}
        keys = dataset.labels * dataset.n_groups + dataset.groups
        for key in np.unique(keys):
            members = np.flatnonzero(keys == key)
            c, g = divmod(int(key), dataset.n_groups)
            if len(members) < n_active:
                raise DataError(
                    f"cell ({dataset.class_names[c]}, {dataset.group_names[g]}) has {len(members)} "
                    f"example(s); stratified splitting needs at least {n_active}"
                )
            cells[(c, g)] = rng.permutation(members)
        # floor allocation per cell, then hand out leftovers (at most one per split per cell)
        # so split totals hit the global largest-remainder targets.
        fr = np.asarray(spec.fractions)
        base = {k: np.floor(len(v) * fr).astype(np.int64) for k, v in cells.items()}
        need = targets - sum(base.values())
        order = sorted(cells, key=lambda k: (-(len(cells[k]) - base[k].sum()), k))
        for k in order:
            left = len(cells[k]) - int(base[k].sum())
            rem = len(cells[k]) * fr - base[k]
            ranked = sorted(range(3), key=lambda s: (-need[s], -rem[s], s))
            for s in ranked[:left]:
                base[k][s] += 1
                need[s] -= 1
        for k, members in cells.items():
            a, b, _ = base[k]
            parts[0].extend(members[:a].tolist())
            parts[1].extend(members[a : a + b].tolist())
            parts[2].extend(members[a + b :].tolist())
    return tuple(np.sort(np.asarray(p, dtype=np.int64)) for p in parts)  # type: ignore[return-value]


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    tr, dv, te = split_indices(dataset, spec)
    return dataset.subset(tr), dataset.subset(dv), dataset.subset(te)


# -- synthetic corpora -------------------------------------------------------------------------

# Gendered marker words for the binary case; each is a lexicon pair so CDA can swap them.
MALE_MARKERS = ("he", "his", "him", "himself", "mr", "man", "father", "husband", "son", "brother")
FEMALE_MARKERS = ("she", "her", "hers", "herself", "mrs", "woman", "mother", "wife", "daughter", "sister")


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for :func:`generate_synthetic`.

    ``bias`` skews group membership inside each class toward a dominant group
    (``class % G``); combined with group-marker words in the text this plants a
    group-dependent TPR gap in a model trained on the corpus. ``cell_probs`` (C x G,
    summing to 1) overrides the bias-derived cell distribution and ``cell_counts``
    fixes the exact histogram.
    """

    n_classes: int = 4
    n_groups: int = 2
    n: int = 2000
    bias: float = 0.0
    class_rates: tuple[float, ...] | None = None
    cell_probs: tuple[tuple[float, ...], ...] | None = None
    cell_counts: tuple[tuple[int, ...], ...] | None = None
    doc_length: int = 12
    class_signal: float = 0.3
    marker_rate: float = 0.15
    class_vocab: int = 25
    common_vocab: int = 80
    seed: int = 0

    def probabilities(self) -> np.ndarray:
        C, G = self.n_classes, self.n_groups
        if self.cell_probs is not None:
            p = np.asarray(self.cell_probs, dtype=float)
            if p.shape != (C, G):
                raise DataError(f"cell_probs must be {C}x{G}")
        else:
            rates = np.full(C, 1.0 / C) if self.class_rates is None else np.asarray(self.class_rates, float)
            if rates.shape != (C,):
                raise DataError(f"class_rates must have {C} entries")
            if not 0.0 <= self.bias <= 1.0:
                raise DataError("bias must lie in [0, 1]")
            within = np.full((C, G), (1.0 - self.bias) / G)
            within[np.arange(C), np.arange(C) % G] += self.bias
            p = rates[:, None] * within
        if np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > 1e-9:
            raise DataError("cell probabilities must lie in [0,1] and sum to 1")
        return p


def _group_markers(G: int) -> list[tuple[str, ...]]:
    if G == 2:
        return [MALE_MARKERS, FEMALE_MARKERS]
    return [tuple(f"g{z}m{k}" for k in range(6)) for z in range(G)]


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    cfg = config
    C, G = cfg.n_classes, cfg.n_groups
    for name in ("class_signal", "marker_rate"):
        if not 0.0 <= getattr(cfg, name) <= 1.0:
            raise DataError(f"{name} must lie in [0, 1]")
    if cfg.class_signal + cfg.marker_rate > 1.0:
        raise DataError("class_signal + marker_rate must not exceed 1")
    rng = np.random.default_rng(cfg.seed)
    if cfg.cell_counts is not None:
        counts = np.asarray(cfg.cell_counts, dtype=np.int64)
        if counts.shape != (C, G) or np.any(counts < 0):
            raise DataError(f"cell_counts must be a non-negative {C}x{G} table")
        n = int(counts.sum())
        if n < C * G:
            raise DataError(f"n={n} is smaller than C*G={C * G}")
        cells = rng.permutation(np.repeat(np.arange(C * G), counts.ravel()))
    else:
        n = cfg.n
        if n < C * G:
            raise DataError(f"n={n} is smaller than C*G={C * G}")
        p = cfg.probabilities().ravel()
        cells = rng.choice(C * G, size=n, p=p)
    labels, groups = np.divmod(cells, G)

    class_words = [[f"c{c}w{k}" for k in range(cfg.class_vocab)] for c in range(C)]
    common = [f"w{k}" for k in range(cfg.common_vocab)]
    markers = _group_markers(G)
    L = cfg.doc_length
    u = rng.random((n, L))
    pick_class = rng.integers(0, cfg.class_vocab, size=(n, L))
    pick_common = rng.integers(0, cfg.common_vocab, size=(n, L))
    pick_marker = rng.integers(0, 1 << 30, size=(n, L))

    examples = []
    for i in range(n):
        c, z = int(labels[i]), int(groups[i])
        toks = []
        for j in range(L):
            if u[i, j] < cfg.class_signal:
                toks.append(class_words[c][pick_class[i, j]])
            elif u[i, j] < cfg.class_signal + cfg.marker_rate:
                toks.append(markers[z][pick_marker[i, j] % len(markers[z])])
            else:
                toks.append(common[pick_common[i, j]])
        examples.append(Example(tuple(toks), c, z))

    group_names = ("male", "female") if G == 2 else tuple(f"g{z}" for z in range(G))
    return Dataset(tuple(examples), tuple(f"class{c}" for c in range(C)), group_names)
