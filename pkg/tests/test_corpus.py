import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gapfair import corpus
from gapfair.corpus import (
    STOPWORDS,
    Dataset,
    Example,
    SplitSpec,
    SwapLexicon,
    SyntheticConfig,
    generate_synthetic,
)
from gapfair.errors import DataError


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def test_tokenize_lowercases_and_strips_punctuation():
    assert corpus.tokenize("She is a Surgeon, in N.Y.!") == ("she", "is", "a", "surgeon", "in", "ny")
    assert corpus.tokenize("   ") == ()


def test_record_maps_to_example(tmp_path):
    p = write_jsonl(tmp_path / "d.jsonl", [
        {"text": "She is a surgeon", "class": "surgeon", "group": "female"},
        {"text": "He is a nurse", "class": "nurse", "group": "male"},
    ])
    ds = corpus.load_dataset(p)
    assert ds.examples[0] == Example(("she", "is", "a", "surgeon"), 0, 0)
    assert ds.class_names == ("surgeon", "nurse")
    assert ds.group_names == ("female", "male")


def test_csv_loader_matches_jsonl(tmp_path):
    (tmp_path / "d.csv").write_text('text,class,group\n"Hi, there",a,m\nyo,b,f\n', encoding="utf-8")
    ds = corpus.load_dataset(tmp_path / "d.csv")
    assert ds.examples[0].tokens == ("hi", "there")
    assert ds.n_classes == 2 and ds.n_groups == 2


def test_missing_group_names_the_line(tmp_path):
    p = write_jsonl(tmp_path / "d.jsonl", [
        {"text": "a", "class": "x", "group": "m"},
        {"text": "b", "class": "y"},
    ])
    with pytest.raises(DataError, match=r"d\.jsonl:2: missing field 'group'"):
        corpus.load_dataset(p)


@pytest.mark.parametrize("body, message", [
    ('{"text": "a", "class": "x", "group": "m", "extra": 1}\n', "unknown field"),
    ("{not json\n", "malformed JSON"),
    ("", "empty dataset"),
    ('{"text": "a", "class": "x", "group": "m"}\n', "at least 2 classes"),
])
def test_loader_rejects_bad_files(tmp_path, body, message):
    p = tmp_path / "d.jsonl"
    p.write_text(body, encoding="utf-8")
    with pytest.raises(DataError, match=message):
        corpus.load_dataset(p)


def test_missing_file_is_data_error(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        corpus.load_dataset(tmp_path / "nope.jsonl")


def test_write_then_load_round_trips(tmp_path):
    ds = generate_synthetic(SyntheticConfig(n=60, seed=3))
    corpus.write_dataset(ds, tmp_path / "out.jsonl")
    again = corpus.load_dataset(tmp_path / "out.jsonl")
    aligned = corpus.align_catalogs(ds, again)
    assert aligned.examples == ds.examples


def test_align_catalogs_rejects_unknown_label():
    a = Dataset((Example(("x",), 0, 0), Example(("y",), 1, 1)), ("a", "b"), ("m", "f"))
    b = Dataset((Example(("x",), 0, 0), Example(("y",), 1, 1)), ("a", "zzz"), ("m", "f"))
    with pytest.raises(DataError, match="zzz"):
        corpus.align_catalogs(a, b)


def test_dataset_validates_catalog_references():
    with pytest.raises(DataError):
        Dataset((Example(("x",), 2, 0),), ("a", "b"), ("m", "f"))
    with pytest.raises(DataError):
        Dataset((Example(("x",), 0, 0),), ("a",), ("m", "f"))


# -- stopwords -------------------------------------------------------------------------------


def test_stopword_examples():
    assert corpus.remove_stopwords(["she", "is", "a", "surgeon"]) == ["surgeon"]
    assert corpus.remove_stopwords([]) == []
    assert corpus.remove_stopwords(["surgeon", "surgeon"]) == ["surgeon", "surgeon"]


def test_stopword_list_keeps_fragments_and_size():
    assert {"s", "t", "don", "she", "he", "her", "his"} <= STOPWORDS
    assert len(STOPWORDS) == 127


@given(st.lists(st.sampled_from(sorted(STOPWORDS)[:20] + ["surgeon", "nurse", "poet"]), max_size=30))
def test_stopword_filter_is_idempotent(tokens):
    once = corpus.remove_stopwords(tokens)
    assert corpus.remove_stopwords(once) == once


def test_custom_stopword_file(tmp_path):
    (tmp_path / "sw.txt").write_text("Foo\nbar\n\n", encoding="utf-8")
    assert corpus.load_stopwords(tmp_path / "sw.txt") == {"foo", "bar"}


# -- lexicon ---------------------------------------------------------------------------------


def test_default_lexicon_is_consistent():
    lex = corpus.default_lexicon()
    assert lex.swap(("she", "is", "happy")) == ("he", "is", "happy")
    assert lex.swap(("his", "wife")) == ("her", "husband")
    for a, b in lex.pairs:
        assert lex.mapping[a] == b and lex.mapping[b] == a


def test_synthetic_markers_are_lexicon_pairs():
    lex = corpus.default_lexicon()
    for m, f in zip(corpus.MALE_MARKERS, corpus.FEMALE_MARKERS):
        assert lex.mapping[m] == f


@pytest.mark.parametrize("pairs", [(("he", "she"), ("he", "her")), (("a", "a"),)])
def test_lexicon_rejects_bad_pairs(pairs):
    with pytest.raises(DataError):
        SwapLexicon(pairs)


def test_lexicon_file_skips_comments(tmp_path):
    (tmp_path / "l.tsv").write_text("# pairs\nking\tqueen\n\nMr\tMrs\n", encoding="utf-8")
    lex = corpus.load_lexicon(tmp_path / "l.tsv")
    assert lex.pairs == (("king", "queen"), ("mr", "mrs"))
    (tmp_path / "bad.tsv").write_text("king queen\n", encoding="utf-8")
    with pytest.raises(DataError, match=":1:"):
        corpus.load_lexicon(tmp_path / "bad.tsv")


words = st.sampled_from(["he", "she", "his", "her", "him", "hers", "man", "woman", "doctor", "the", "x"])


@given(st.lists(words, max_size=25))
def test_swap_is_an_involution(tokens):
    lex = corpus.default_lexicon()
    assert lex.swap(lex.swap(tokens)) == tuple(tokens)


# -- splits ----------------------------------------------------------------------------------


def _toy(n, C=2, G=2, seed=0):
    rng = np.random.default_rng(seed)
    ex = tuple(Example(("w",), int(rng.integers(C)), int(rng.integers(G))) for _ in range(n))
    return Dataset(ex, tuple(f"c{i}" for i in range(C)), tuple(f"g{i}" for i in range(G)))


def test_split_sizes_and_determinism():
    ds = _toy(100, seed=1)
    spec = SplitSpec((0.8, 0.1, 0.1), seed=7)
    a = corpus.split_indices(ds, spec)
    b = corpus.split_indices(ds, spec)
    assert tuple(len(p) for p in a) == (80, 10, 10)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_stratified_split_rejects_tiny_cell():
    ex = tuple(Example(("w",), c, g) for c in range(2) for g in range(2) for _ in range(5)) + (
        Example(("w",), 2, 0),
    )
    ds = Dataset(ex, ("a", "b", "c"), ("m", "f"))
    with pytest.raises(DataError, match="stratified"):
        corpus.split_indices(ds, SplitSpec())


def test_bad_fractions_rejected():
    with pytest.raises(DataError):
        SplitSpec((0.5, 0.5, 0.5))


@given(
    n=st.integers(30, 300),
    seed=st.integers(0, 10_000),
    frac=st.sampled_from([(0.8, 0.1, 0.1), (0.6, 0.2, 0.2), (0.5, 0.25, 0.25), (0.7, 0.3, 0.0)]),
    stratified=st.booleans(),
)
def test_split_is_a_partition(n, seed, frac, stratified):
    ds = _toy(n, C=3, G=2, seed=seed)
    if stratified and ds.cell_counts().min() < 3:
        return
    parts = corpus.split_indices(ds, SplitSpec(frac, seed=seed, stratified=stratified))
    joined = np.concatenate(parts)
    assert sorted(joined.tolist()) == list(range(n))
    for p, f in zip(parts, frac):
        assert abs(len(p) - f * n) < 1.0 + 1e-9


def test_stratified_split_keeps_every_cell_in_every_split():
    ds = _toy(400, C=4, G=2, seed=5)
    for part in corpus.split(ds, SplitSpec(seed=3)):
        assert (part.cell_counts() > 0).all()


# -- synthetic -------------------------------------------------------------------------------


def test_synthetic_is_deterministic(tmp_path):
    cfg = SyntheticConfig(n_classes=4, n_groups=2, n=2000, bias=0.8, seed=1)
    corpus.write_dataset(generate_synthetic(cfg), tmp_path / "a.jsonl")
    corpus.write_dataset(generate_synthetic(cfg), tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_synthetic_exact_cell_counts_match_brute_force_tally():
    counts = ((100, 10), (7, 40), (25, 25))
    ds = generate_synthetic(SyntheticConfig(n_classes=3, n_groups=2, cell_counts=counts, seed=4))
    tally = Counter((e.class_label, e.group) for e in ds.examples)
    assert {k: v for k, v in tally.items()} == {(c, g): counts[c][g] for c in range(3) for g in range(2)}


@pytest.mark.parametrize("bias, G", [(0.0, 2), (0.6, 2), (0.4, 3)])
def test_synthetic_cell_frequencies_within_three_sigma(bias, G):
    cfg = SyntheticConfig(n_classes=4, n_groups=G, n=20000, bias=bias, seed=11, doc_length=2)
    ds = generate_synthetic(cfg)
    p = cfg.probabilities()
    freq = ds.cell_counts() / len(ds)
    se = np.sqrt(p * (1 - p) / len(ds))
    assert np.all(np.abs(freq - p) <= 3 * se + 1e-12)


def test_synthetic_rejects_too_small_n():
    with pytest.raises(DataError):
        generate_synthetic(SyntheticConfig(n_classes=4, n_groups=2, n=5))
