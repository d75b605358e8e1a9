"""Counterfactual data augmentation by word-pair swapping."""

from __future__ import annotations

from ..corpus import Dataset, Example, SwapLexicon
from ..errors import ConfigError


def cda_augment(train: Dataset, lexicon: SwapLexicon, flip_group: bool = True) -> Dataset:
    """Append one swapped copy of every example (originals first, copies in the same order).

    Copies keep their class label. With ``flip_group`` the copy's group is toggled,
    which only makes sense for two groups.
    """
    if flip_group and train.n_groups != 2:
        raise ConfigError(f"flip_group requires exactly 2 groups, dataset has {train.n_groups}")
    copies = [
        Example(lexicon.swap(ex.tokens), ex.class_label, 1 - ex.group if flip_group else ex.group)
        for ex in train.examples
    ]
    return train.with_examples(train.examples + tuple(copies))
