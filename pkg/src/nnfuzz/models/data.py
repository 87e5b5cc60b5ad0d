"""Desk-scale datasets: 8x8 handwritten digits and a generated English-like text corpus."""

from __future__ import annotations

import numpy as np

from ..numeric import FLOAT, make_rng


def load_digits_split(seed: int = 0, test_fraction: float = 0.2):
    """Return ``(x_train, y_train, x_test, y_test)`` with pixels scaled to [0, 1]."""
    from sklearn.datasets import load_digits

    d = load_digits()
    x = (d.data / 16.0).astype(FLOAT)
    y = d.target.astype(np.int64)
    order = make_rng(seed).permutation(len(x))
    n_test = int(round(len(x) * test_fraction))
    test, train = order[:n_test], order[n_test:]
    return x[train], y[train], x[test], y[test]


_SUBJECTS = [
    "the king", "the queen", "my lord", "the good duke", "a young knight", "the old man",
    "sweet lady", "the fool", "his brother", "our captain", "the gentle maid", "thy father",
]
_VERBS = [
    "speaks of", "loves", "fears", "calls for", "remembers", "seeks", "honours", "forgets",
    "follows", "waits for", "curses", "praises",
]
_OBJECTS = [
    "the crown", "his sword", "the night", "her honour", "the sea", "a fair morning",
    "the war", "our house", "the gold", "his death", "the storm", "a merry song",
]
_TAILS = [
    "and weeps", "with great sorrow", "in the garden", "before the gate", "for the love of god",
    "upon my word", "till the morning comes", "as the bells ring", "and laughs", "no more",
]

# Rare emphatic outbursts, so the corpus (like real drama) contains runs of one word.
_OUTBURSTS = ["never never never", "no no no", "o o o", "ha ha ha", "alas"]


def make_text_corpus(size: int = 10_000, seed: int = 0) -> str:
    """Build roughly ``size`` characters of sentence-structured lowercase text.

    A fixed phrase grammar stands in for a real play script: the vocabulary is
    small and repetitive enough for a tiny recurrent model to learn words.
    """
    rng = make_rng(seed)
    lines = []
    total = 0
    while total < size:
        parts = []
        if rng.random() < 0.05:
            parts.append(_OUTBURSTS[rng.integers(len(_OUTBURSTS))] + ",")
        parts += [
            _SUBJECTS[rng.integers(len(_SUBJECTS))],
            _VERBS[rng.integers(len(_VERBS))],
            _OBJECTS[rng.integers(len(_OBJECTS))],
        ]
        if rng.random() < 0.6:
            parts.append(_TAILS[rng.integers(len(_TAILS))])
        line = " ".join(parts) + (". " if rng.random() < 0.7 else ", ")
        if rng.random() < 0.25:
            line += "\n"
        lines.append(line)
        total += len(line)
    return "".join(lines)[:size]

