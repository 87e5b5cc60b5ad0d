"""Objective functions evaluated on per-input metadata."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numeric import ParameterError

_WORD = re.compile(r"[^\W\d_]+")


def tokenize(text: str) -> list[str]:
    """Case-folded maximal runs of alphabetic characters."""
    return [w.casefold() for w in _WORD.findall(text)]


def _first_argmax(v) -> int:
    # np.argmax returns the first maximal index; NaN counts as maximal.
    return int(np.argmax(np.asarray(v)))


def objective_nonfinite(meta) -> bool:
    """True when the loss, logits or any monitored activation is NaN or infinite."""
    values = [meta.loss, meta.logits_f32, meta.logits_f16, *meta.monitored]
    for v in values:
        if v is not None and not np.all(np.isfinite(v)):
            return True
    return False


def objective_quant_disagreement(meta) -> bool:
    if meta.logits_f32 is None or meta.logits_f16 is None:
        raise ParameterError("quantization objective needs both logit vectors")
    return _first_argmax(meta.logits_f32) != _first_argmax(meta.logits_f16)


@dataclass(frozen=True)
class TextPolicy:
    blacklist: frozenset[str] = frozenset()
    max_repeats: int = 2

    def __post_init__(self):
        if self.max_repeats < 1:
            raise ParameterError("max_repeats must be at least 1")
        object.__setattr__(self, "blacklist", frozenset(w.casefold() for w in self.blacklist))

    @classmethod
    def from_file(cls, path, max_repeats: int = 2) -> "TextPolicy":
        words = [w.strip() for w in Path(path).read_text(encoding="utf-8").splitlines()]
        return cls(frozenset(w for w in words if w), max_repeats)


def blacklist_hits(text: str, policy: TextPolicy) -> list[str]:
    """Blacklisted words in ``text``, in order of first appearance."""
    return list(dict.fromkeys(t for t in tokenize(text) if t in policy.blacklist))


def repeated_words(text: str, policy: TextPolicy) -> list[str]:
    """Words occurring more than ``max_repeats`` times consecutively."""
    found = []
    run_word, run = None, 0
    for tok in tokenize(text):
        run = run + 1 if tok == run_word else 1
        run_word = tok
        if run == policy.max_repeats + 1:
            found.append(tok)
    return list(dict.fromkeys(found))


def objective_text(meta, policy: TextPolicy) -> bool:
    if meta.sampled_text is None:
        raise ParameterError("text objective needs sampled_text")
    return bool(blacklist_hits(meta.sampled_text, policy) or repeated_words(meta.sampled_text, policy))


class Objective:
    """A named predicate over one metadata entry."""

    name = "objective"

    def __call__(self, meta) -> bool:
        raise NotImplementedError

    def details(self, meta) -> dict:
        return {}


class NonFinite(Objective):
    name = "nonfinite"

    def __call__(self, meta) -> bool:
        return objective_nonfinite(meta)


class QuantDisagreement(Objective):
    name = "quant_disagreement"

    def __call__(self, meta) -> bool:
        return objective_quant_disagreement(meta)

    def details(self, meta) -> dict:
        return {"argmax_f32": _first_argmax(meta.logits_f32), "argmax_f16": _first_argmax(meta.logits_f16)}


class TextObjective(Objective):
    name = "text"

    def __init__(self, policy: TextPolicy):
        self.policy = policy

    def __call__(self, meta) -> bool:
        return objective_text(meta, self.policy)

    def details(self, meta) -> dict:
        return {
            "blacklisted": blacklist_hits(meta.sampled_text, self.policy),
            "repeated": repeated_words(meta.sampled_text, self.policy),
        }


class Constant(Objective):
    """Always (or never) satisfied; handy for wiring tests."""

    def __init__(self, value: bool):
        self.value = bool(value)
        self.name = f"constant_{str(self.value).lower()}"

    def __call__(self, meta) -> bool:
        return self.value
