"""Desk-scale experiment recipes: how each model under test is trained and fuzzed.

Each experiment bundles a training recipe, seed selection and default fuzzing
parameters. The scripts, the CLI and the acceptance tests all read from here.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .engine import FuzzConfig
from .models.charrnn import CharRnnConfig, CharRnnModel, train_char_rnn
from .models.data import load_digits_split, make_text_corpus
from .models.mlp import TrainResult, train_mlp
from .models.targets import NanTarget, QuantTarget, TextTarget
from .mutation import ImageInput, ImageMutator, MutationConfig, TextInput, TextMutator
from .numeric import ParameterError, make_rng
from .objectives import NonFinite, QuantDisagreement, TextObjective, TextPolicy

EXPERIMENTS = ("nan", "quant", "text")


@dataclass(frozen=True)
class MlpRecipe:
    hidden: tuple[int, ...] = (128, 64)
    steps: int = 10_000
    batch: int = 100
    lr: float = 0.1
    loss: str = "safe"
    output_bias: float = 0.0
    seed: int = 0


# Trained through the naive softmax. The logit offset keeps every held-out
# logit far below zero, which leaves exp(l_y) one strong push from underflow.
NAN_RECIPE = MlpRecipe(steps=35_000, lr=0.3, loss="unsafe", output_bias=-80.0)
QUANT_RECIPE = MlpRecipe(steps=10_000, lr=0.1, loss="safe")

TEXT_CORPUS_SIZE = 20_000
TEXT_RECIPE = CharRnnConfig(steps=3000, lr=1.0)

DEFAULT_BLACKLIST = ("sorrow", "garden", "gate", "bells", "weeps", "god", "gold", "death", "storm", "crown")


def train_digits_model(recipe: MlpRecipe, data=None) -> TrainResult:
    xtr, ytr, xte, yte = data if data is not None else load_digits_split()
    return train_mlp(xtr, ytr, list(recipe.hidden), recipe.steps, recipe.batch, recipe.lr, recipe.seed,
                     recipe.loss, 10, xte, yte, (0.0, 1.0), recipe.output_bias)


def train_text_model(config: CharRnnConfig = TEXT_RECIPE, corpus: str | None = None) -> CharRnnModel:
    corpus = corpus if corpus is not None else make_text_corpus(TEXT_CORPUS_SIZE)
    return train_char_rnn(corpus, config).model


def image_seeds(x, y, n: int, seed: int, lo: float = 0.0, hi: float = 1.0) -> list[ImageInput]:
    """``n`` distinct images drawn without replacement, labels attached."""
    if n > len(x):
        raise ParameterError(f"asked for {n} seeds from {len(x)} images")
    idx = make_rng(seed).choice(len(x), n, replace=False)
    return [ImageInput(x[i], lo, hi, int(y[i])) for i in idx]


def text_seeds(model: CharRnnModel, n: int = 5, corpus: str | None = None) -> list[TextInput]:
    """The first ``n`` sentences of the training corpus, as primes."""
    corpus = corpus if corpus is not None else make_text_corpus(TEXT_CORPUS_SIZE)
    sentences = [s.strip() + ". " for s in corpus.replace("\n", " ").split(".") if s.strip()]
    return [TextInput(model.encode(s), model.vocab_size) for s in sentences[:n]]


@dataclass(frozen=True)
class ExperimentDefaults:
    """Fuzzing parameters validated at desk scale for one experiment."""

    iterations: int
    batch_size: int
    sigma: float = 0.0
    radius: float | None = None
    threshold: float | None = None
    coverage_layer: str = "logits"
    stop_on_first: bool = False
    num_seeds: int = 10

    def fuzz_config(self, **overrides) -> FuzzConfig:
        base = dict(iterations=self.iterations, batch_size=self.batch_size,
                    mutation=MutationConfig(sigma=self.sigma, radius=self.radius),
                    threshold=self.threshold, stop_on_first=self.stop_on_first)
        base.update(overrides)
        return FuzzConfig(**base)


DEFAULTS = {
    "nan": ExperimentDefaults(iterations=5000, batch_size=10, sigma=0.2, threshold=15.0,
                              stop_on_first=True, num_seeds=20),
    "quant": ExperimentDefaults(iterations=1000, batch_size=10, sigma=0.1, radius=0.4, threshold=2.0,
                                stop_on_first=True, num_seeds=20),
    "text": ExperimentDefaults(iterations=1000, batch_size=100, threshold=3.0,
                               coverage_layer="rnn_hidden", num_seeds=5),
}


def make_target(experiment: str, model, coverage_layer: str | None = None, sample_length: int = 40):
    layer = coverage_layer or DEFAULTS[experiment].coverage_layer
    if experiment == "nan":
        return NanTarget(model, layer)
    if experiment == "quant":
        return QuantTarget(model, layer)
    if experiment == "text":
        if layer != "rnn_hidden":
            raise ParameterError("the text model only exposes the rnn_hidden coverage layer")
        return TextTarget(model, sample_length)
    raise ParameterError(f"unknown experiment {experiment!r}")


def make_objective(experiment: str, blacklist=None, max_repeats: int = 2):
    if experiment == "nan":
        return NonFinite()
    if experiment == "quant":
        return QuantDisagreement()
    if experiment == "text":
        words = DEFAULT_BLACKLIST if blacklist is None else blacklist
        return TextObjective(TextPolicy(frozenset(words), max_repeats))
    raise ParameterError(f"unknown experiment {experiment!r}")


def make_mutator(experiment: str, config: FuzzConfig):
    return TextMutator() if experiment == "text" else ImageMutator(config.mutation)


def with_seed(config: FuzzConfig, seed: int) -> FuzzConfig:
    return replace(config, seed=seed)
