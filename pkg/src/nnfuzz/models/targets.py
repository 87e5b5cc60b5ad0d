"""Models under test: batched evaluation returning coverage vectors and metadata."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numeric import FLOAT, ParameterError
from .charrnn import CharRnnModel, sample_batch
from .mlp import MlpModel, mlp_forward, unsafe_cross_entropy

COVERAGE_LAYERS = ("logits", "penultimate", "rnn_hidden")


@dataclass
class Metadata:
    """Per-input auxiliary outputs consumed by objectives.

    Only the fields the experiment produces are set; the rest stay ``None``.
    """

    logits_f32: np.ndarray | None = None
    logits_f16: np.ndarray | None = None
    loss: float | None = None
    sampled_text: str | None = None
    monitored: tuple = field(default_factory=tuple)

    def to_json(self) -> dict:
        out = {}
        for name in ("logits_f32", "logits_f16"):
            v = getattr(self, name)
            if v is not None:
                out[name] = [_num(x) for x in np.asarray(v).tolist()]
        if self.loss is not None:
            out["loss"] = _num(float(self.loss))
        if self.sampled_text is not None:
            out["sampled_text"] = self.sampled_text
        return out


def _num(x: float):
    # JSON has no NaN/inf literals; spell them as strings.
    if np.isfinite(x):
        return x
    return "nan" if np.isnan(x) else ("inf" if x > 0 else "-inf")


class ModelUnderTest:
    """``evaluate_batch(inputs) -> (coverage, metadata)``.

    ``coverage`` is a float32 array with one row per input; ``metadata`` is a
    list of :class:`Metadata` in the same order. Implementations are pure.
    """

    def evaluate_batch(self, inputs):
        raise NotImplementedError

    def validate(self, payload) -> None:
        """Raise :class:`ParameterError` if ``payload`` is not a valid input."""


def _stack_pixels(inputs, model: MlpModel) -> np.ndarray:
    x = np.stack([np.asarray(p.pixels, dtype=FLOAT).ravel() for p in inputs])
    if x.shape[1] != model.input_dim:
        raise ParameterError(f"inputs have {x.shape[1]} pixels, model expects {model.input_dim}")
    return x


def _coverage(layer: str, activations, logits) -> np.ndarray:
    if layer == "logits":
        return logits
    if layer == "penultimate":
        return activations[-1] if activations else logits
    raise ParameterError(f"coverage layer {layer!r} is not available for an MLP")


class _ImageTarget(ModelUnderTest):
    def __init__(self, model: MlpModel, coverage_layer: str = "logits"):
        if coverage_layer not in COVERAGE_LAYERS:
            raise ParameterError(f"unknown coverage layer {coverage_layer!r}")
        self.model = model
        self.coverage_layer = coverage_layer

    def validate(self, payload) -> None:
        lo, hi = self.model.input_range
        px = np.asarray(payload.pixels)
        if px.size != self.model.input_dim:
            raise ParameterError(f"seed has {px.size} pixels, model expects {self.model.input_dim}")
        if not (np.all(px >= lo) and np.all(px <= hi)):
            raise ParameterError(f"seed pixels outside [{lo}, {hi}]")


class NanTarget(_ImageTarget):
    """MLP with the naive cross entropy exposed as metadata.

    The loss uses the label each image carries (inherited from its seed) and
    falls back to the predicted class for unlabelled images.
    """

    def evaluate_batch(self, inputs):
        x = _stack_pixels(inputs, self.model)
        acts, logits = mlp_forward(self.model, x)
        labels = np.array([p.label if p.label is not None else -1 for p in inputs])
        labels = np.where(labels < 0, np.argmax(logits, axis=1), labels)
        loss = unsafe_cross_entropy(logits, labels)
        meta = [Metadata(logits_f32=logits[i], loss=float(loss[i])) for i in range(len(inputs))]
        return _coverage(self.coverage_layer, acts, logits), meta


class QuantTarget(_ImageTarget):
    """Paired float32 / binary16 evaluation; coverage comes from the float32 path only.

    The binary16 twin rounds every weight once, and with ``truncate_activations``
    (the default) also rounds the input and each layer output.
    """

    def __init__(self, model: MlpModel, coverage_layer: str = "logits", truncate_activations: bool = True):
        super().__init__(model, coverage_layer)
        self.model16 = model.truncated()
        self.truncate_activations = truncate_activations

    def evaluate_batch(self, inputs):
        x = _stack_pixels(inputs, self.model)
        acts, logits = mlp_forward(self.model, x)
        _, logits16 = mlp_forward(self.model16, x, truncate_activations=self.truncate_activations)
        meta = [Metadata(logits_f32=logits[i], logits_f16=logits16[i]) for i in range(len(inputs))]
        return _coverage(self.coverage_layer, acts, logits), meta


def evaluate_f32_f16_pair(model: MlpModel, x, truncate_activations: bool = True) -> Metadata:
    """Metadata with both logit vectors for a single input vector."""
    _, l32 = mlp_forward(model, x)
    _, l16 = mlp_forward(model.truncated(), x, truncate_activations=truncate_activations)
    return Metadata(logits_f32=l32, logits_f16=l16)


class TextTarget(ModelUnderTest):
    """Char LM primed with the input; coverage is the hidden state after the prime."""

    def __init__(self, model: CharRnnModel, sample_length: int = 40, sample_seed: int = 0):
        self.model = model
        self.sample_length = sample_length
        self.sample_seed = sample_seed

    def validate(self, payload) -> None:
        if len(payload.chars) == 0:
            raise ParameterError("empty prime")
        if payload.vocab_size != self.model.vocab_size:
            raise ParameterError("prime vocabulary size does not match the model")

    def evaluate_batch(self, inputs):
        texts, hidden = sample_batch(self.model, [p.chars for p in inputs], self.sample_length, self.sample_seed)
        return hidden, [Metadata(sampled_text=t) for t in texts]
