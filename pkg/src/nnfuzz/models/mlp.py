"""Fully connected classifier, its losses, a plain-SGD trainer, and the binary16 twin."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..numeric import FLOAT, ParameterError, dense, make_rng, truncate_f16

log = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "identity")


class TrainingError(RuntimeError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=FLOAT)
        b = np.asarray(self.bias, dtype=FLOAT)
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise ParameterError(f"bad layer shapes {w.shape}, {b.shape}")
        if self.activation not in ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class MlpModel:
    layers: tuple[Layer, ...]
    input_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ParameterError("an MLP needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.weight.shape[1] != nxt.weight.shape[0]:
                raise ParameterError("layer shapes do not chain")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def num_classes(self) -> int:
        return self.layers[-1].weight.shape[1]

    def truncated(self) -> "MlpModel":
        """The same network with every weight and bias rounded to binary16."""
        return MlpModel(
            tuple(Layer(truncate_f16(l.weight), truncate_f16(l.bias), l.activation) for l in self.layers),
            self.input_range,
        )


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    return np.maximum(z, FLOAT(0)) if activation == "relu" else z


def mlp_forward(model: MlpModel, x, truncate_activations: bool = False):
    """Run ``x`` (one vector or a batch of rows) through the network.

    Returns ``(activations, logits)`` where ``activations`` holds every hidden
    layer's output. With ``truncate_activations`` the input and each layer's
    output are rounded to binary16 while arithmetic stays in float32.
    """
    h = np.asarray(x, dtype=FLOAT)
    single = h.ndim == 1
    if single:
        h = h[None, :]
    if h.ndim != 2 or h.shape[1] != model.input_dim:
        raise ParameterError(f"input shape {np.shape(x)} does not match input dim {model.input_dim}")
    if truncate_activations:
        h = truncate_f16(h)
    outputs = []
    with np.errstate(over="ignore", invalid="ignore"):
        for layer in model.layers:
            h = _activate(dense(h, layer.weight) + layer.bias, layer.activation)
            if truncate_activations:
                h = truncate_f16(h)
            outputs.append(h)
    logits = outputs.pop()
    if single:
        return [a[0] for a in outputs], logits[0]
    return outputs, logits


def unsafe_cross_entropy(logits, label):
    """Cross entropy straight from the softmax definition, with no overflow guard.

    Works in the precision of ``logits`` (float32 model outputs overflow ``exp``
    above ~88.7). Accepts a single logit vector with an int label or a batch
    with an array of labels. NaN and infinities are returned as computed.
    """
    logits = np.asarray(logits)
    if not np.issubdtype(logits.dtype, np.floating):
        logits = logits.astype(np.float64)
    labels = np.asarray(label)
    if np.any(labels < 0) or np.any(labels >= logits.shape[-1]):
        raise ParameterError("label out of range")
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        e = np.exp(logits)
        picked = np.take_along_axis(e, labels[..., None], axis=-1)[..., 0]
        out = -np.log(picked / e.sum(axis=-1))
    return out if out.ndim else out[()]


def safe_cross_entropy(logits, label):
    """Log-sum-exp cross entropy in float64; finite for every finite input."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(label)
    if np.any(labels < 0) or np.any(labels >= logits.shape[-1]):
        raise ParameterError("label out of range")
    m = logits.max(axis=-1, keepdims=True)
    lse = m[..., 0] + np.log(np.exp(logits - m).sum(axis=-1))
    out = lse - np.take_along_axis(logits, labels[..., None], axis=-1)[..., 0]
    return out if out.ndim else out[()]


def predict(model: MlpModel, x) -> np.ndarray:
    return np.argmax(mlp_forward(model, x)[1], axis=-1)


def accuracy(model: MlpModel, x, y) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(predict(model, x) == np.asarray(y)))


def init_mlp(sizes: list[int], seed: int, input_range=(0.0, 1.0), output_bias: float = 0.0) -> MlpModel:
    """He-normal weights; ReLU everywhere except the logit layer.

    Hidden biases start at zero and logit biases at ``output_bias``. Softmax
    training never moves the class-mean of the logit biases, so this offset
    survives training untouched and only matters to code that exponentiates
    raw logits.
    """
    rng = make_rng(seed, 0)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        w = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        last = i == len(sizes) - 2
        b = np.full(fan_out, output_bias if last else 0.0, FLOAT)
        layers.append(Layer(w.astype(FLOAT), b, "identity" if last else "relu"))
    return MlpModel(tuple(layers), tuple(input_range))


@dataclass
class TrainResult:
    model: MlpModel
    train_accuracy: float
    val_accuracy: float
    losses: list[float] = field(default_factory=list)


def train_mlp(
    x: np.ndarray,
    y: np.ndarray,
    hidden: list[int],
    steps: int,
    batch: int = 100,
    lr: float = 0.1,
    seed: int = 0,
    loss: str = "safe",
    num_classes: int | None = None,
    x_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
    input_range=(0.0, 1.0),
    output_bias: float = 0.0,
) -> TrainResult:
    """Minibatch SGD with a fixed learning rate.

    ``loss="unsafe"`` backpropagates through the naive softmax, so overflowing
    logits surface as a :class:`TrainingError` naming the step.
    """
    x = np.asarray(x, dtype=FLOAT)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y) or len(x) == 0:
        raise ParameterError("dataset must be a non-empty (n, d) array with n labels")
    if loss not in ("safe", "unsafe"):
        raise ParameterError(f"unknown loss {loss!r}")
    k = int(num_classes if num_classes is not None else y.max() + 1)
    model = init_mlp([x.shape[1], *hidden, k], seed, input_range, output_bias)
    ws = [np.array(l.weight) for l in model.layers]
    bs = [np.array(l.bias) for l in model.layers]
    acts = [l.activation for l in model.layers]
    rng = make_rng(seed, 1)
    losses = []
    for step in range(steps):
        idx = rng.integers(0, len(x), size=min(batch, len(x)))
        xb, yb = x[idx], y[idx]
        hs = [xb]
        with np.errstate(all="ignore"):
            for w, b, a in zip(ws, bs, acts):
                hs.append(_activate(hs[-1] @ w + b, a))
            logits = hs[-1]
            if loss == "safe":
                z = logits - logits.max(axis=1, keepdims=True)
                p = np.exp(z)
            else:
                p = np.exp(logits)
            p = p / p.sum(axis=1, keepdims=True)
            batch_loss = float(np.mean(-np.log(p[np.arange(len(yb)), yb] + 1e-30)))
            g = p
            g[np.arange(len(yb)), yb] -= 1.0
            g /= len(yb)
            for i in range(len(ws) - 1, -1, -1):
                gw = hs[i].T @ g
                gb = g.sum(axis=0)
                if i > 0:
                    g = (g @ ws[i].T) * (hs[i] > 0)
                ws[i] -= FLOAT(lr) * gw.astype(FLOAT)
                bs[i] -= FLOAT(lr) * gb.astype(FLOAT)
        if not (np.isfinite(batch_loss) and all(np.isfinite(w).all() for w in ws)):
            raise TrainingError(step, "non-finite loss or weights")
        losses.append(batch_loss)
    if steps:
        model = MlpModel(tuple(Layer(w, b, a) for w, b, a in zip(ws, bs, acts)), tuple(input_range))
    train_acc = accuracy(model, x, y)
    val_acc = accuracy(model, x_val, y_val) if x_val is not None else float("nan")
    log.info("trained MLP for %d steps: train acc %.4f, val acc %.4f", steps, train_acc, val_acc)
    return TrainResult(model, train_acc, val_acc, losses)
