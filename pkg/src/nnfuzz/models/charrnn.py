"""Character-level LSTM language model with seeded sampling and a BPTT trainer."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..numeric import FLOAT, ParameterError, dense, make_rng
from .mlp import TrainingError

log = logging.getLogger(__name__)


class InputError(ValueError):
    """A prime contains characters the model has never seen."""


@dataclass(frozen=True)
class LstmLayer:
    weight: np.ndarray  # (input + hidden, 4 * hidden), gate order i, f, g, o
    bias: np.ndarray


@dataclass(frozen=True)
class CharRnnModel:
    vocabulary: str
    embedding: np.ndarray  # (vocab, embed)
    layers: tuple[LstmLayer, ...]
    out_weight: np.ndarray  # (hidden, vocab)
    out_bias: np.ndarray

    def __post_init__(self):
        if len(set(self.vocabulary)) != len(self.vocabulary) or not self.vocabulary:
            raise ParameterError("vocabulary must be a non-empty string of distinct characters")
        object.__setattr__(self, "layers", tuple(self.layers))
        for name in ("embedding", "out_weight", "out_bias"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=FLOAT))
        if self.embedding.shape[0] != len(self.vocabulary) or self.out_weight.shape[1] != len(self.vocabulary):
            raise ParameterError("embedding/output shapes do not match the vocabulary")

    @property
    def hidden_size(self) -> int:
        return self.out_weight.shape[0]

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)

    def encode(self, text: str) -> tuple[int, ...]:
        lookup = {c: i for i, c in enumerate(self.vocabulary)}
        try:
            return tuple(lookup[c] for c in text)
        except KeyError as e:
            raise InputError(f"character {e.args[0]!r} is not in the vocabulary") from None

    def decode(self, indices) -> str:
        return "".join(self.vocabulary[int(i)] for i in indices)


def _sigmoid(z):
    with np.errstate(over="ignore"):
        return FLOAT(1) / (FLOAT(1) + np.exp(-z))


def _step(model: CharRnnModel, x: np.ndarray, hs: list, cs: list):
    """Advance every layer one character; returns new (hs, cs) lists."""
    H = model.hidden_size
    new_h, new_c = [], []
    inp = x
    for layer, h, c in zip(model.layers, hs, cs):
        z = dense(np.concatenate([inp, h], axis=1), layer.weight) + layer.bias
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        new_h.append(h)
        new_c.append(c)
        inp = h
    return new_h, new_c


def _logits(model: CharRnnModel, h: np.ndarray) -> np.ndarray:
    return dense(h, model.out_weight) + model.out_bias


def prime_batch(model: CharRnnModel, primes):
    """Feed each prime (a sequence of indices) through the network.

    Primes may differ in length; finished rows keep their state. Returns the
    per-layer ``(hs, cs)`` lists after each prime's last character.
    """
    n = len(primes)
    if any(len(p) == 0 for p in primes):
        raise ParameterError("primes must be non-empty")
    V = model.vocab_size
    lengths = np.array([len(p) for p in primes])
    grid = np.zeros((n, lengths.max()), dtype=np.int64)
    for r, p in enumerate(primes):
        idx = np.asarray(p, dtype=np.int64)
        if np.any(idx < 0) or np.any(idx >= V):
            raise InputError("prime index outside the vocabulary")
        grid[r, : len(idx)] = idx
    H = model.hidden_size
    hs = [np.zeros((n, H), FLOAT) for _ in model.layers]
    cs = [np.zeros((n, H), FLOAT) for _ in model.layers]
    for t in range(lengths.max()):
        active = (t < lengths)[:, None]
        nh, nc = _step(model, model.embedding[grid[:, t]], hs, cs)
        hs = [np.where(active, a, b) for a, b in zip(nh, hs)]
        cs = [np.where(active, a, b) for a, b in zip(nc, cs)]
    return hs, cs


def hidden_vector(hs) -> np.ndarray:
    """Coverage vector: hidden outputs of every layer, concatenated."""
    return np.concatenate(hs, axis=1)


def sample_batch(model: CharRnnModel, primes, length: int, sample_seed: int):
    """Sample ``length`` characters after each prime at temperature 1.

    The sampler draws from a generator re-seeded with ``sample_seed`` for every
    call, and every row consumes the same uniform stream, so a prime's sample
    does not depend on what else is in the batch.
    Returns ``(texts, hidden)`` with ``hidden`` the state right after the prime.
    """
    hs, cs = prime_batch(model, primes)
    hidden = hidden_vector(hs)
    n = len(primes)
    u = make_rng(sample_seed).random(length)
    out = np.zeros((n, length), dtype=np.int64)
    for t in range(length):
        z = _logits(model, hs[-1]).astype(np.float64)
        with np.errstate(over="ignore", invalid="ignore"):
            p = np.exp(z - z.max(axis=1, keepdims=True))
        cdf = np.cumsum(p, axis=1)
        idx = np.minimum((cdf < u[t] * cdf[:, -1:]).sum(axis=1), model.vocab_size - 1)
        out[:, t] = idx
        if t + 1 < length:
            hs, cs = _step(model, model.embedding[idx], hs, cs)
    return [model.decode(row) for row in out], hidden


def char_rnn_sample(model: CharRnnModel, prime, length: int, sample_seed: int):
    """Single-prime form of :func:`sample_batch`; ``prime`` may be a string or indices."""
    if isinstance(prime, str):
        if not prime:
            raise ParameterError("prime must be non-empty")
        prime = model.encode(prime)
    texts, hidden = sample_batch(model, [prime], length, sample_seed)
    return texts[0], hidden[0]


@dataclass(frozen=True)
class CharRnnConfig:
    hidden_size: int = 64
    num_layers: int = 1
    embed_size: int = 16
    seq_len: int = 32
    batch: int = 16
    steps: int = 2000
    lr: float = 0.5
    grad_clip: float = 5.0
    seed: int = 0


@dataclass
class CharRnnTrainResult:
    model: CharRnnModel
    losses: list[float] = field(default_factory=list)


def init_char_rnn(vocabulary: str, config: CharRnnConfig) -> CharRnnModel:
    rng = make_rng(config.seed, 0)
    V, E, H = len(vocabulary), config.embed_size, config.hidden_size
    layers = []
    fan_in = E
    for _ in range(config.num_layers):
        w = rng.uniform(-1, 1, (fan_in + H, 4 * H)) / np.sqrt(fan_in + H)
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0  # forget-gate bias
        layers.append(LstmLayer(w.astype(FLOAT), b.astype(FLOAT)))
        fan_in = H
    return CharRnnModel(
        vocabulary,
        (rng.standard_normal((V, E)) * 0.1).astype(FLOAT),
        tuple(layers),
        (rng.uniform(-1, 1, (H, V)) / np.sqrt(H)).astype(FLOAT),
        np.zeros(V, FLOAT),
    )


def _params(model: CharRnnModel) -> list[np.ndarray]:
    ps = [np.array(model.embedding)]
    for l in model.layers:
        ps += [np.array(l.weight), np.array(l.bias)]
    return ps + [np.array(model.out_weight), np.array(model.out_bias)]


def _from_params(vocabulary: str, ps: list[np.ndarray]) -> CharRnnModel:
    nl = (len(ps) - 3) // 2
    layers = tuple(LstmLayer(ps[1 + 2 * k], ps[2 + 2 * k]) for k in range(nl))
    return CharRnnModel(vocabulary, ps[0], layers, ps[-2], ps[-1])


def _loss_and_grads(ps: list[np.ndarray], x: np.ndarray, y: np.ndarray, H: int):
    """Mean next-character cross entropy over a (batch, time) window and its gradients."""
    emb, out_w, out_b = ps[0], ps[-2], ps[-1]
    lw = [ps[1 + 2 * k] for k in range((len(ps) - 3) // 2)]
    lb = [ps[2 + 2 * k] for k in range((len(ps) - 3) // 2)]
    B, T = x.shape
    L = len(lw)
    h = [[np.zeros((B, H), FLOAT)] for _ in range(L)]
    c = [[np.zeros((B, H), FLOAT)] for _ in range(L)]
    cache = [[] for _ in range(L)]
    top = []
    for t in range(T):
        inp = emb[x[:, t]]
        for k in range(L):
            xh = np.concatenate([inp, h[k][-1]], axis=1)
            z = xh @ lw[k] + lb[k]
            i, f, o = (_sigmoid(z[:, s * H:(s + 1) * H]) for s in (0, 1, 3))
            g = np.tanh(z[:, 2 * H:3 * H])
            cn = f * c[k][-1] + i * g
            tc = np.tanh(cn)
            hn = o * tc
            cache[k].append((xh, i, f, g, o, tc))
            h[k].append(hn)
            c[k].append(cn)
            inp = hn
        top.append(inp)
    hs = np.stack(top, axis=1)  # (B, T, H)
    logits = hs @ out_w + out_b
    z = logits - logits.max(axis=2, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=2, keepdims=True)
    bi, ti = np.meshgrid(np.arange(B), np.arange(T), indexing="ij")
    loss = float(-np.mean(np.log(p[bi, ti, y] + 1e-12)))
    dlog = p
    dlog[bi, ti, y] -= 1.0
    dlog /= B * T
    grads = [np.zeros_like(q) for q in ps]
    grads[-2] = hs.reshape(-1, H).T @ dlog.reshape(-1, dlog.shape[2])
    grads[-1] = dlog.sum(axis=(0, 1))
    dtop = dlog @ out_w.T  # (B, T, H)
    dh_next = [np.zeros((B, H), FLOAT) for _ in range(L)]
    dc_next = [np.zeros((B, H), FLOAT) for _ in range(L)]
    for t in range(T - 1, -1, -1):
        dh_in = dtop[:, t]
        for k in range(L - 1, -1, -1):
            xh, i, f, g, o, tc = cache[k][t]
            dh = dh_in + dh_next[k]
            do = dh * tc
            dc = dc_next[k] + dh * o * (1 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * c[k][t]
            dc_next[k] = dc * f
            dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1)
            grads[1 + 2 * k] += xh.T @ dz
            grads[2 + 2 * k] += dz.sum(axis=0)
            dxh = dz @ lw[k].T
            in_size = xh.shape[1] - H
            dh_next[k] = dxh[:, in_size:]
            dh_in = dxh[:, :in_size]
        np.add.at(grads[0], x[:, t], dh_in)
    return loss, grads


def train_char_rnn(corpus_text: str, config: CharRnnConfig = CharRnnConfig(),
                   vocabulary: str | None = None) -> CharRnnTrainResult:
    """Truncated-BPTT SGD on random windows of ``corpus_text``.

    The vocabulary is the sorted set of corpus characters unless given. The
    global gradient norm is clipped to ``config.grad_clip``.
    """
    vocabulary = vocabulary or "".join(sorted(set(corpus_text)))
    model = init_char_rnn(vocabulary, config)
    data = np.array(model.encode(corpus_text), dtype=np.int64)
    if config.steps and len(data) < config.seq_len + 2:
        raise ParameterError("corpus shorter than one training window")
    ps = _params(model)
    rng = make_rng(config.seed, 1)
    losses = []
    for step in range(config.steps):
        starts = rng.integers(0, len(data) - config.seq_len - 1, size=config.batch)
        win = np.stack([data[s:s + config.seq_len + 1] for s in starts])
        with np.errstate(all="ignore"):
            loss, grads = _loss_and_grads(ps, win[:, :-1], win[:, 1:], config.hidden_size)
            norm = np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads))
            scale = min(1.0, config.grad_clip / norm) if norm > 0 else 1.0
            for q, g in zip(ps, grads):
                q -= FLOAT(config.lr * scale) * g.astype(FLOAT)
        if not (np.isfinite(loss) and np.isfinite(norm)):
            raise TrainingError(step, "non-finite loss or gradient")
        losses.append(loss)
        if step % 500 == 0:
            log.debug("char-rnn step %d loss %.4f", step, loss)
    return CharRnnTrainResult(_from_params(vocabulary, ps) if config.steps else model, losses)
