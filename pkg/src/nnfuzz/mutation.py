"""Image and text mutators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numeric import FLOAT, ParameterError, gaussian_noise


@dataclass(frozen=True, eq=False)
class ImageInput:
    """Flat pixel vector confined to ``[lo, hi]``; ``label`` is carried from the seed."""

    pixels: np.ndarray
    lo: float = 0.0
    hi: float = 1.0
    label: int | None = None

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=FLOAT)
        p.setflags(write=False)
        object.__setattr__(self, "pixels", p)

    def with_pixels(self, pixels) -> "ImageInput":
        return ImageInput(pixels, self.lo, self.hi, self.label)

    def __eq__(self, other):
        return (isinstance(other, ImageInput) and np.array_equal(self.pixels, other.pixels)
                and (self.lo, self.hi, self.label) == (other.lo, other.hi, other.label))


@dataclass(frozen=True)
class TextInput:
    """Sequence of vocabulary indices."""

    chars: tuple[int, ...]
    vocab_size: int

    def __post_init__(self):
        object.__setattr__(self, "chars", tuple(int(c) for c in self.chars))
        if any(c < 0 or c >= self.vocab_size for c in self.chars):
            raise ParameterError("character index outside the vocabulary")

    def __len__(self) -> int:
        return len(self.chars)


@dataclass(frozen=True)
class MutationConfig:
    sigma: float = 0.1
    radius: float | None = None
    clip: tuple[float, float] | None = None  # defaults to the input's own range

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ParameterError(f"sigma must be non-negative, got {self.sigma}")
        if self.radius is not None and not self.radius >= 0:
            raise ParameterError(f"radius must be non-negative, got {self.radius}")


def _clip_range(x: ImageInput, cfg: MutationConfig) -> tuple[float, float]:
    return cfg.clip if cfg.clip is not None else (x.lo, x.hi)


def mutate_image(x: ImageInput, cfg: MutationConfig, rng) -> ImageInput:
    """Add white noise with standard deviation ``cfg.sigma``, then clip to the valid range."""
    lo, hi = _clip_range(x, cfg)
    noisy = x.pixels + gaussian_noise(x.pixels.shape, cfg.sigma, rng)
    return x.with_pixels(np.clip(noisy, FLOAT(lo), FLOAT(hi)))


def mutate_image_constrained(x: ImageInput, ancestor: ImageInput, cfg: MutationConfig, rng) -> ImageInput:
    """Noise, then projection onto the L-infinity ball of ``cfg.radius`` around ``ancestor``, then clipping.

    The ancestor lies inside the clip range, so clipping cannot push a pixel back
    out of the ball.
    """
    if cfg.radius is None:
        raise ParameterError("constrained mutation needs a radius")
    if ancestor.pixels.shape != x.pixels.shape:
        raise ParameterError("ancestor and input shapes differ")
    lo, hi = _clip_range(x, cfg)
    noisy = x.pixels + gaussian_noise(x.pixels.shape, cfg.sigma, rng)
    lower, upper = linf_ball_bounds(ancestor.pixels, cfg.radius)
    projected = np.clip(noisy, lower, upper)
    return x.with_pixels(np.clip(projected, FLOAT(lo), FLOAT(hi)))


def linf_ball_bounds(center: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """float32 per-pixel bounds of the L-infinity ball, rounded inward.

    Rounding toward the centre keeps every point between the bounds within
    ``radius`` of ``center`` when measured in double precision.
    """
    c = np.asarray(center, dtype=np.float64)
    lo64, hi64 = c - radius, c + radius
    lower = lo64.astype(FLOAT)
    upper = hi64.astype(FLOAT)
    lower = np.where(lower < lo64, np.nextafter(lower, FLOAT(np.inf)), lower)
    upper = np.where(upper > hi64, np.nextafter(upper, FLOAT(-np.inf)), upper)
    return lower, upper


TEXT_OPS = ("delete", "insert", "substitute")


def apply_text_op(s: TextInput, op: str, position: int, char: int | None = None) -> TextInput:
    chars = list(s.chars)
    if op == "delete":
        del chars[position]
    elif op == "insert":
        chars.insert(position, char)
    elif op == "substitute":
        chars[position] = char
    else:
        raise ParameterError(f"unknown text operation {op!r}")
    return TextInput(tuple(chars), s.vocab_size)


def choose_text_op(s: TextInput, rng) -> tuple[str, int, int | None]:
    if len(s) == 0:
        raise ParameterError("cannot mutate an empty string")
    op = TEXT_OPS[rng.integers(3)]
    if op == "delete" and len(s) == 1:
        # Never produce an empty string: re-roll between the other two.
        op = TEXT_OPS[1 + rng.integers(2)]
    if op == "insert":
        return op, int(rng.integers(len(s) + 1)), int(rng.integers(s.vocab_size))
    if op == "substitute":
        return op, int(rng.integers(len(s))), int(rng.integers(s.vocab_size))
    return op, int(rng.integers(len(s))), None


def mutate_text(s: TextInput, rng) -> TextInput:
    """Delete, insert or substitute one character, each with probability 1/3."""
    return apply_text_op(s, *choose_text_op(s, rng))


@dataclass(frozen=True)
class ImageMutator:
    """Mutator used by the fuzzing loop; constrained when the config carries a radius."""

    config: MutationConfig = field(default_factory=MutationConfig)

    def __call__(self, x: ImageInput, ancestor: ImageInput, rng) -> ImageInput:
        if self.config.radius is None:
            return mutate_image(x, self.config, rng)
        return mutate_image_constrained(x, ancestor, self.config, rng)


class TextMutator:
    def __call__(self, s: TextInput, ancestor: TextInput, rng) -> TextInput:
        return mutate_text(s, rng)
