"""Numeric substrate: float32 arrays, seeded generators, binary16 rounding, distances."""

from __future__ import annotations

import numpy as np

FLOAT = np.float32


class ParameterError(ValueError):
    """Raised when an operation receives an argument outside its domain."""


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Return a PCG64 generator for ``seed``, optionally specialised by integer keys.

    Distinct key tuples give statistically independent streams, so the fuzzing
    loop can derive one generator per (iteration, batch index) without sharing state.
    """
    return np.random.default_rng([int(seed), *(int(k) for k in keys)])


def as_vector(values) -> np.ndarray:
    # Non-finite entries pass through untouched.
    return np.asarray(values, dtype=FLOAT)


def gaussian_noise(shape, sigma: float, rng: np.random.Generator) -> np.ndarray:
    if not sigma >= 0:
        raise ParameterError(f"sigma must be non-negative, got {sigma}")
    return (rng.standard_normal(shape) * sigma).astype(FLOAT)


def truncate_f16(v) -> np.ndarray:
    """Round every element to IEEE binary16 (nearest-even) and widen back to float32.

    Values beyond the largest finite half overflow to infinity and magnitudes below
    half the smallest subnormal flush to signed zero.
    """
    with np.errstate(over="ignore"):
        return np.asarray(v, dtype=FLOAT).astype(np.float16).astype(FLOAT)


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ParameterError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def linf_distance(a, b) -> float:
    a, b = _pair(a, b)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)))


def euclidean_distance(a, b) -> float:
    a, b = _pair(a, b)
    d = a - b
    return float(np.sqrt(np.sum(d * d)))


def dense(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Row-wise ``x @ w`` whose per-row result does not depend on the batch size.

    BLAS picks different kernels for different batch shapes, which changes the
    summation order; einsum's fixed loop keeps batched and one-at-a-time
    evaluation bit-identical.
    """
    return np.einsum("bi,ij->bj", x, w)
