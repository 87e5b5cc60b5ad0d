from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from nnfuzz.mutation import (TEXT_OPS, ImageInput, ImageMutator, MutationConfig, TextInput, apply_text_op,
                             choose_text_op, linf_ball_bounds, mutate_image, mutate_image_constrained, mutate_text)
from nnfuzz.numeric import ParameterError, linf_distance, make_rng

pixels = hnp.arrays(np.float32, st.integers(1, 40), elements=st.floats(0, 1, width=32))


def test_sigma_zero_is_identity():
    x = ImageInput(np.linspace(0, 1, 16))
    assert mutate_image(x, MutationConfig(sigma=0.0), make_rng(0)) == x


def test_pixels_at_upper_bound_stay():
    x = ImageInput(np.ones(500))
    out = mutate_image(x, MutationConfig(sigma=0.5), make_rng(3))
    assert out.pixels.max() == 1.0
    assert np.all(out.pixels[out.pixels < 1.0] >= 0)


def test_mutation_reproducible():
    x = ImageInput(np.full(32, 0.5))
    cfg = MutationConfig(sigma=0.3)
    assert mutate_image(x, cfg, make_rng(9, 1)) == mutate_image(x, cfg, make_rng(9, 1))
    assert mutate_image(x, cfg, make_rng(9, 1)) != mutate_image(x, cfg, make_rng(9, 2))


def test_label_and_range_carried():
    x = ImageInput(np.zeros(4), -1.0, 1.0, label=7)
    out = mutate_image(x, MutationConfig(sigma=2.0), make_rng(0))
    assert out.label == 7 and (out.lo, out.hi) == (-1.0, 1.0)
    assert out.pixels.min() >= -1 and out.pixels.max() <= 1


def test_projection_identity_inside_ball():
    anc = ImageInput(np.full(50, 0.5))
    cfg = MutationConfig(sigma=1e-3, radius=0.4)
    free = mutate_image(anc, MutationConfig(sigma=1e-3), make_rng(4))
    assert mutate_image_constrained(anc, anc, cfg, make_rng(4)) == free


def test_huge_noise_lands_on_ball_boundary():
    anc = ImageInput(np.full(64, 0.5))
    cfg = MutationConfig(sigma=100.0, radius=0.4)
    for trial in range(10_000):
        out = mutate_image_constrained(anc, anc, cfg, make_rng(trial))
        d = linf_distance(out.pixels, anc.pixels)
        assert d <= 0.4
        # the clamp sits on the float32 boundary nearest 0.4 from inside
        assert d >= 0.4 - 1e-7


def test_radius_zero_returns_ancestor():
    anc = ImageInput(np.random.default_rng(0).random(30))
    x = anc.with_pixels(np.clip(anc.pixels + 0.2, 0, 1))
    out = mutate_image_constrained(x, anc, MutationConfig(sigma=0.5, radius=0.0), make_rng(1))
    assert out == anc


def test_constrained_needs_radius():
    x = ImageInput(np.zeros(3))
    with pytest.raises(ParameterError):
        mutate_image_constrained(x, x, MutationConfig(sigma=0.1), make_rng(0))
    with pytest.raises(ParameterError):
        mutate_image_constrained(x, ImageInput(np.zeros(4)), MutationConfig(radius=0.1), make_rng(0))


@pytest.mark.parametrize("kwargs", [{"sigma": -1.0}, {"radius": -0.1}])
def test_config_validation(kwargs):
    with pytest.raises(ParameterError):
        MutationConfig(**kwargs)


@given(pixels, st.integers(0, 2**32 - 1), st.floats(0.0, 1.0), st.floats(0.0, 3.0), st.integers(1, 6))
def test_constrained_chain_stays_in_ball_and_range(px, seed, radius, sigma, generations):
    anc = ImageInput(px)
    cfg = MutationConfig(sigma=sigma, radius=radius)
    x = anc
    for g in range(generations):
        x = mutate_image_constrained(x, anc, cfg, make_rng(seed, g))
        assert linf_distance(x.pixels, anc.pixels) <= radius
        assert x.pixels.min() >= 0 and x.pixels.max() <= 1


@given(hnp.arrays(np.float32, 8, elements=st.floats(-10, 10, width=32)), st.floats(0, 5))
def test_ball_bounds_rounded_inward(center, radius):
    lo, hi = linf_ball_bounds(center, radius)
    c = center.astype(np.float64)
    assert np.all(c - lo.astype(np.float64) <= radius)
    assert np.all(hi.astype(np.float64) - c <= radius)
    assert np.all(lo <= center) and np.all(center <= hi)


def test_image_mutator_dispatch():
    anc = ImageInput(np.full(10, 0.5))
    assert ImageMutator(MutationConfig(sigma=5.0, radius=0.1))(anc, anc, make_rng(0)).pixels.max() <= 0.6 + 1e-7
    assert ImageMutator(MutationConfig(sigma=5.0))(anc, anc, make_rng(0)).pixels.max() == 1.0


def test_substitute_example():
    s = TextInput((0, 1), 3)  # "ab" over the vocabulary "abc"
    assert apply_text_op(s, "substitute", 0, 2).chars == (2, 1)  # "cb"


def test_insert_and_delete_examples():
    s = TextInput((0, 1), 3)
    assert apply_text_op(s, "insert", 2, 2).chars == (0, 1, 2)
    assert apply_text_op(s, "delete", 0).chars == (1,)
    with pytest.raises(ParameterError):
        apply_text_op(s, "swap", 0)


def test_length_one_never_empties():
    s = TextInput((4,), 5)
    ops = Counter()
    for i in range(3000):
        op, _, _ = choose_text_op(s, make_rng(i))
        ops[op] += 1
        assert len(mutate_text(s, make_rng(i))) >= 1
    assert ops["delete"] == 0 and ops["insert"] > 0 and ops["substitute"] > 0


def test_empty_text_rejected():
    with pytest.raises(ParameterError):
        mutate_text(TextInput((), 3), make_rng(0))


def test_text_index_validation():
    with pytest.raises(ParameterError):
        TextInput((0, 3), 3)


def test_operation_frequencies():
    s = TextInput(tuple(range(10)), 27)
    counts = Counter(choose_text_op(s, make_rng(2024, i))[0] for i in range(30_000))
    for op in TEXT_OPS:
        assert abs(counts[op] / 30_000 - 1 / 3) < 0.01


def test_positions_and_characters_uniform():
    s = TextInput(tuple(range(4)), 5)
    pos = Counter()
    chars = Counter()
    for i in range(20_000):
        op, p, c = choose_text_op(s, make_rng(7, i))
        if op == "substitute":
            pos[p] += 1
            chars[c] += 1
    n = sum(pos.values())
    assert all(abs(pos[k] / n - 1 / 4) < 0.02 for k in range(4))
    assert all(abs(chars[k] / n - 1 / 5) < 0.02 for k in range(5))


@given(st.lists(st.integers(0, 9), min_size=1, max_size=30), st.integers(0, 2**32 - 1))
def test_text_length_changes_by_at_most_one(chars, seed):
    s = TextInput(tuple(chars), 10)
    out = mutate_text(s, make_rng(seed))
    assert len(out) - len(s) in (-1, 0, 1)
    assert len(out) >= 1
    assert all(0 <= c < 10 for c in out.chars)
    assert out == mutate_text(s, make_rng(seed))
