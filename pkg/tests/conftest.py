import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nnfuzz.models.charrnn import CharRnnConfig, train_char_rnn
from nnfuzz.models.data import load_digits_split, make_text_corpus
from nnfuzz.models.mlp import train_mlp

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def digits():
    return load_digits_split()


@pytest.fixture(scope="session")
def small_mlp(digits):
    xtr, ytr, xte, yte = digits
    return train_mlp(xtr, ytr, [32], steps=300, lr=0.1, seed=0, x_val=xte, y_val=yte).model


@pytest.fixture(scope="session")
def small_corpus():
    return make_text_corpus(3000, seed=1)


@pytest.fixture(scope="session")
def small_char_model(small_corpus):
    cfg = CharRnnConfig(hidden_size=16, embed_size=8, seq_len=16, batch=8, steps=60, lr=0.5)
    return train_char_rnn(small_corpus, cfg).model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
