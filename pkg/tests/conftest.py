import numpy as np
import pytest

from triagekit.corpus import CorpusConfig, generate_corpus
from triagekit.encoder import (
    HEAD_LABEL_ATTENTION,
    HEAD_POOLED,
    ModelConfig,
    build_model,
)
from triagekit.textpipe import train_tokenizer


def tiny_model_config(vocab_size: int, head_kind: str = HEAD_POOLED, **overrides):
    base = dict(
        vocab_size=vocab_size,
        hidden_dim=32,
        num_layers=2,
        num_heads=2,
        ff_dim=64,
        max_positions=512,
        dropout=0.0,
        head_kind=head_kind,
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture(scope="session")
def small_corpus():
    return generate_corpus(CorpusConfig(n_patients=120, seed=11))


@pytest.fixture(scope="session")
def small_tokenizer(small_corpus):
    return train_tokenizer(small_corpus, vocab_size=4000)


@pytest.fixture(scope="session")
def pooled_model(small_tokenizer):
    return build_model(tiny_model_config(small_tokenizer.vocab_size), seed=5)


@pytest.fixture(scope="session")
def attention_model(small_tokenizer):
    return build_model(
        tiny_model_config(small_tokenizer.vocab_size, head_kind=HEAD_LABEL_ATTENTION),
        seed=5,
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
