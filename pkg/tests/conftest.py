import numpy as np
import pytest
import torch

from ffn.data import generate_synthetic
from ffn.embeddings import EmbeddingConfig, init_embedding_matrix
from ffn.text import TextPipeline

TINY_WORDPIECE = [
    "[PAD]", "[unused0]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "!", ",", ".",
    "hello", "world", "news", "cat", "dog", "un", "##aff", "##able", "the", "a",
    "breaking", "photo", "##s", "fake", "true", "satire",
]


@pytest.fixture
def wordpiece_vocab(tmp_path):
    path = tmp_path / "vocab.txt"
    path.write_text("\n".join(TINY_WORDPIECE) + "\n", encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def synthetic_text():
    train = generate_synthetic(7, 20)
    val = generate_synthetic(8, 10, split="validation")
    pipeline = TextPipeline.fit(s.title for s in train)
    return train, val, pipeline


@pytest.fixture
def small_vocab_matrix(synthetic_text):
    _, _, pipeline = synthetic_text
    return init_embedding_matrix(pipeline.vocab, EmbeddingConfig(seed=3))


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)
    np.random.seed(0)
