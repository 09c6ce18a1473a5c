"""Word-embedding matrices: random or GloVe initialisation, static or dynamic training."""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from torch import nn

from .text import PAD_ID, TokenSequence, Vocabulary

logger = logging.getLogger(__name__)

EMBEDDING_DIM = 300


class EmbeddingError(Exception):
    pass


@dataclass(frozen=True)
class EmbeddingConfig:
    init_mode: str = "random"  # "random" | "glove"
    trainable: str = "dynamic"  # "dynamic" | "static"
    dimension: int = EMBEDDING_DIM
    glove_path: Optional[str] = None
    random_scale: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.init_mode not in ("random", "glove"):
            raise ValueError(f"init_mode must be 'random' or 'glove', got {self.init_mode!r}")
        if self.trainable not in ("dynamic", "static"):
            raise ValueError(f"trainable must be 'dynamic' or 'static', got {self.trainable!r}")
        if self.dimension != EMBEDDING_DIM:
            raise ValueError(f"embedding dimension is fixed at {EMBEDDING_DIM}")
        if (self.init_mode == "glove") != (self.glove_path is not None):
            raise ValueError("glove_path is required for, and only for, init_mode='glove'")

    @property
    def is_static(self) -> bool:
        return self.trainable == "static"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EmbeddingMatrix:
    vectors: np.ndarray  # float32, |V| x 300
    config: EmbeddingConfig
    coverage: Optional[float] = None

    @property
    def shape(self):
        return self.vectors.shape


def read_glove(path, vocab: Vocabulary, dimension: int = EMBEDDING_DIM) -> dict[str, np.ndarray]:
    """Vectors for the words of ``vocab`` found in a GloVe text file."""
    path = Path(path)
    if not path.is_file():
        raise EmbeddingError(f"GloVe file not found: {path}")
    found = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if len(parts) - 1 != dimension:
                raise EmbeddingError(
                    f"{path}:{lineno}: expected {dimension} values, found {len(parts) - 1}"
                )
            word = parts[0]
            if word in vocab and word not in found:
                found[word] = np.asarray(parts[1:], dtype=np.float32)
    return found


def init_embedding_matrix(vocab: Vocabulary, config: EmbeddingConfig) -> EmbeddingMatrix:
    rng = np.random.default_rng(config.seed)
    n = len(vocab)
    vectors = rng.uniform(-config.random_scale, config.random_scale,
                          size=(n, config.dimension)).astype(np.float32)
    vectors[PAD_ID] = 0.0
    coverage = None
    if config.init_mode == "glove":
        found = read_glove(config.glove_path, vocab, config.dimension)
        for word, vec in found.items():
            vectors[vocab.id_of(word)] = vec
        n_words = n - 2
        coverage = len(found) / n_words if n_words else 1.0
        if coverage < 1.0:
            warnings.warn(f"GloVe covers {coverage:.1%} of the vocabulary; "
                          "missing words keep their random vectors", stacklevel=2)
    if not np.all(np.isfinite(vectors)):
        raise EmbeddingError("embedding matrix contains non-finite values")
    return EmbeddingMatrix(vectors, config, coverage)


def lookup(seq: TokenSequence, matrix: EmbeddingMatrix) -> np.ndarray:
    ids = np.asarray(seq.ids if isinstance(seq, TokenSequence) else seq)
    if ids.size and (ids.min() < 0 or ids.max() >= matrix.vectors.shape[0]):
        raise IndexError(f"token id out of range for vocabulary of size {matrix.vectors.shape[0]}")
    return matrix.vectors[ids]


def make_embedding_layer(vocab_size: int, static: bool, weights: Optional[np.ndarray] = None) -> nn.Embedding:
    """An ``nn.Embedding`` whose pad row receives no gradient; frozen if ``static``.

    Without ``weights`` the rows are drawn from U(-0.05, 0.05) with the torch RNG.
    """
    layer = nn.Embedding(vocab_size, EMBEDDING_DIM, padding_idx=PAD_ID)
    with torch.no_grad():
        if weights is None:
            layer.weight.uniform_(-0.05, 0.05)
        else:
            if weights.shape != (vocab_size, EMBEDDING_DIM):
                raise ValueError(f"embedding weights have shape {weights.shape}")
            layer.weight.copy_(torch.from_numpy(np.asarray(weights, dtype=np.float32)))
        layer.weight[PAD_ID].zero_()
    layer.weight.requires_grad_(not static)
    return layer
