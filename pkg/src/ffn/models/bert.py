"""Transformer classifier: WordPiece encoding, a pluggable 768-dim encoder and
a linear 768 -> 6 head.

The real encoder wraps a local ``bert-base-uncased`` checkout through
``transformers``; :class:`StubEncoder` is a small deterministic stand-in so
everything except the pretrained weights can be exercised offline.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..labels import NUM_CLASSES

BERT_HIDDEN = 768
BERT_MAX_LEN = 32
BERT_LR = 2e-5
BERT_EPOCHS = 2


class EncoderUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class WordPieceEncoding:
    ids: np.ndarray
    mask: np.ndarray


class WordPieceTokenizer:
    """Lower-casing WordPiece tokenizer over a ``vocab.txt`` (one token per line, line number = id)."""

    def __init__(self, vocab_path):
        from tokenizers import Tokenizer, models, normalizers, pre_tokenizers

        self.vocab_path = Path(vocab_path)
        if not self.vocab_path.is_file():
            raise EncoderUnavailable(f"WordPiece vocabulary not found: {self.vocab_path}")
        self._tok = Tokenizer(models.WordPiece.from_file(str(self.vocab_path), unk_token="[UNK]"))
        self._tok.normalizer = normalizers.BertNormalizer(lowercase=True)
        self._tok.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
        ids = {t: self._tok.token_to_id(t) for t in ("[CLS]", "[SEP]", "[PAD]", "[UNK]")}
        missing = [t for t, i in ids.items() if i is None]
        if missing:
            raise ValueError(f"{self.vocab_path}: vocabulary lacks special tokens {missing}")
        self.cls_id, self.sep_id = ids["[CLS]"], ids["[SEP]"]
        self.pad_id, self.unk_id = ids["[PAD]"], ids["[UNK]"]

    @property
    def vocab_size(self) -> int:
        return self._tok.get_vocab_size()

    def tokenize(self, text: str) -> list[str]:
        return self._tok.encode(text, add_special_tokens=False).tokens

    def sha256(self) -> str:
        return hashlib.sha256(self.vocab_path.read_bytes()).hexdigest()

    def encode(self, text: str, length: int = BERT_MAX_LEN) -> WordPieceEncoding:
        if length < 2:
            raise ValueError("length must leave room for [CLS] and [SEP]")
        pieces = self._tok.encode(text, add_special_tokens=False).ids[: length - 2]
        real = [self.cls_id, *pieces, self.sep_id]
        ids = np.full(length, self.pad_id, dtype=np.int64)
        ids[: len(real)] = real
        mask = np.zeros(length, dtype=np.int64)
        mask[: len(real)] = 1
        return WordPieceEncoding(ids, mask)

    def encode_batch(self, texts: Iterable[str], length: int = BERT_MAX_LEN):
        encs = [self.encode(t, length) for t in texts]
        if not encs:
            return np.zeros((0, length), np.int64), np.zeros((0, length), np.int64)
        return np.stack([e.ids for e in encs]), np.stack([e.mask for e in encs])


def bert_encode(raw: str, tokenizer: WordPieceTokenizer, length: int = BERT_MAX_LEN) -> WordPieceEncoding:
    return tokenizer.encode(raw, length)


class StubEncoder(nn.Module):
    """Masked mean of seeded token embeddings followed by tanh(Linear).

    Deterministic given ``seed``, trainable, and shaped like the pooled
    output of a base-size encoder.
    """

    kind = "stub"

    def __init__(self, vocab_size, seed=0, dim=BERT_HIDDEN):
        super().__init__()
        self.seed = seed
        gen = torch.Generator().manual_seed(seed)
        self.embedding = nn.Embedding(vocab_size, dim)
        self.pool = nn.Linear(dim, dim)
        with torch.no_grad():
            self.embedding.weight.copy_(torch.randn(vocab_size, dim, generator=gen) * 0.5)
            self.pool.weight.copy_(torch.randn(dim, dim, generator=gen) / dim ** 0.5)
            self.pool.bias.zero_()

    def config(self):
        return {"encoder": "stub", "vocab_size": self.embedding.num_embeddings, "seed": self.seed}

    def forward(self, ids, mask):
        m = mask.unsqueeze(-1).to(self.embedding.weight.dtype)
        summed = (self.embedding(ids) * m).sum(1)
        mean = summed / m.sum(1).clamp_min(1.0)
        return torch.tanh(self.pool(mean))


class HFBertEncoder(nn.Module):
    """Pooled [CLS] output of a local ``transformers`` BERT checkout."""

    kind = "hf"

    def __init__(self, assets_dir, pretrained=True):
        super().__init__()
        try:
            from transformers import BertConfig, BertModel
        except ImportError as exc:
            raise EncoderUnavailable("the transformers package is required for the BERT encoder") from exc
        self.assets_dir = str(assets_dir)
        if not (Path(assets_dir) / "config.json").is_file():
            raise EncoderUnavailable(f"no BERT model assets in {assets_dir}")
        try:
            if pretrained:
                self.bert = BertModel.from_pretrained(self.assets_dir, local_files_only=True)
            else:
                self.bert = BertModel(BertConfig.from_pretrained(self.assets_dir, local_files_only=True))
        except OSError as exc:
            raise EncoderUnavailable(f"could not load BERT assets from {assets_dir}: {exc}") from exc
        if self.bert.config.hidden_size != BERT_HIDDEN:
            raise EncoderUnavailable(f"expected hidden size {BERT_HIDDEN}, got {self.bert.config.hidden_size}")

    def config(self):
        return {"encoder": "hf", "assets_dir": self.assets_dir}

    def forward(self, ids, mask):
        return self.bert(input_ids=ids, attention_mask=mask).pooler_output


def build_encoder(cfg: dict, pretrained: bool = True) -> nn.Module:
    if cfg["encoder"] == "stub":
        return StubEncoder(cfg["vocab_size"], cfg.get("seed", 0))
    if cfg["encoder"] == "hf":
        return HFBertEncoder(cfg["assets_dir"], pretrained=pretrained)
    raise ValueError(f"unknown encoder {cfg['encoder']!r}")


class BertClassifier(nn.Module):
    arch = "bert"

    def __init__(self, encoder: nn.Module, max_length=BERT_MAX_LEN, clean_text=False):
        super().__init__()
        self.encoder = encoder
        self.max_length = max_length
        self.clean_text = clean_text
        self.head = nn.Linear(BERT_HIDDEN, NUM_CLASSES)

    def hparams(self):
        return {"encoder": self.encoder.config(), "max_length": self.max_length,
                "clean_text": self.clean_text}

    def forward(self, ids, mask, trace=None):
        pooled = self.encoder(ids, mask)
        logits = self.head(pooled)
        if trace is not None:
            trace["pooled"] = tuple(pooled.shape[1:])
            trace["logits"] = tuple(logits.shape[1:])
        return F.log_softmax(logits, dim=1)


def fine_tune(model: BertClassifier, train_data, val_data, config=None):
    """Adam at 2e-5 for two epochs, keeping the final (not best) parameters."""
    from ..trainer import TrainConfig, train

    if config is None:
        config = TrainConfig(lr=BERT_LR, max_epochs=BERT_EPOCHS, patience=None, restore_best=False)
    return train(model, train_data, val_data, config)
