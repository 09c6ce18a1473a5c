import torch
import torch.nn.functional as F
from torch import nn

from ..embeddings import EMBEDDING_DIM, make_embedding_layer
from ..labels import NUM_CLASSES
from ..text import SEQ_LEN

KERNEL_HEIGHTS = (2, 3, 4, 5)
CHANNELS = 50
TEXT_FEATURES = CHANNELS * len(KERNEL_HEIGHTS)  # 200


class TextCnnEncoder(nn.Module):
    """Embedding layer plus four parallel (k x 300) convolutions with ReLU and
    max-over-time pooling, giving a 200-dim feature per title."""

    def __init__(self, vocab_size, static_embeddings=False, embedding_weights=None,
                 seq_len=SEQ_LEN):
        super().__init__()
        self.seq_len = seq_len
        self.static_embeddings = bool(static_embeddings)
        self.embedding = make_embedding_layer(vocab_size, static_embeddings, embedding_weights)
        self.convs = nn.ModuleList(
            nn.Conv2d(1, CHANNELS, kernel_size=(k, EMBEDDING_DIM)) for k in KERNEL_HEIGHTS
        )

    def features_from_embedded(self, emb, trace=None):
        # emb: (B, 15, 300)
        if emb.shape[1:] != (self.seq_len, EMBEDDING_DIM):
            raise ValueError(f"expected (B, {self.seq_len}, {EMBEDDING_DIM}) input, got {tuple(emb.shape)}")
        x = emb.unsqueeze(1)
        pooled = []
        for k, conv in zip(KERNEL_HEIGHTS, self.convs):
            c = F.relu(conv(x))  # (B, 50, 16 - k, 1)
            if trace is not None:
                trace[f"text_conv{k}"] = tuple(c.shape[1:])
            pooled.append(c.squeeze(3).max(dim=2).values)
        feats = torch.cat(pooled, dim=1)
        if trace is not None:
            trace["text_features"] = tuple(feats.shape[1:])
        return feats

    def forward(self, ids, trace=None):
        emb = self.embedding(ids)
        if trace is not None:
            trace["embedded"] = tuple(emb.shape[1:])
        return self.features_from_embedded(emb, trace)


class TextCNN(nn.Module):
    arch = "cnn"

    def __init__(self, vocab_size, static_embeddings=False, embedding_weights=None,
                 hidden=128, seq_len=SEQ_LEN):
        super().__init__()
        self.hidden = hidden
        self.encoder = TextCnnEncoder(vocab_size, static_embeddings, embedding_weights, seq_len)
        self.dense1 = nn.Linear(TEXT_FEATURES, hidden)
        self.dense2 = nn.Linear(hidden, NUM_CLASSES)

    def hparams(self):
        return {
            "vocab_size": self.encoder.embedding.num_embeddings,
            "static_embeddings": self.encoder.static_embeddings,
            "hidden": self.hidden,
            "seq_len": self.encoder.seq_len,
        }

    def forward(self, ids, trace=None):
        feats = self.encoder(ids, trace)
        h = F.relu(self.dense1(feats))
        logits = self.dense2(h)
        if trace is not None:
            trace["dense1"] = tuple(h.shape[1:])
            trace["logits"] = tuple(logits.shape[1:])
        return F.log_softmax(logits, dim=1)
