import torch
import torch.nn.functional as F
from torch import nn

from ..embeddings import EMBEDDING_DIM, make_embedding_layer
from ..labels import NUM_CLASSES
from ..text import SEQ_LEN

LSTM_HIDDEN = 70
CONV_FILTERS = 240
CONV_HEIGHT = 3


def init_forget_bias(lstm: nn.LSTM, value: float = 1.0):
    """Set the effective forget-gate bias (bias_ih + bias_hh) to ``value``.

    PyTorch orders gate rows as input, forget, cell, output.
    """
    h = lstm.hidden_size
    with torch.no_grad():
        for name, p in lstm.named_parameters():
            if name.startswith("bias_ih"):
                p[h:2 * h].fill_(value)
            elif name.startswith("bias_hh"):
                p[h:2 * h].zero_()


class BiLstmCNN(nn.Module):
    """Bidirectional LSTM over the embedded title, then 240 (3 x 140)
    convolution filters, ReLU, max pooling and two dense layers."""

    arch = "bilstm"

    def __init__(self, vocab_size, static_embeddings=False, embedding_weights=None,
                 hidden=128, seq_len=SEQ_LEN, lstm_hidden=LSTM_HIDDEN):
        super().__init__()
        self.seq_len = seq_len
        self.hidden = hidden
        self.static_embeddings = bool(static_embeddings)
        self.embedding = make_embedding_layer(vocab_size, static_embeddings, embedding_weights)
        self.lstm = nn.LSTM(EMBEDDING_DIM, lstm_hidden, batch_first=True, bidirectional=True)
        init_forget_bias(self.lstm)
        self.conv = nn.Conv2d(1, CONV_FILTERS, kernel_size=(CONV_HEIGHT, 2 * lstm_hidden))
        self.dense1 = nn.Linear(CONV_FILTERS, hidden)
        self.dense2 = nn.Linear(hidden, NUM_CLASSES)

    def hparams(self):
        return {
            "vocab_size": self.embedding.num_embeddings,
            "static_embeddings": self.static_embeddings,
            "hidden": self.hidden,
            "seq_len": self.seq_len,
            "lstm_hidden": self.lstm.hidden_size,
        }

    def encode(self, emb):
        """(B, 15, 300) -> (B, 15, 140); row t is [forward h_t | backward h_t]."""
        if emb.shape[1:] != (self.seq_len, EMBEDDING_DIM):
            raise ValueError(f"expected (B, {self.seq_len}, {EMBEDDING_DIM}) input, got {tuple(emb.shape)}")
        out, _ = self.lstm(emb)
        return out

    def features_from_embedded(self, emb, trace=None):
        enc = self.encode(emb)
        c = F.relu(self.conv(enc.unsqueeze(1)))  # (B, 240, 13, 1)
        feats = c.squeeze(3).max(dim=2).values
        if trace is not None:
            trace["bilstm"] = tuple(enc.shape[1:])
            trace["conv"] = tuple(c.shape[1:])
            trace["pooled"] = tuple(feats.shape[1:])
        return feats

    def forward(self, ids, trace=None):
        emb = self.embedding(ids)
        if trace is not None:
            trace["embedded"] = tuple(emb.shape[1:])
        feats = self.features_from_embedded(emb, trace)
        h = F.relu(self.dense1(feats))
        logits = self.dense2(h)
        if trace is not None:
            trace["dense1"] = tuple(h.shape[1:])
            trace["logits"] = tuple(logits.shape[1:])
        return F.log_softmax(logits, dim=1)
