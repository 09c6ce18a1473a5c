"""
Text CNN and BiLSTM-CNN on a toy corpus
=======================================

Both models read the same 15 x 300 embedded title.  The CNN runs four
parallel convolutions of heights 2 to 5 and keeps the maximum over time of
each of the 50 filters; the BiLSTM-CNN first re-encodes the sequence with a
70 + 70 unit bidirectional LSTM and then applies 240 filters of height 3.
"""

import torch

from _common import OUT
from ffn.data import generate_synthetic
from ffn.embeddings import EmbeddingConfig, init_embedding_matrix
from ffn.models import BiLstmCNN, TextCNN
from ffn.text import TextPipeline
from ffn.trainer import TrainConfig, evaluate, prepare_text, train

train_s = generate_synthetic(0, 20)
val_s = generate_synthetic(1000, 10, split="validation")
test_s = generate_synthetic(2000, 10, split="test")
pipeline = TextPipeline.fit(s.title for s in train_s)
emb = init_embedding_matrix(pipeline.vocab, EmbeddingConfig(seed=0))
data = {s: prepare_text(x, pipeline) for s, x in (("train", train_s), ("val", val_s), ("test", test_s))}

###############################################################################
# Intermediate shapes, recorded by passing a ``trace`` dict.

for model in (TextCNN(len(pipeline.vocab)), BiLstmCNN(len(pipeline.vocab))):
    trace = {}
    model(torch.zeros(1, 15, dtype=torch.long), trace)
    print(type(model).__name__, trace)

###############################################################################
# Train each with Adam at 1e-3, batch 64 and early stopping on validation loss.

for cls in (TextCNN, BiLstmCNN):
    torch.manual_seed(0)
    model = cls(len(pipeline.vocab), static_embeddings=False, embedding_weights=emb.vectors)
    ckpt, hist = train(model, data["train"], data["val"], TrainConfig(max_epochs=30))
    report = evaluate(ckpt, data["test"])
    print(f"\n{cls.__name__}: {hist.epochs} epochs, best epoch {hist.best_epoch}")
    print(report.to_table())
    report.save(OUT, f"toy_{cls.arch}")
