"""
The transformer classifier without downloading a model
======================================================

Titles are WordPiece-encoded to 32 ids with ``[CLS]``/``[SEP]`` and an
attention mask.  The classifier is a linear layer on the pooled 768-dim
encoder output.  A seeded stub encoder stands in for the pretrained network
so the tokenizer, head and fine-tuning loop can be tried offline; pass
``--bert-dir`` with a local ``bert-base-uncased`` checkout to the CLI for the
real thing.
"""

import tempfile
from pathlib import Path

import torch

from ffn.data import generate_synthetic
from ffn.models import BertClassifier, StubEncoder
from ffn.models.bert import WordPieceTokenizer, fine_tune
from ffn.trainer import prepare_bert

vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "breaking", "news", "photo", "cat", "##s", "un", "##real"]
path = Path(tempfile.mkdtemp()) / "vocab.txt"
path.write_text("\n".join(vocab) + "\n")
tok = WordPieceTokenizer(path)
enc = tok.encode("Breaking news: unreal cats", length=12)
print(tok.tokenize("Breaking news: unreal cats"))
print(enc.ids, enc.mask)

train_d = prepare_bert(generate_synthetic(0, 10), tok)
val_d = prepare_bert(generate_synthetic(1, 5, split="validation"), tok)
torch.manual_seed(0)
model = BertClassifier(StubEncoder(tok.vocab_size))
_, hist = fine_tune(model, train_d, val_d)
print("train loss per epoch:", [round(x, 4) for x in hist.train_loss])
