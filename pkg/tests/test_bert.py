import math

import numpy as np
import pytest
import torch

from ffn.data import generate_synthetic
from ffn.gradcheck import check_gradients, pass_fraction
from ffn.models import BertClassifier, StubEncoder, build_model
from ffn.models.bert import EncoderUnavailable, HFBertEncoder, WordPieceTokenizer, bert_encode, fine_tune
from ffn.trainer import TrainConfig, prepare_bert


def test_encode_empty_and_simple(wordpiece_vocab):
    tok = WordPieceTokenizer(wordpiece_vocab)
    e = bert_encode("", tok)
    assert e.ids.tolist() == [tok.cls_id, tok.sep_id] + [tok.pad_id] * 30
    assert e.mask.tolist() == [1, 1] + [0] * 30
    e = bert_encode("Hello world", tok)
    assert e.ids[:4].tolist() == [3, 9, 10, 4]
    assert tok.tokenize("unaffable") == ["un", "##aff", "##able"]
    assert tok.tokenize("zebra") == ["[UNK]"]


def test_encode_truncates(wordpiece_vocab):
    tok = WordPieceTokenizer(wordpiece_vocab)
    e = tok.encode(" ".join(["news"] * 50))
    assert len(e.ids) == 32 and e.ids[0] == tok.cls_id and e.ids[-1] == tok.sep_id
    assert e.mask.sum() == 32


def test_mask_marks_non_pad(wordpiece_vocab):
    tok = WordPieceTokenizer(wordpiece_vocab)
    rng = np.random.default_rng(0)
    words = ["hello", "world", "cat", "dogs", "zzz", "!", "breaking"]
    for _ in range(50):
        text = " ".join(rng.choice(words, size=rng.integers(0, 40)))
        e = tok.encode(text)
        assert np.array_equal(e.mask == 1, e.ids != tok.pad_id)
        n = int(e.mask.sum())
        assert np.all(e.mask[:n] == 1) and np.all(e.mask[n:] == 0)


def test_missing_vocab(tmp_path):
    with pytest.raises(EncoderUnavailable):
        WordPieceTokenizer(tmp_path / "nope.txt")
    with pytest.raises(EncoderUnavailable):
        HFBertEncoder(tmp_path)


def test_zero_head_gives_uniform(wordpiece_vocab):
    model = BertClassifier(StubEncoder(25))
    with torch.no_grad():
        model.head.weight.zero_()
        model.head.bias.zero_()
    tok = WordPieceTokenizer(wordpiece_vocab)
    ids, mask = tok.encode_batch(["hello", "fake news"])
    out = model(torch.from_numpy(ids), torch.from_numpy(mask))
    assert torch.allclose(out, torch.full((2, 6), math.log(1 / 6)))


def test_padding_does_not_change_stub_output():
    enc = StubEncoder(25, seed=1)
    ids = torch.tensor([[3, 9, 10, 4, 0, 0]])
    mask = torch.tensor([[1, 1, 1, 1, 0, 0]])
    ids2 = ids.clone()
    ids2[0, 4:] = 12
    assert torch.equal(enc(ids, mask), enc(ids2, mask))


def test_rebuild_from_hparams():
    model = BertClassifier(StubEncoder(25, seed=2))
    clone = build_model("bert", model.hparams())
    clone.load_state_dict(model.state_dict())
    ids = torch.randint(0, 25, (2, 32))
    mask = torch.ones(2, 32, dtype=torch.long)
    assert torch.equal(model(ids, mask), clone(ids, mask))


def test_head_gradcheck_with_stub():
    torch.manual_seed(0)
    model = BertClassifier(StubEncoder(25)).double()
    for p in model.encoder.parameters():
        p.requires_grad_(False)
    ids = torch.randint(0, 25, (4, 32))
    mask = torch.ones(4, 32, dtype=torch.long)
    y = torch.tensor([0, 1, 2, 3])
    loss = lambda: torch.nn.functional.nll_loss(model(ids, mask), y)
    res = check_gradients(loss, model.head.named_parameters(prefix="head"), coords_per_param=40)
    assert len(res) == 46
    assert pass_fraction(res) >= 0.95


def _bert_data(wordpiece_vocab):
    tok = WordPieceTokenizer(wordpiece_vocab)
    train = prepare_bert(generate_synthetic(1, 10), tok)
    val = prepare_bert(generate_synthetic(2, 5, split="validation"), tok)
    return tok, train, val


def test_fine_tune_defaults_and_loss_decreases(wordpiece_vocab):
    tok, train, val = _bert_data(wordpiece_vocab)
    torch.manual_seed(0)
    model = BertClassifier(StubEncoder(tok.vocab_size))
    ckpt, hist = fine_tune(model, train, val)
    assert hist.epochs == 2
    assert hist.train_loss[1] < hist.train_loss[0]
    assert ckpt.manifest["train_config"]["lr"] == 2e-5
    assert ckpt.manifest["restored_epoch"] is None


def test_zero_epochs_leaves_weights(wordpiece_vocab):
    tok, train, val = _bert_data(wordpiece_vocab)
    model = BertClassifier(StubEncoder(tok.vocab_size))
    before = {k: v.clone() for k, v in model.state_dict().items()}
    ckpt, hist = fine_tune(model, train, val, TrainConfig(lr=2e-5, max_epochs=0, patience=None))
    assert hist.epochs == 0
    for k, v in model.state_dict().items():
        assert torch.equal(before[k], v)
