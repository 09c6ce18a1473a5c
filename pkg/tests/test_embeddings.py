import numpy as np
import pytest
import torch
import torch.nn.functional as F

from ffn.embeddings import (
    EmbeddingConfig,
    EmbeddingError,
    init_embedding_matrix,
    lookup,
    make_embedding_layer,
    read_glove,
)
from ffn.models import BiLstmCNN, MultimodalCNN, TextCNN
from ffn.text import Vocabulary, encode


def _glove(tmp_path, rows):
    p = tmp_path / "g.txt"
    p.write_text("".join(f"{w} " + " ".join(str(v) for v in vec) + "\n" for w, vec in rows))
    return p


def test_glove_single_word(tmp_path):
    cat_vec = np.linspace(-1, 1, 300)
    path = _glove(tmp_path, [("cat", cat_vec)])
    vocab = Vocabulary(["cat", "dog"])
    with pytest.warns(UserWarning, match="50.0%"):
        m = init_embedding_matrix(vocab, EmbeddingConfig(init_mode="glove", glove_path=str(path)))
    assert np.allclose(m.vectors[2], cat_vec.astype(np.float32))
    assert np.all(m.vectors[0] == 0)
    assert np.all(np.abs(m.vectors[3]) <= 0.05) and np.any(m.vectors[3] != 0)
    assert m.coverage == 0.5


def test_glove_full_coverage_no_warning(tmp_path, recwarn):
    path = _glove(tmp_path, [("cat", np.ones(300)), ("dog", np.zeros(300)), ("other", np.ones(300))])
    m = init_embedding_matrix(Vocabulary(["cat", "dog"]),
                              EmbeddingConfig(init_mode="glove", glove_path=str(path)))
    assert m.coverage == 1.0 and not recwarn.list


def test_glove_errors(tmp_path):
    bad = _glove(tmp_path, [("cat", np.ones(50))])
    with pytest.raises(EmbeddingError, match="expected 300"):
        read_glove(bad, Vocabulary(["cat"]))
    with pytest.raises(EmbeddingError, match="not found"):
        read_glove(tmp_path / "missing.txt", Vocabulary(["cat"]))
    with pytest.raises(ValueError):
        EmbeddingConfig(init_mode="glove")
    with pytest.raises(ValueError):
        EmbeddingConfig(dimension=100)


def test_random_init_seeded():
    vocab = Vocabulary([f"w{i}" for i in range(20)])
    a = init_embedding_matrix(vocab, EmbeddingConfig(seed=4)).vectors
    b = init_embedding_matrix(vocab, EmbeddingConfig(seed=4)).vectors
    c = init_embedding_matrix(vocab, EmbeddingConfig(seed=5)).vectors
    assert a.dtype == np.float32 and a.shape == (22, 300)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.all(a[0] == 0) and np.abs(a).max() <= 0.05


def test_lookup_matches_loop():
    vocab = Vocabulary([f"w{i}" for i in range(10)])
    m = init_embedding_matrix(vocab, EmbeddingConfig(seed=1))
    rng = np.random.default_rng(0)
    for _ in range(20):
        toks = [f"w{i}" for i in rng.integers(0, 12, size=rng.integers(0, 20))]
        seq = encode(toks, vocab)
        out = lookup(seq, m)
        assert out.shape == (15, 300)
        for t in range(15):
            assert np.array_equal(out[t], m.vectors[seq.ids[t]])
        for t in range(seq.effective_length, 15):
            assert np.all(out[t] == 0)
    with pytest.raises(IndexError):
        lookup(np.array([0, 99]), m)


def _one_step(model, ids, y, extra=()):
    opt = torch.optim.Adam([p for p in model.parameters() if p.requires_grad], lr=1e-3)
    opt.zero_grad()
    F.nll_loss(model(ids, *extra), y).backward()
    opt.step()


@pytest.mark.parametrize("arch", ["cnn", "bilstm", "multimodal"])
@pytest.mark.parametrize("static", [True, False])
def test_embedding_regimes(arch, static, small_vocab_matrix):
    weights = small_vocab_matrix.vectors
    n = weights.shape[0]
    if arch == "cnn":
        model, emb = TextCNN(n, static, weights), None
    elif arch == "bilstm":
        model = BiLstmCNN(n, static, weights)
    else:
        model = MultimodalCNN(n, static, weights, image_size=16)
    layer = model.encoder.embedding if arch == "cnn" else (
        model.embedding if arch == "bilstm" else model.text.embedding)
    before = layer.weight.detach().clone()
    ids = torch.randint(1, n, (8, 15))
    ids[:, 10:] = 0
    extra = (torch.rand(8, 3, 16, 16),) if arch == "multimodal" else ()
    _one_step(model, ids, torch.randint(0, 6, (8,)), extra)
    after = layer.weight.detach()
    assert torch.all(after[0] == 0)
    if static:
        assert torch.equal(before, after)
    else:
        assert (before[1:] != after[1:]).any()


def test_layer_rejects_bad_shape():
    with pytest.raises(ValueError):
        make_embedding_layer(5, False, np.zeros((4, 300), np.float32))
    layer = make_embedding_layer(5, True, np.ones((5, 300), np.float32))
    assert torch.all(layer.weight[0] == 0) and not layer.weight.requires_grad
