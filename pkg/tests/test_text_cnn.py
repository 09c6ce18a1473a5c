import numpy as np
import pytest
import torch

from ffn.gradcheck import check_gradients, pass_fraction
from ffn.models import TextCNN, predict, predict_label
from ffn.models.text_cnn import KERNEL_HEIGHTS
from ffn.labels import Label

from oracles import text_cnn_features


def test_shapes_traced():
    model = TextCNN(30)
    trace = {}
    out = model(torch.randint(0, 30, (4, 15)), trace)
    assert out.shape == (4, 6)
    assert [trace[f"text_conv{k}"] for k in KERNEL_HEIGHTS] == [(50, 14, 1), (50, 13, 1), (50, 12, 1), (50, 11, 1)]
    assert trace["text_features"] == (200,) and trace["dense1"] == (128,)
    assert torch.allclose(out.exp().sum(1), torch.ones(4), atol=1e-6)


def test_wrong_length_rejected():
    with pytest.raises(ValueError):
        TextCNN(30)(torch.zeros(2, 14, dtype=torch.long))


def test_features_match_naive_oracle():
    torch.manual_seed(1)
    enc = TextCNN(10).encoder.double()
    weights = [c.weight.detach().numpy() for c in enc.convs]
    biases = [c.bias.detach().numpy() for c in enc.convs]
    rng = np.random.default_rng(0)
    for _ in range(3):
        emb = rng.normal(size=(15, 300))
        ref = text_cnn_features(emb, weights, biases)
        got = enc.features_from_embedded(torch.from_numpy(emb)[None])[0].detach().numpy()
        assert np.max(np.abs(got - ref)) < 1e-5


def test_all_pad_input_is_deterministic_and_finite():
    model = TextCNN(10).eval()
    ids = torch.zeros(2, 15, dtype=torch.long)
    a, b = model(ids), model(ids)
    assert torch.equal(a, b) and torch.isfinite(a).all()
    assert torch.equal(a[0], a[1])


def test_all_pad_features_are_bias_relu():
    model = TextCNN(10)
    feats = model.encoder(torch.zeros(1, 15, dtype=torch.long))[0]
    expected = torch.cat([torch.relu(c.bias) for c in model.encoder.convs])
    assert torch.allclose(feats, expected)


def test_gradcheck():
    torch.manual_seed(2)
    model = TextCNN(12, embedding_weights=np.random.default_rng(0).uniform(-0.5, 0.5, (12, 300)).astype(np.float32)).double()
    ids = torch.randint(1, 12, (3, 15))
    y = torch.tensor([0, 3, 5])
    loss = lambda: torch.nn.functional.nll_loss(model(ids), y)
    res = check_gradients(loss, model.named_parameters(), coords_per_param=6)
    assert pass_fraction(res) >= 0.95


def test_predict_ties_go_to_first():
    lp = torch.log(torch.full((1, 6), 1 / 6))
    assert predict(lp).item() == 0
    assert predict_label(np.array([-2.0, -1.0, -1.0, -3, -3, -3])) == Label.MANIPULATED_CONTENT
