import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ffn.labels import FAKE_CLASSES, Label
from ffn.metrics import MetricsReport, confusion_matrix, per_class_prf, subset_micro_macro

from oracles import expand_confusion, sample_level_micro_macro, tally_confusion


def _hand_cm():
    cm = np.zeros((6, 6), dtype=np.int64)
    cm[Label.TRUE, Label.TRUE] = 8
    cm[Label.TRUE, Label.SATIRE] = 2
    cm[Label.SATIRE, Label.SATIRE] = 3
    cm[Label.SATIRE, Label.TRUE] = 1
    return cm


def test_hand_example():
    cm = _hand_cm()
    preds, golds = expand_confusion(cm)
    assert np.array_equal(confusion_matrix(preds, golds), cm)
    r = MetricsReport.from_confusion(cm)
    assert r.recall[Label.TRUE] == pytest.approx(0.8)
    assert r.precision[Label.TRUE] == pytest.approx(8 / 9)
    assert r.recall[Label.SATIRE] == pytest.approx(0.75)
    assert r.precision[Label.SATIRE] == pytest.approx(0.6)
    assert r.accuracy == pytest.approx(11 / 14)
    # empty classes report 0 rather than NaN
    assert r.precision[Label.IMPOSTER_CONTENT] == 0 and r.f1[Label.IMPOSTER_CONTENT] == 0


def test_micro_counts_true_rows_as_false_positives():
    cm = _hand_cm()
    avg = subset_micro_macro(cm)
    # only Satire contributes among the fake classes: TP 3, FP 2 (gold True), FN 1
    assert avg["micro"]["precision"] == pytest.approx(3 / 5)
    assert avg["micro"]["recall"] == pytest.approx(3 / 4)


def test_macro_f1_is_mean_of_class_f1():
    cm = np.array(np.random.default_rng(1).integers(0, 9, (6, 6)))
    _, _, f = per_class_prf(cm)
    avg = subset_micro_macro(cm)
    assert avg["macro"]["f1"] == pytest.approx(f[list(FAKE_CLASSES)].mean())


def test_confusion_errors():
    with pytest.raises(ValueError):
        confusion_matrix([0, 1], [0])
    with pytest.raises(ValueError):
        confusion_matrix([], [])
    with pytest.raises(ValueError):
        confusion_matrix([6], [0])


def test_oracle_agreement_randomized():
    rng = np.random.default_rng(42)
    for trial in range(200):
        n = int(rng.integers(1, 80))
        # skew sometimes so that classes go missing
        probs = rng.dirichlet(np.full(6, 0.3 if trial % 2 else 3.0))
        preds = rng.choice(6, size=n, p=probs).tolist()
        golds = rng.choice(6, size=n, p=probs).tolist()
        cm = confusion_matrix(preds, golds)
        assert np.array_equal(cm, tally_confusion(preds, golds))
        ours = subset_micro_macro(cm)
        ref = sample_level_micro_macro(preds, golds, FAKE_CLASSES)
        for kind in ("micro", "macro"):
            got = (ours[kind]["precision"], ours[kind]["recall"], ours[kind]["f1"])
            assert got == pytest.approx(ref[kind], abs=1e-12)


@given(arrays(np.int64, (6, 6), elements=st.integers(0, 30)).filter(lambda a: a.sum() > 0))
@settings(max_examples=200)
def test_report_identities(cm):
    r = MetricsReport.from_confusion(cm)
    m = r.micro
    assert m["f1"] == pytest.approx(
        0.0 if m["precision"] + m["recall"] == 0 else 2 * m["precision"] * m["recall"] / (m["precision"] + m["recall"]),
        abs=1e-12)
    all_six = subset_micro_macro(cm, subset=range(6))
    assert abs(all_six["micro"]["f1"] - r.accuracy) < 1e-12
    assert np.all((r.precision >= 0) & (r.precision <= 1))
    assert np.all(np.isfinite(r.f1))


def test_report_roundtrip_and_table(tmp_path):
    r = MetricsReport.from_confusion(_hand_cm(), loss=0.5, split="test")
    txt, js = r.save(tmp_path, "rep")
    back = MetricsReport.from_dict(__import__("json").loads(js.read_text()))
    assert np.array_equal(back.confusion, r.confusion) and back.accuracy == r.accuracy
    table = txt.read_text()
    for lab in Label:
        assert lab.display in table
    assert "micro-average" in table and "mean NLL" in table and "0.79" in table
