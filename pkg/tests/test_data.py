import http.server
import threading
from functools import partial

import numpy as np
import pytest
from PIL import Image

from ffn.data import (
    DataError,
    DatasetSchema,
    LabeledSample,
    class_distribution,
    fetch_images,
    generate_synthetic,
    load_dataset,
    resolve_image,
    write_dataset,
    write_fetch_report,
    write_synthetic_dataset,
)
from ffn.labels import Label

HEADER = "id\tclean_title\timage_url\t6_way_label\n"


def _write(tmp_path, body, name="d.tsv"):
    p = tmp_path / name
    p.write_text(HEADER + body, encoding="utf-8")
    return p


def test_header_only_gives_empty(tmp_path):
    assert len(load_dataset(_write(tmp_path, ""))) == 0


def test_three_rows_identity_mapping(tmp_path):
    p = _write(tmp_path, "a\tfirst title\t\t0\nb\tsecond title\t\t2\nc\tthird title\t\t5\n")
    loaded = load_dataset(p, split="validation")
    assert [s.label for s in loaded] == [Label.TRUE, Label.FALSE_CONNECTION, Label.IMPOSTER_CONTENT]
    assert [s.id for s in loaded] == ["a", "b", "c"]
    assert all(s.split == "validation" for s in loaded)


def test_out_of_range_label_is_rejected_with_row(tmp_path):
    p = _write(tmp_path, "a\tok\t\t1\nb\tbad\t\t6\nc\tok too\t\t3\n")
    loaded = load_dataset(p)
    assert len(loaded) == 2
    assert [r.row for r in loaded.rejected] == [1]
    assert "6" in loaded.rejected[0].reason
    with pytest.raises(DataError, match="row 1"):
        load_dataset(p, strict=True)


def test_float_label_strings_accepted(tmp_path):
    loaded = load_dataset(_write(tmp_path, "a\tt\t\t4.0\n"))
    assert loaded[0].label == Label.MISLEADING_CONTENT


def test_missing_file_and_column(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_dataset(tmp_path / "nope.tsv")
    p = tmp_path / "bad.tsv"
    p.write_text("id\tclean_title\t6_way_label\n", encoding="utf-8")
    with pytest.raises(DataError, match="image_url"):
        load_dataset(p)


def test_missing_title_and_image_rules(tmp_path):
    p = _write(tmp_path, "a\t\thttp://x/1.jpg\t0\nb\thas title\t\t0\nc\tboth\thttp://x/2.jpg\t1\n")
    uni = load_dataset(p)
    assert [s.id for s in uni] == ["b", "c"]
    multi = load_dataset(p, multimodal=True)
    assert [s.id for s in multi] == ["c"]
    assert {r.reason for r in multi.rejected} == {"missing title", "missing image"}


def test_schema_must_be_bijection():
    with pytest.raises(ValueError):
        DatasetSchema(label_map={0: Label.TRUE, 1: Label.TRUE, 2: Label.SATIRE, 3: Label.MISLEADING_CONTENT,
                                 4: Label.IMPOSTER_CONTENT, 5: Label.FALSE_CONNECTION})
    fk = DatasetSchema.fakeddit()
    assert sorted(fk.label_map.values()) == sorted(Label)


def test_custom_column_names(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("pid\ttext\timg\ty\nq\thello there\t\t3\n", encoding="utf-8")
    schema = DatasetSchema(id_column="pid", title_column="text", image_column="img", label_column="y")
    assert load_dataset(p, schema)[0].label == Label.SATIRE


def test_write_then_load_roundtrip(tmp_path):
    samples = generate_synthetic(3, 2)
    write_dataset(tmp_path / "t.tsv", samples)
    back = load_dataset(tmp_path / "t.tsv")
    assert back.samples == samples


def test_distribution_uniform_and_hand_count():
    uniform = [LabeledSample(str(i), "x", lab, "train") for i, lab in enumerate(Label)]
    d = class_distribution(uniform)
    assert all(abs(v - 1 / 6) < 1e-12 for v in d.proportions["train"].values())

    four_two = [LabeledSample(str(i), "x", Label.TRUE, "test") for i in range(4)]
    four_two += [LabeledSample(f"s{i}", "x", Label.SATIRE, "test") for i in range(2)]
    d = class_distribution(four_two)
    assert d.proportions["test"][Label.TRUE] == pytest.approx(2 / 3)
    assert d.proportions["test"][Label.SATIRE] == pytest.approx(1 / 3)
    assert d.counts["test"][Label.FALSE_CONNECTION] == 0
    assert abs(sum(d.proportions["test"].values()) - 1) < 1e-9


def test_distribution_empty_raises():
    with pytest.raises(ValueError):
        class_distribution([])


def test_load_then_distribution_counts_match(tmp_path):
    write_synthetic_dataset(tmp_path, seed=1, per_class_count=5)
    loaded = load_dataset(tmp_path / "train.tsv")
    dist = class_distribution(loaded)
    assert dist.total("train") == len(loaded) == 30


def test_synthetic_balance_and_determinism():
    a = generate_synthetic(7, 20)
    assert len(a) == 120
    assert all(sum(s.label == lab for s in a) == 20 for lab in Label)
    assert generate_synthetic(7, 20) == a
    b = generate_synthetic(8, 20)
    assert [s.title for s in a] != [s.title for s in b]
    with pytest.raises(ValueError):
        generate_synthetic(0, 0)


def test_synthetic_images_png_rgb(tmp_path):
    samples = generate_synthetic(1, 2, with_images=True, image_dir=tmp_path, image_size=32)
    for s in samples:
        with Image.open(s.image_ref) as img:
            assert img.format == "PNG" and img.mode == "RGB" and img.size == (32, 32)
    again = generate_synthetic(1, 2, with_images=True, image_dir=tmp_path / "b", image_size=32)
    for x, y in zip(samples, again):
        assert np.array_equal(np.asarray(Image.open(x.image_ref)), np.asarray(Image.open(y.image_ref)))


def test_synthetic_images_are_class_correlated(tmp_path):
    samples = generate_synthetic(5, 6, with_images=True, image_dir=tmp_path, image_size=32)
    means = {}
    for s in samples:
        means.setdefault(s.label, []).append(np.asarray(Image.open(s.image_ref), dtype=float).mean(axis=(0, 1)))
    centroids = {lab: np.mean(v, axis=0) for lab, v in means.items()}
    # nearest-centroid on mean colour alone already separates most samples
    hits = sum(
        min(centroids, key=lambda c: np.linalg.norm(centroids[c] - m)) == lab
        for lab, v in means.items() for m in v
    )
    assert hits / len(samples) > 0.8


def test_relative_image_refs_resolve(tmp_path):
    write_synthetic_dataset(tmp_path, seed=2, per_class_count=1, with_images=True, image_size=16)
    loaded = load_dataset(tmp_path / "train.tsv", multimodal=True)
    for s in loaded:
        assert not s.image_ref.startswith("/")
        assert resolve_image(s, base_dir=tmp_path).is_file()
        assert resolve_image(s, image_dir=tmp_path / "images").is_file()


class _Handler(http.server.SimpleHTTPRequestHandler):
    hits = []

    def do_GET(self):
        _Handler.hits.append(self.path)
        super().do_GET()

    def log_message(self, *a):
        pass


@pytest.fixture
def stub_server(tmp_path):
    root = tmp_path / "www"
    root.mkdir()
    Image.new("RGB", (8, 8), (255, 0, 0)).save(root / "a.png")
    Image.new("RGB", (8, 8), (0, 255, 0)).save(root / "b.jpg", format="JPEG")
    (root / "junk.jpg").write_bytes(b"not an image")
    _Handler.hits = []
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), partial(_Handler, directory=str(root)))
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


def test_fetch_two_new_one_cached(tmp_path, stub_server):
    cache = tmp_path / "cache"
    cache.mkdir()
    Image.new("RGB", (4, 4)).save(cache / "c.png")
    samples = [
        LabeledSample("b", "t", Label.TRUE, "train", f"{stub_server}/b.jpg"),
        LabeledSample("a", "t", Label.TRUE, "train", f"{stub_server}/a.png"),
        LabeledSample("c", "t", Label.TRUE, "train", f"{stub_server}/never-requested.png"),
    ]
    report = fetch_images(samples, cache)
    assert [r.id for r in report] == ["a", "b", "c"]
    assert [r.status for r in report] == ["fetched", "fetched", "cached"]
    assert "/never-requested.png" not in _Handler.hits
    assert (cache / "a.png").is_file() and (cache / "b.jpg").is_file()

    again = fetch_images(samples, cache)
    assert [r.status for r in again] == ["cached"] * 3


def test_fetch_failures_are_recorded(tmp_path, stub_server):
    samples = [
        LabeledSample("x", "t", Label.TRUE, "train", f"{stub_server}/missing.png"),
        LabeledSample("y", "t", Label.TRUE, "train", f"{stub_server}/junk.jpg"),
        LabeledSample("z", "t", Label.TRUE, "train", "http://127.0.0.1:9/unreachable.png"),
    ]
    report = fetch_images(samples, tmp_path / "cache", timeout=2)
    assert [r.status for r in report] == ["failed"] * 3
    assert "undecodable" in report[1].reason
    assert all(r.reason for r in report)
    write_fetch_report(tmp_path / "r.tsv", report)
    lines = (tmp_path / "r.tsv").read_text().splitlines()
    assert lines[0] == "id\tstatus\treason" and len(lines) == 4
