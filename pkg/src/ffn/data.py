"""Dataset ingestion: Fakeddit-style TSV loading, class statistics, image
fetching and a synthetic generator for desk-scale runs.

The default :class:`DatasetSchema` reads the public Fakeddit column names
(``id``, ``clean_title``, ``image_url``, ``6_way_label``) and maps label
integers onto :class:`~ffn.labels.Label` by position.  Fakeddit's own
README numbers the classes differently; use :meth:`DatasetSchema.fakeddit`
when reading the original files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import os
import sys
import urllib.parse
import urllib.request
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np
from PIL import Image, ImageDraw

from .labels import SPLITS, Label

logger = logging.getLogger(__name__)

# Fakeddit titles can be long; the csv default field limit is too small.
csv.field_size_limit(min(sys.maxsize, 2**31 - 1))


class DataError(Exception):
    """Raised when input data cannot be read or does not match its schema."""


@dataclass(frozen=True)
class LabeledSample:
    id: str
    title: str
    label: Label
    split: str
    image_ref: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.label, Label):
            raise TypeError(f"label must be a Label, got {self.label!r}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")


@dataclass(frozen=True)
class DatasetSchema:
    id_column: str = "id"
    title_column: str = "clean_title"
    image_column: str = "image_url"
    label_column: str = "6_way_label"
    label_map: Mapping[int, Label] = field(
        default_factory=lambda: {int(lab): lab for lab in Label}
    )

    def __post_init__(self):
        values = list(self.label_map.values())
        if sorted(values) != sorted(Label) or len(values) != len(set(values)):
            raise ValueError("label_map must be a bijection onto the six labels")

    @classmethod
    def fakeddit(cls, **overrides) -> "DatasetSchema":
        """Schema with the label numbering of the Fakeddit release README."""
        label_map = {
            0: Label.TRUE,
            1: Label.SATIRE,
            2: Label.MISLEADING_CONTENT,
            3: Label.IMPOSTER_CONTENT,
            4: Label.FALSE_CONNECTION,
            5: Label.MANIPULATED_CONTENT,
        }
        return cls(label_map=label_map, **overrides)

    @property
    def columns(self) -> tuple[str, str, str, str]:
        return (self.id_column, self.title_column, self.image_column, self.label_column)

    def encode_label(self, label: Label) -> int:
        for key, value in self.label_map.items():
            if value == label:
                return key
        raise KeyError(label)


@dataclass(frozen=True)
class Rejection:
    row: int  # 0-based data row index (header excluded)
    reason: str


@dataclass
class LoadedSplit:
    """Accepted samples of one split plus the rows that were rejected."""

    samples: list[LabeledSample]
    rejected: list[Rejection]
    split: str

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[LabeledSample]:
        return iter(self.samples)

    def __getitem__(self, idx):
        return self.samples[idx]


def _parse_label(raw: str, schema: DatasetSchema) -> Optional[Label]:
    raw = raw.strip()
    try:
        num = float(raw)
    except ValueError:
        return None
    if not num.is_integer():
        return None
    return schema.label_map.get(int(num))


def load_dataset(
    path,
    schema: DatasetSchema | None = None,
    split: str = "train",
    multimodal: bool = False,
    strict: bool = False,
) -> LoadedSplit:
    """Read a UTF-8 TSV with a header row into :class:`LabeledSample` records.

    Rows with an unmappable label or an empty title are rejected and listed
    in ``LoadedSplit.rejected``; in ``multimodal`` mode rows without an image
    reference are rejected as well.  With ``strict=True`` the first
    unmappable label raises :class:`DataError` instead.
    """
    schema = schema or DatasetSchema()
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")

    samples: list[LabeledSample] = []
    rejected: list[Rejection] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
        header = reader.fieldnames or []
        missing = [c for c in schema.columns if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {missing}; header is {header}")
        for row_idx, row in enumerate(reader):
            raw_label = row.get(schema.label_column) or ""
            label = _parse_label(raw_label, schema)
            if label is None:
                if strict:
                    raise DataError(f"{path}: row {row_idx}: unmappable label {raw_label!r}")
                rejected.append(Rejection(row_idx, f"unmappable label {raw_label!r}"))
                continue
            title = (row.get(schema.title_column) or "").strip()
            if not title:
                rejected.append(Rejection(row_idx, "missing title"))
                continue
            image_ref = (row.get(schema.image_column) or "").strip() or None
            if multimodal and image_ref is None:
                rejected.append(Rejection(row_idx, "missing image"))
                continue
            sample_id = (row.get(schema.id_column) or "").strip() or f"{split}-{row_idx}"
            samples.append(LabeledSample(sample_id, title, label, split, image_ref))

    if rejected:
        logger.info("%s: accepted %d rows, rejected %d", path, len(samples), len(rejected))
    return LoadedSplit(samples, rejected, split)


def write_dataset(path, samples: Iterable[LabeledSample], schema: DatasetSchema | None = None):
    """Write samples as a TSV readable by :func:`load_dataset`."""
    schema = schema or DatasetSchema()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", quoting=csv.QUOTE_NONE, escapechar="\\",
                            lineterminator="\n")
        writer.writerow(schema.columns)
        for s in samples:
            title = " ".join(s.title.split())
            writer.writerow([s.id, title, s.image_ref or "", schema.encode_label(s.label)])


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Class statistics
# ---------------------------------------------------------------------------


@dataclass
class ClassDistribution:
    counts: dict[str, dict[Label, int]]
    proportions: dict[str, dict[Label, float]]

    def total(self, split: str) -> int:
        return sum(self.counts[split].values())

    def to_dict(self) -> dict:
        return {
            split: {
                lab.name: {"count": self.counts[split][lab], "proportion": self.proportions[split][lab]}
                for lab in Label
            }
            for split in self.counts
        }


def class_distribution(samples: Sequence[LabeledSample]) -> ClassDistribution:
    samples = list(samples)
    if not samples:
        raise ValueError("class_distribution needs at least one sample")
    by_split: dict[str, Counter] = {}
    for s in samples:
        by_split.setdefault(s.split, Counter())[s.label] += 1
    counts, props = {}, {}
    for split in sorted(by_split, key=SPLITS.index):
        tally = by_split[split]
        total = sum(tally.values())
        counts[split] = {lab: tally.get(lab, 0) for lab in Label}
        props[split] = {lab: tally.get(lab, 0) / total for lab in Label}
    return ClassDistribution(counts, props)


# ---------------------------------------------------------------------------
# Image fetching
# ---------------------------------------------------------------------------

IMAGE_SUFFIXES = {"PNG": ".png", "JPEG": ".jpg", "GIF": ".gif", "BMP": ".bmp", "WEBP": ".webp"}


@dataclass(frozen=True)
class FetchRecord:
    id: str
    status: str  # "fetched" | "cached" | "failed"
    reason: str = ""
    path: Optional[str] = None


def cached_image_path(cache_dir, sample_id: str) -> Optional[Path]:
    cache_dir = Path(cache_dir)
    for suffix in IMAGE_SUFFIXES.values():
        candidate = cache_dir / f"{sample_id}{suffix}"
        if candidate.is_file():
            return candidate
    return None


def _read_source(ref: str, timeout: float) -> bytes:
    parsed = urllib.parse.urlparse(ref)
    if parsed.scheme in ("http", "https", "file"):
        req = urllib.request.Request(ref, headers={"User-Agent": "ffn-image-fetch/0.1"})
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.read()
    return Path(ref).read_bytes()


def _fetch_one(sample: LabeledSample, cache_dir: Path, timeout: float) -> FetchRecord:
    cached = cached_image_path(cache_dir, sample.id)
    if cached is not None:
        return FetchRecord(sample.id, "cached", "", str(cached))
    if not sample.image_ref:
        return FetchRecord(sample.id, "failed", "no image reference")
    try:
        payload = _read_source(sample.image_ref, timeout)
    except Exception as exc:  # network errors are recorded, never fatal
        return FetchRecord(sample.id, "failed", f"{type(exc).__name__}: {exc}")
    try:
        with Image.open(io.BytesIO(payload)) as img:
            fmt = img.format
            img.load()
    except Exception as exc:
        return FetchRecord(sample.id, "failed", f"undecodable payload: {exc}")
    target = cache_dir / f"{sample.id}{IMAGE_SUFFIXES.get(fmt, '.img')}"
    tmp = target.with_name(target.name + ".part")
    tmp.write_bytes(payload)
    os.replace(tmp, target)
    return FetchRecord(sample.id, "fetched", "", str(target))


def fetch_images(
    samples: Sequence[LabeledSample], cache_dir, timeout: float = 10.0, max_workers: int = 8
) -> list[FetchRecord]:
    """Download each sample's image into ``cache_dir/<id>.<ext>``.

    Already cached ids are skipped.  The report is ordered by sample id.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        records = list(pool.map(lambda s: _fetch_one(s, cache_dir, timeout), samples))
    return sorted(records, key=lambda r: r.id)


def write_fetch_report(path, records: Iterable[FetchRecord]):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["id", "status", "reason"])
        for r in records:
            writer.writerow([r.id, r.status, r.reason.replace("\t", " ").replace("\n", " ")])


def resolve_image(sample: LabeledSample, image_dir=None, base_dir=None) -> Optional[Path]:
    """Local file for a sample's image: the fetch cache first, then a local image_ref.

    Relative image refs are resolved against ``base_dir`` (usually the
    directory holding the TSV).
    """
    if image_dir is not None:
        hit = cached_image_path(image_dir, sample.id)
        if hit is not None:
            return hit
    if sample.image_ref and "://" not in sample.image_ref:
        local = Path(sample.image_ref)
        if not local.is_absolute() and base_dir is not None:
            local = Path(base_dir) / local
        if local.is_file():
            return local
    return None


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

# Each class has its own keyword pool; filler words are shared so that titles
# are not trivially separable by length or vocabulary size alone.
_CLASS_WORDS = {
    Label.TRUE: ["senate", "budget", "report", "official", "election", "minister"],
    Label.MANIPULATED_CONTENT: ["photoshop", "edited", "doctored", "altered", "retouched", "filter"],
    Label.FALSE_CONNECTION: ["caption", "unrelated", "mislabeled", "wrongly", "mismatch", "context"],
    Label.SATIRE: ["hilarious", "parody", "onion", "joke", "comedian", "spoof"],
    Label.MISLEADING_CONTENT: ["exaggerated", "cherry", "hoax", "rumor", "claim", "conspiracy"],
    Label.IMPOSTER_CONTENT: ["bot", "generated", "automatic", "subreddit", "simulator", "gpt"],
}
_FILLER_WORDS = [
    "city", "people", "man", "woman", "world", "today", "year", "dog", "cat", "car",
    "house", "street", "water", "school", "police", "family", "game", "picture", "video",
    "night", "morning", "tree", "river", "friend", "market", "phone", "window", "train",
    "mountain", "garden",
]
_CLASS_COLORS = {
    Label.TRUE: (200, 40, 40),
    Label.MANIPULATED_CONTENT: (40, 180, 40),
    Label.FALSE_CONNECTION: (40, 40, 200),
    Label.SATIRE: (210, 200, 40),
    Label.MISLEADING_CONTENT: (180, 40, 200),
    Label.IMPOSTER_CONTENT: (40, 190, 190),
}
_CLASS_SHAPES = {
    Label.TRUE: "ellipse",
    Label.MANIPULATED_CONTENT: "rectangle",
    Label.FALSE_CONNECTION: "triangle",
    Label.SATIRE: "hstripes",
    Label.MISLEADING_CONTENT: "vstripes",
    Label.IMPOSTER_CONTENT: "cross",
}


def _synthetic_title(label: Label, rng: np.random.Generator) -> str:
    n_key = int(rng.integers(2, 4))
    n_fill = int(rng.integers(2, 6))
    words = list(rng.choice(_CLASS_WORDS[label], size=n_key, replace=True))
    words += list(rng.choice(_FILLER_WORDS, size=n_fill, replace=True))
    rng.shuffle(words)
    return " ".join(words)


def _synthetic_image(label: Label, rng: np.random.Generator, size: int) -> Image.Image:
    noise = rng.integers(0, 60, size=(size, size, 3), dtype=np.int64)
    base = np.clip(noise + 100, 0, 255).astype(np.uint8)
    img = Image.fromarray(base, mode="RGB")
    draw = ImageDraw.Draw(img)
    col = tuple(int(np.clip(c + rng.integers(-20, 21), 0, 255)) for c in _CLASS_COLORS[label])
    lo = int(rng.integers(0, size // 4))
    hi = size - int(rng.integers(0, size // 4)) - 1
    shape = _CLASS_SHAPES[label]
    if shape == "ellipse":
        draw.ellipse([lo, lo, hi, hi], fill=col)
    elif shape == "rectangle":
        draw.rectangle([lo, lo, hi, hi], fill=col)
    elif shape == "triangle":
        draw.polygon([(lo, hi), (hi, hi), ((lo + hi) // 2, lo)], fill=col)
    elif shape == "hstripes":
        step = max(2, size // 8)
        for y in range(0, size, 2 * step):
            draw.rectangle([0, y, size - 1, y + step - 1], fill=col)
    elif shape == "vstripes":
        step = max(2, size // 8)
        for x in range(0, size, 2 * step):
            draw.rectangle([x, 0, x + step - 1, size - 1], fill=col)
    else:
        w = max(2, size // 6)
        mid = size // 2
        draw.rectangle([mid - w, lo, mid + w, hi], fill=col)
        draw.rectangle([lo, mid - w, hi, mid + w], fill=col)
    return img


def generate_synthetic(
    seed: int,
    per_class_count: int,
    with_images: bool = False,
    image_dir=None,
    split: str = "train",
    image_size: int = 64,
) -> list[LabeledSample]:
    """Balanced six-class dataset whose titles (and images) carry class signal.

    With ``with_images`` each sample gets a PNG under ``image_dir/<id>.png``
    showing a class-specific colour and shape over noise.
    """
    if per_class_count < 1:
        raise ValueError("per_class_count must be >= 1")
    if with_images and image_dir is None:
        raise ValueError("image_dir is required when with_images is set")
    rng = np.random.default_rng(seed)
    labels = [lab for lab in Label for _ in range(per_class_count)]
    order = rng.permutation(len(labels))
    if with_images:
        image_dir = Path(image_dir)
        image_dir.mkdir(parents=True, exist_ok=True)

    samples = []
    for i, idx in enumerate(order):
        label = labels[idx]
        sample_id = f"syn{seed}-{split}-{i:05d}"
        title = _synthetic_title(label, rng)
        image_ref = None
        if with_images:
            path = image_dir / f"{sample_id}.png"
            _synthetic_image(label, rng, image_size).save(path, format="PNG")
            image_ref = str(path)
        samples.append(LabeledSample(sample_id, title, label, split, image_ref))
    return samples


def write_synthetic_dataset(
    out_dir,
    seed: int = 0,
    per_class_count: int = 20,
    with_images: bool = False,
    image_size: int = 64,
    eval_per_class_count: Optional[int] = None,
) -> dict[str, Path]:
    """Write train/validation/test TSVs (and images) for CLI and demo runs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    eval_count = eval_per_class_count or max(1, per_class_count // 2)
    paths = {}
    for offset, split in enumerate(SPLITS):
        count = per_class_count if split == "train" else eval_count
        samples = generate_synthetic(
            seed + 1000 * offset, count, with_images,
            image_dir=out_dir / "images" if with_images else None,
            split=split, image_size=image_size,
        )
        if with_images:
            # relative refs keep the dataset directory relocatable
            samples = [
                LabeledSample(s.id, s.title, s.label, s.split, os.path.relpath(s.image_ref, out_dir))
                for s in samples
            ]
        paths[split] = out_dir / f"{split}.tsv"
        write_dataset(paths[split], samples)
    return paths

