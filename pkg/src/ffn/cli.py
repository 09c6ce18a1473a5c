"""``ffn`` command line: stats, preprocess, fetch-images, train, evaluate, predict, synth.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training failure.
Settings resolve as built-in defaults < ``--config`` JSON file < explicit flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .data import (
    DataError,
    DatasetSchema,
    class_distribution,
    fetch_images,
    file_sha256,
    load_dataset,
    write_fetch_report,
    write_synthetic_dataset,
)
from .embeddings import EmbeddingConfig, EmbeddingError, init_embedding_matrix
from .labels import SPLITS, Label
from .models.bert import EncoderUnavailable
from .text import DEFAULT_CLEANING, TextPipeline, Vocabulary, clean_text, length_percentiles, raw_tokens
from .trainer import (
    FingerprintMismatch,
    ModelCheckpoint,
    TrainConfig,
    TrainingError,
    evaluate,
    prepare_bert,
    prepare_multimodal,
    prepare_text,
    train,
    write_run_manifest,
)

logger = logging.getLogger("ffn")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRAIN = 0, 1, 2, 3
DATA_DIR_ENV = "FFN_DATA_DIR"
THRESHOLDS = (10, 15, 20, 25)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    model: str = "cnn"
    embedding_init: str = "random"
    embedding_mode: str = "dynamic"
    glove_path: Optional[str] = None
    data_dir: Optional[str] = None
    out: Optional[str] = None
    image_dir: Optional[str] = None
    image_size: int = 560
    bert_dir: Optional[str] = None
    bert_stub: bool = False
    bert_max_length: int = 32
    bert_clean_text: bool = False
    schema: str = "identity"
    seed: int = 0
    lr: Optional[float] = None
    batch_size: int = 64
    max_epochs: Optional[int] = None
    patience: Optional[int] = 3
    hidden: Optional[int] = None
    train_file: str = "train.tsv"
    validation_file: str = "validation.tsv"
    test_file: str = "test.tsv"

    def validate(self):
        if self.model not in ("cnn", "bilstm", "bert", "multimodal"):
            raise UsageError(f"unknown model {self.model!r}")
        if self.embedding_init not in ("random", "glove"):
            raise UsageError(f"unknown embedding init {self.embedding_init!r}")
        if self.embedding_mode not in ("static", "dynamic"):
            raise UsageError(f"unknown embedding mode {self.embedding_mode!r}")
        if self.model != "bert" and self.embedding_init == "glove" and not self.glove_path:
            raise UsageError("--embedding-init glove requires --glove-path")
        if self.model == "bert" and not self.bert_dir:
            raise UsageError("--model bert requires --bert-dir (directory with vocab.txt)")
        if self.schema not in ("identity", "fakeddit"):
            raise UsageError(f"unknown schema {self.schema!r}")

    def split_file(self, split: str) -> Path:
        name = {"train": self.train_file, "validation": self.validation_file, "test": self.test_file}[split]
        return Path(self.data_dir) / name

    def dataset_schema(self) -> DatasetSchema:
        return DatasetSchema.fakeddit() if self.schema == "fakeddit" else DatasetSchema()

    def resolved_image_dir(self) -> Path:
        if self.image_dir:
            return Path(self.image_dir)
        return Path(self.data_dir) / "images"


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def resolve_config(args) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            file_values = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON: {exc}") from exc
        unknown = set(file_values) - _CONFIG_KEYS
        if unknown:
            raise UsageError(f"{path}: unknown config keys {sorted(unknown)}")
        values.update(file_values)
    for key in _CONFIG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    cfg = RunConfig(**values)
    if cfg.data_dir is None:
        cfg.data_dir = os.environ.get(DATA_DIR_ENV)
    return cfg


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _require_dir(value, flag):
    if not value:
        raise UsageError(f"{flag} is required")
    return Path(value)


def _load_split(cfg: RunConfig, split: str, multimodal=False):
    loaded = load_dataset(cfg.split_file(split), cfg.dataset_schema(), split, multimodal=multimodal)
    if loaded.rejected:
        logger.warning("%s: %d rows rejected", split, len(loaded.rejected))
    return loaded


def _available_splits(cfg: RunConfig):
    return [s for s in SPLITS if cfg.split_file(s).is_file()]


def _bert_tokenizer(vocab_path):
    from .models.bert import WordPieceTokenizer

    return WordPieceTokenizer(vocab_path)


def _prepare(cfg: RunConfig, samples, pipeline=None, tokenizer=None):
    if cfg.model == "bert":
        return prepare_bert(samples, tokenizer, cfg.bert_max_length, cfg.bert_clean_text)
    if cfg.model == "multimodal":
        data = prepare_multimodal(samples, pipeline, cfg.resolved_image_dir(), cfg.data_dir, cfg.image_size)
        if len(data) == 0:
            raise DataError("no samples with a usable image")
        return data
    return prepare_text(samples, pipeline)


def _build_model(cfg: RunConfig, pipeline):
    from .models import BertClassifier, BiLstmCNN, MultimodalCNN, TextCNN
    from .models.bert import HFBertEncoder, StubEncoder

    torch.manual_seed(cfg.seed)
    if cfg.model == "bert":
        tok = _bert_tokenizer(Path(cfg.bert_dir) / "vocab.txt")
        encoder = StubEncoder(tok.vocab_size, cfg.seed) if cfg.bert_stub else HFBertEncoder(cfg.bert_dir)
        return BertClassifier(encoder, cfg.bert_max_length, cfg.bert_clean_text), None
    emb_cfg = EmbeddingConfig(
        init_mode=cfg.embedding_init, trainable=cfg.embedding_mode,
        glove_path=cfg.glove_path if cfg.embedding_init == "glove" else None, seed=cfg.seed,
    )
    emb = init_embedding_matrix(pipeline.vocab, emb_cfg)
    static = emb_cfg.is_static
    kw = {"hidden": cfg.hidden} if cfg.hidden else {}
    if cfg.model == "cnn":
        model = TextCNN(len(pipeline.vocab), static, emb.vectors, **kw)
    elif cfg.model == "bilstm":
        model = BiLstmCNN(len(pipeline.vocab), static, emb.vectors, **kw)
    else:
        model = MultimodalCNN(len(pipeline.vocab), static, emb.vectors, image_size=cfg.image_size, **kw)
    info = emb_cfg.to_dict()
    info["coverage"] = emb.coverage
    return model, info


def _pipeline_for_checkpoint(ckpt: ModelCheckpoint, vocab_override=None) -> Optional[TextPipeline]:
    if ckpt.arch == "bert":
        return None
    vocab = Vocabulary.load(vocab_override) if vocab_override else ckpt.vocab
    if vocab is None:
        raise DataError("checkpoint has no vocabulary file")
    return TextPipeline(vocab, DEFAULT_CLEANING, ckpt.fingerprint["seq_len"])


def _config_from_checkpoint(ckpt: ModelCheckpoint, args) -> RunConfig:
    run = ckpt.manifest.get("run_config", {})
    cfg = RunConfig(**{k: v for k, v in run.items() if k in _CONFIG_KEYS})
    for key in ("data_dir", "image_dir", "out"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    if cfg.data_dir is None:
        cfg.data_dir = os.environ.get(DATA_DIR_ENV)
    return cfg


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    out = _require_dir(args.out, "--out")
    paths = write_synthetic_dataset(out, seed=args.seed or 0, per_class_count=args.per_class,
                                    with_images=args.with_images, image_size=args.synth_image_size)
    for split, p in paths.items():
        print(f"{split}\t{p}")
    return EXIT_OK


def _plot_stats(dist, percentiles, out: Path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    splits = list(dist.counts)
    fig, axes = plt.subplots(1, len(splits), figsize=(5 * len(splits), 4), squeeze=False)
    names = [lab.display for lab in Label]
    for ax, split in zip(axes[0], splits):
        ax.bar(range(len(Label)), [dist.counts[split][lab] for lab in Label])
        ax.set_xticks(range(len(Label)))
        ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
        ax.set_title(f"{split} (n={dist.total(split)})")
    fig.tight_layout()
    fig.savefig(out / "class_distribution.png", dpi=100)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.8 / max(1, len(percentiles))
    for i, (key, table) in enumerate(sorted(percentiles.items())):
        ax.bar(np.arange(len(THRESHOLDS)) + i * width, [table[t] for t in THRESHOLDS], width, label=key)
    ax.set_xticks(np.arange(len(THRESHOLDS)) + 0.4 - width / 2)
    ax.set_xticklabels([f"< {t}" for t in THRESHOLDS])
    ax.set_ylabel("% of texts")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out / "length_percentiles.png", dpi=100)
    plt.close(fig)


def cmd_stats(args) -> int:
    cfg = resolve_config(args)
    _require_dir(cfg.data_dir, "--data-dir")
    out = _require_dir(cfg.out, "--out")
    splits = _available_splits(cfg)
    if not splits:
        raise DataError(f"no split files found in {cfg.data_dir}")
    samples, percentiles = [], {}
    for split in splits:
        loaded = _load_split(cfg, split, multimodal=args.multimodal)
        if not loaded.samples:
            continue
        samples.extend(loaded.samples)
        titles = [s.title for s in loaded.samples]
        percentiles[f"{split}/raw"] = length_percentiles([raw_tokens(t) for t in titles], THRESHOLDS)
        percentiles[f"{split}/cleaned"] = length_percentiles([clean_text(t) for t in titles], THRESHOLDS)
    if not samples:
        raise DataError("no samples in any split")
    dist = class_distribution(samples)
    out.mkdir(parents=True, exist_ok=True)
    report = {"class_distribution": dist.to_dict(),
              "length_percentiles": {k: {str(t): v for t, v in tab.items()} for k, tab in percentiles.items()}}
    (out / "stats.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    lines = ["Class distribution"]
    for split in dist.counts:
        lines.append(f"  {split} (n={dist.total(split)})")
        for lab in Label:
            lines.append(f"    {lab.display:<22}{dist.counts[split][lab]:>9}  {dist.proportions[split][lab]:7.2%}")
    lines.append("% of texts shorter than N tokens (raw = whitespace tokens, cleaned = after preprocessing)")
    lines.append("  " + " " * 20 + "".join(f"{'<' + str(t):>8}" for t in THRESHOLDS))
    for key, tab in percentiles.items():
        lines.append(f"  {key:<20}" + "".join(f"{tab[t]:8.1f}" for t in THRESHOLDS))
    text = "\n".join(lines) + "\n"
    (out / "stats.txt").write_text(text, encoding="utf-8")
    _plot_stats(dist, percentiles, out)
    print(text, end="")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = resolve_config(args)
    _require_dir(cfg.data_dir, "--data-dir")
    out = _require_dir(cfg.out, "--out")
    train_split = _load_split(cfg, "train")
    pipeline = TextPipeline.fit(s.title for s in train_split)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.vocab.save(out / "vocab.tsv")
    (out / "fingerprint.json").write_text(json.dumps(pipeline.fingerprint(), indent=2, sort_keys=True) + "\n",
                                          encoding="utf-8")
    for split in _available_splits(cfg):
        loaded = train_split if split == "train" else _load_split(cfg, split)
        np.savez(out / f"encoded_{split}.npz",
                 ids=pipeline.transform(s.title for s in loaded),
                 labels=np.array([int(s.label) for s in loaded], dtype=np.int64),
                 sample_ids=np.array([s.id for s in loaded]))
        print(f"{split}: {len(loaded)} samples encoded")
    print(f"vocabulary size {len(pipeline.vocab)} -> {out / 'vocab.tsv'}")
    return EXIT_OK


def cmd_fetch_images(args) -> int:
    cfg = resolve_config(args)
    _require_dir(cfg.data_dir, "--data-dir")
    out = _require_dir(cfg.out, "--out")
    cache = Path(cfg.image_dir) if cfg.image_dir else out / "images"
    splits = [args.split] if args.split else _available_splits(cfg)
    records = []
    for split in splits:
        records.extend(fetch_images(list(_load_split(cfg, split, multimodal=True)), cache,
                                    timeout=args.timeout, max_workers=args.workers))
    records.sort(key=lambda r: r.id)
    out.mkdir(parents=True, exist_ok=True)
    write_fetch_report(out / "fetch_report.tsv", records)
    counts = {k: sum(r.status == k for r in records) for k in ("fetched", "cached", "failed")}
    print(" ".join(f"{k}={v}" for k, v in counts.items()))
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    cfg.validate()
    _require_dir(cfg.data_dir, "--data-dir")
    out = _require_dir(cfg.out, "--out")
    if cfg.model == "multimodal" and not cfg.resolved_image_dir().is_dir():
        raise UsageError(f"multimodal training needs an image directory (looked for {cfg.resolved_image_dir()})")

    multimodal = cfg.model == "multimodal"
    train_split = _load_split(cfg, "train", multimodal)
    val_split = _load_split(cfg, "validation", multimodal)
    if not train_split.samples or not val_split.samples:
        raise DataError("train and validation splits must be non-empty")

    pipeline = tokenizer = None
    if cfg.model == "bert":
        tokenizer = _bert_tokenizer(Path(cfg.bert_dir) / "vocab.txt")
    else:
        pipeline = TextPipeline.fit(s.title for s in train_split)
    try:
        model, emb_info = _build_model(cfg, pipeline)
    except EmbeddingError as exc:
        raise DataError(str(exc)) from exc
    train_data = _prepare(cfg, train_split.samples, pipeline, tokenizer)
    val_data = _prepare(cfg, val_split.samples, pipeline, tokenizer)

    bert = cfg.model == "bert"
    tcfg = TrainConfig(
        lr=cfg.lr if cfg.lr is not None else (2e-5 if bert else 1e-3),
        batch_size=cfg.batch_size,
        max_epochs=cfg.max_epochs if cfg.max_epochs is not None else (2 if bert else 50),
        patience=None if bert else cfg.patience,
        restore_best=not bert,
        seed=cfg.seed,
    )
    start = time.time()
    try:
        ckpt, history = train(
            model, train_data, val_data, tcfg,
            vocab=pipeline.vocab if pipeline else None,
            wordpiece_vocab=tokenizer.vocab_path if tokenizer else None,
            extra_manifest={"embedding": emb_info, "run_config": _portable_run_config(cfg)},
        )
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    wall = time.time() - start

    out.mkdir(parents=True, exist_ok=True)
    ckpt.save(out / "checkpoint")
    (out / "history.json").write_text(history.to_json(), encoding="utf-8")
    hashes = {s: file_sha256(cfg.split_file(s)) for s in ("train", "validation")}
    write_run_manifest(out / "run_manifest.json", tcfg, hashes, wall, run_config=vars(cfg),
                       excluded={"train": len(train_data.excluded), "validation": len(val_data.excluded)})
    print(f"trained {ckpt.arch} for {history.epochs} epochs (best epoch {history.best_epoch}, "
          f"val loss {min(history.val_loss) if history.val_loss else float('nan'):.4f}) -> {out}")
    return EXIT_OK


def _portable_run_config(cfg: RunConfig) -> dict:
    d = vars(cfg).copy()
    for key in ("data_dir", "out", "image_dir"):
        d.pop(key)
    return d


def cmd_evaluate(args) -> int:
    ckpt = ModelCheckpoint.load(_require_dir(args.checkpoint, "--checkpoint"))
    cfg = _config_from_checkpoint(ckpt, args)
    _require_dir(cfg.data_dir, "--data-dir")
    out = _require_dir(cfg.out, "--out")
    loaded = _load_split(cfg, args.split, multimodal=ckpt.arch == "multimodal")
    if not loaded.samples:
        raise DataError(f"split {args.split} is empty")
    pipeline = _pipeline_for_checkpoint(ckpt, args.vocab)
    tokenizer = _bert_tokenizer(ckpt.wordpiece_vocab) if ckpt.arch == "bert" else None
    if ckpt.arch == "multimodal":
        cfg.image_size = ckpt.manifest["hparams"]["image_size"]
    data = _prepare(cfg, loaded.samples, pipeline, tokenizer)
    report = evaluate(ckpt, data)
    txt, js = report.save(out, stem=f"report_{args.split}")
    print(report.to_table(), end="")
    print(f"written {txt} and {js}")
    return EXIT_OK


def cmd_predict(args) -> int:
    from .models.multimodal import load_and_resize

    ckpt = ModelCheckpoint.load(_require_dir(args.checkpoint, "--checkpoint"))
    model = ckpt.to_model()
    if ckpt.arch == "multimodal" and not args.image:
        raise UsageError("this checkpoint is multimodal; --image is required")
    if ckpt.arch == "bert":
        hp = ckpt.manifest["hparams"]
        title = " ".join(clean_text(args.title)) if hp["clean_text"] else args.title
        enc = _bert_tokenizer(ckpt.wordpiece_vocab).encode(title, hp["max_length"])
        inputs = [torch.from_numpy(enc.ids)[None], torch.from_numpy(enc.mask)[None]]
    else:
        pipeline = _pipeline_for_checkpoint(ckpt)
        inputs = [torch.from_numpy(pipeline.transform([args.title]))]
        if ckpt.arch == "multimodal":
            size = ckpt.manifest["hparams"]["image_size"]
            try:
                inputs.append(torch.from_numpy(load_and_resize(args.image, size))[None])
            except (OSError, ValueError) as exc:
                raise DataError(f"cannot read image {args.image}: {exc}") from exc
    with torch.no_grad():
        probs = model(*inputs).exp()[0].double().numpy()
    probs = probs / probs.sum()
    pred = Label(int(np.argmax(probs)))
    print(pred.display)
    for lab in Label:
        print(f"{lab.display}\t{probs[lab]:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p):
    p.add_argument("--data-dir", dest="data_dir", help=f"dataset directory (default: ${DATA_DIR_ENV})")
    p.add_argument("--out", help="output directory; all files are written below it")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="JSON file with RunConfig keys; explicit flags take precedence")
    p.add_argument("--schema", choices=["identity", "fakeddit"], help="label-number mapping of the TSVs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ffn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--with-images", action="store_true")
    p.add_argument("--image-size", dest="synth_image_size", type=int, default=64)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="class distribution and title-length table")
    _add_common(p)
    p.add_argument("--multimodal", action="store_true", help="only count rows with an image")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("preprocess", help="build the vocabulary and encode every split")
    _add_common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("fetch-images", help="download images into a local cache")
    _add_common(p)
    p.add_argument("--image-dir", dest="image_dir", help="cache directory (default: OUT/images)")
    p.add_argument("--split", choices=SPLITS)
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--workers", type=int, default=8)
    p.set_defaults(func=cmd_fetch_images)

    p = sub.add_parser("train", help="train a model")
    _add_common(p)
    p.add_argument("--model", choices=["cnn", "bilstm", "bert", "multimodal"])
    p.add_argument("--embedding-init", dest="embedding_init", choices=["random", "glove"])
    p.add_argument("--embedding-mode", dest="embedding_mode", choices=["static", "dynamic"])
    p.add_argument("--glove-path", dest="glove_path")
    p.add_argument("--image-dir", dest="image_dir")
    p.add_argument("--image-size", dest="image_size", type=int)
    p.add_argument("--bert-dir", dest="bert_dir")
    p.add_argument("--bert-stub", dest="bert_stub", action="store_true", default=None,
                   help="use the offline stub encoder instead of pretrained weights")
    p.add_argument("--bert-clean-text", dest="bert_clean_text", action="store_true", default=None)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--hidden", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metrics report for a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--image-dir", dest="image_dir")
    p.add_argument("--vocab", help="encode with this vocabulary instead of the checkpoint's")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="classify one title (and image)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--title", required=True)
    p.add_argument("--image")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ffn: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FingerprintMismatch, FileNotFoundError, EmbeddingError, EncoderUnavailable) as exc:
        print(f"ffn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"ffn: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAIN


if __name__ == "__main__":
    sys.exit(main())
