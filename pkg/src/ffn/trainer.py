"""Training loop (Adam + NLL + early stopping), checkpoints and evaluation.

Datasets are ``torch.utils.data.Dataset`` objects whose items are tuples of
model inputs followed by the integer label; :class:`PreparedData` pairs one
with the preprocessing fingerprint it was built under.
"""

from __future__ import annotations

import json
import logging
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader, Dataset, TensorDataset

from .data import LabeledSample, resolve_image
from .metrics import MetricsReport
from .models import build_model
from .models.multimodal import load_and_resize
from .text import DEFAULT_CLEANING, TextPipeline, Vocabulary, clean_text

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "ffn-checkpoint/1"


class TrainingError(RuntimeError):
    pass


class FingerprintMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# Prepared datasets
# ---------------------------------------------------------------------------


@dataclass
class PreparedData:
    dataset: Dataset
    fingerprint: dict
    split: str = "train"
    ids: list[str] = field(default_factory=list)
    excluded: list[tuple[str, str]] = field(default_factory=list)

    def __len__(self):
        return len(self.dataset)

    @property
    def labels(self) -> np.ndarray:
        return np.array([int(self.dataset[i][-1]) for i in range(len(self.dataset))], dtype=np.int64)


def _labels_tensor(samples: Sequence[LabeledSample]) -> torch.Tensor:
    return torch.tensor([int(s.label) for s in samples], dtype=torch.int64)


def prepare_text(samples: Sequence[LabeledSample], pipeline: TextPipeline) -> PreparedData:
    samples = list(samples)
    ids = torch.from_numpy(pipeline.transform(s.title for s in samples))
    split = samples[0].split if samples else "train"
    return PreparedData(TensorDataset(ids, _labels_tensor(samples)), pipeline.fingerprint(), split,
                        [s.id for s in samples])


class ImageTextDataset(Dataset):
    """Token ids held in memory; images decoded from disk on access unless preloaded."""

    def __init__(self, token_ids, paths, labels, image_size, preload=False):
        self.token_ids = torch.as_tensor(token_ids)
        self.paths = list(paths)
        self.labels = torch.as_tensor(labels)
        self.image_size = image_size
        self._images = None
        if preload and self.paths:
            self._images = torch.from_numpy(np.stack([load_and_resize(p, image_size) for p in self.paths]))

    def __len__(self):
        return len(self.paths)

    def __getitem__(self, i):
        img = self._images[i] if self._images is not None else torch.from_numpy(
            load_and_resize(self.paths[i], self.image_size))
        return self.token_ids[i], img, self.labels[i]


def prepare_multimodal(samples, pipeline: TextPipeline, image_dir=None, base_dir=None,
                       image_size=560, preload=False) -> PreparedData:
    """Pair each title with its local image; samples without a decodable image
    are left out and listed in ``PreparedData.excluded``."""
    from PIL import Image

    kept, paths, excluded = [], [], []
    for s in samples:
        path = resolve_image(s, image_dir, base_dir)
        if path is None:
            excluded.append((s.id, "image not found"))
            continue
        try:
            with Image.open(path) as img:
                img.load()
        except Exception as exc:
            excluded.append((s.id, f"undecodable image: {exc}"))
            continue
        kept.append(s)
        paths.append(path)
    if excluded:
        logger.warning("excluded %d of %d samples without a usable image", len(excluded), len(samples))
    ids = pipeline.transform(s.title for s in kept)
    fp = dict(pipeline.fingerprint(), image_size=image_size)
    ds = ImageTextDataset(ids, paths, _labels_tensor(kept), image_size, preload)
    split = kept[0].split if kept else "train"
    return PreparedData(ds, fp, split, [s.id for s in kept], excluded)


def prepare_bert(samples, tokenizer, length=32, clean=False, cleaning=None) -> PreparedData:
    samples = list(samples)
    texts = [" ".join(clean_text(s.title, cleaning)) if clean else s.title for s in samples]
    ids, mask = tokenizer.encode_batch(texts, length)
    fp = {"kind": "wordpiece", "vocab_sha256": tokenizer.sha256(), "max_length": length,
          "clean_text": bool(clean)}
    if clean:
        fp["cleaning"] = (cleaning or DEFAULT_CLEANING).fingerprint()
    ds = TensorDataset(torch.from_numpy(ids), torch.from_numpy(mask), _labels_tensor(samples))
    split = samples[0].split if samples else "train"
    return PreparedData(ds, fp, split, [s.id for s in samples])


# ---------------------------------------------------------------------------
# Loss, config, history
# ---------------------------------------------------------------------------


def nll_loss(logprobs, gold) -> float:
    """Negative log-likelihood of one gold class under a 6-vector of log-probabilities."""
    return float(-np.asarray(logprobs, dtype=np.float64)[int(gold)])


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 50
    patience: Optional[int] = 3  # None disables early stopping
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    restore_best: bool = True
    eval_batch_size: int = 256
    num_workers: int = 0

    def __post_init__(self):
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1 (or None)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.val_loss)

    @property
    def best_epoch(self) -> Optional[int]:
        """1-based epoch with the lowest validation loss (first one on ties)."""
        if not self.val_loss:
            return None
        return int(np.argmin(self.val_loss)) + 1

    def to_dict(self):
        return {"train_loss": self.train_loss, "val_loss": self.val_loss,
                "val_accuracy": self.val_accuracy, "best_epoch": self.best_epoch}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["train_loss"]), list(d["val_loss"]), list(d["val_accuracy"]))


class EarlyStopping:
    """Stop once the monitored loss has not improved for ``patience`` epochs."""

    def __init__(self, patience: Optional[int]):
        self.patience = patience
        self.best = math.inf
        self.wait = 0

    def update(self, loss: float) -> bool:
        """Record one epoch; returns True if it is a new best."""
        if loss < self.best:
            self.best = loss
            self.wait = 0
            return True
        self.wait += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.patience is not None and self.wait >= self.patience


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_DTYPE_SUFFIX = {"float32": ".f32", "int64": ".i64"}


def _write_array(path: Path, arr: np.ndarray):
    dtype = "<f4" if arr.dtype.kind == "f" else "<i8"
    path.write_bytes(np.ascontiguousarray(arr, dtype=dtype).tobytes(order="C"))


def _read_array(path: Path, dtype: str, shape) -> np.ndarray:
    np_dtype = "<f4" if dtype == "float32" else "<i8"
    return np.frombuffer(path.read_bytes(), dtype=np_dtype).reshape(shape).copy()


@dataclass
class ModelCheckpoint:
    """Manifest plus named arrays.

    On disk: ``manifest.json`` (sorted keys), one raw little-endian file per
    array under ``params/`` and ``probe/`` (float32, or int64 for integer
    buffers), and ``vocab.tsv`` / ``wordpiece_vocab.txt`` when available.
    """

    manifest: dict
    params: dict[str, np.ndarray]
    probe: dict[str, np.ndarray] = field(default_factory=dict)
    vocab: Optional[Vocabulary] = None
    wordpiece_vocab: Optional[str] = None

    @property
    def arch(self) -> str:
        return self.manifest["architecture"]

    @property
    def fingerprint(self) -> dict:
        return self.manifest["preprocessing"]

    @classmethod
    def from_model(cls, model, preprocessing: dict, probe_data: Optional[Dataset] = None,
                   vocab: Optional[Vocabulary] = None, wordpiece_vocab=None, **extra) -> "ModelCheckpoint":
        params = {}
        for name, t in model.state_dict().items():
            arr = t.detach().cpu().numpy()
            params[name] = arr.astype(np.float32) if arr.dtype.kind == "f" else arr.astype(np.int64)
        manifest = {
            "format": CHECKPOINT_FORMAT,
            "architecture": model.arch,
            "hparams": model.hparams(),
            "preprocessing": preprocessing,
        }
        manifest.update(extra)
        ckpt = cls(manifest, params, {}, vocab, wordpiece_vocab)
        if probe_data is not None and len(probe_data) > 0:
            ckpt.probe = _make_probe(model, probe_data)
        return ckpt

    def to_model(self):
        model = build_model(self.arch, self.manifest["hparams"])
        state = {k: torch.from_numpy(v) for k, v in self.params.items()}
        model.load_state_dict(state, strict=True)
        model.eval()
        return model

    def save(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        for sub in ("params", "probe"):
            (out_dir / sub).mkdir(parents=True, exist_ok=True)
        arrays = {}
        for group, table in (("params", self.params), ("probe", self.probe)):
            for name, arr in table.items():
                dtype = "float32" if arr.dtype.kind == "f" else "int64"
                rel = f"{group}/{name}{_DTYPE_SUFFIX[dtype]}"
                _write_array(out_dir / rel, arr)
                arrays[f"{group}/{name}"] = {"file": rel, "shape": list(arr.shape), "dtype": dtype}
        manifest = dict(self.manifest, arrays=arrays, byte_order="little", layout="row-major")
        if self.vocab is not None:
            self.vocab.save(out_dir / "vocab.tsv")
            manifest["vocab_file"] = "vocab.tsv"
        if self.wordpiece_vocab is not None:
            (out_dir / "wordpiece_vocab.txt").write_bytes(Path(self.wordpiece_vocab).read_bytes())
            manifest["wordpiece_vocab_file"] = "wordpiece_vocab.txt"
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                               encoding="utf-8")
        return out_dir

    @classmethod
    def load(cls, ckpt_dir) -> "ModelCheckpoint":
        ckpt_dir = Path(ckpt_dir)
        path = ckpt_dir / "manifest.json"
        if not path.is_file():
            raise FileNotFoundError(f"no checkpoint manifest in {ckpt_dir}")
        manifest = json.loads(path.read_text(encoding="utf-8"))
        if manifest.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: unsupported checkpoint format {manifest.get('format')!r}")
        params, probe = {}, {}
        for key, info in manifest.pop("arrays").items():
            group, name = key.split("/", 1)
            arr = _read_array(ckpt_dir / info["file"], info["dtype"], info["shape"])
            (params if group == "params" else probe)[name] = arr
        for k in ("byte_order", "layout"):
            manifest.pop(k, None)
        vocab = wordpiece = None
        if "vocab_file" in manifest:
            vocab = Vocabulary.load(ckpt_dir / manifest.pop("vocab_file"))
        if "wordpiece_vocab_file" in manifest:
            wordpiece = str(ckpt_dir / manifest.pop("wordpiece_vocab_file"))
        return cls(manifest, params, probe, vocab, wordpiece)

    def verify(self, atol: float = 1e-6) -> float:
        """Re-run the stored probe inputs; returns the max abs deviation (raises above ``atol``)."""
        if not self.probe:
            return 0.0
        model = self.to_model()
        n_inputs = len(self.probe) - 1
        inputs = [torch.from_numpy(self.probe[f"input{i}"]) for i in range(n_inputs)]
        with torch.no_grad():
            out = model(*inputs).numpy()
        dev = float(np.max(np.abs(out - self.probe["output"])))
        if dev > atol:
            raise ValueError(f"checkpoint probe deviates by {dev:g} (> {atol:g})")
        return dev


def _make_probe(model, data: Dataset, n: int = 2) -> dict[str, np.ndarray]:
    items = [data[i] for i in range(min(n, len(data)))]
    inputs = [torch.stack([it[j] for it in items]) for j in range(len(items[0]) - 1)]
    model.eval()
    with torch.no_grad():
        out = model(*inputs)
    probe = {f"input{j}": x.numpy() for j, x in enumerate(inputs)}
    probe["output"] = out.numpy().astype(np.float32)
    return probe


# ---------------------------------------------------------------------------
# Train / evaluate
# ---------------------------------------------------------------------------


def _state_copy(model):
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


@torch.no_grad()
def run_inference(model, data, batch_size: int = 256):
    """Mean NLL, predicted classes, gold classes and log-probabilities over a dataset."""
    dataset = data.dataset if isinstance(data, PreparedData) else data
    model.eval()
    total, preds, golds, logps = 0.0, [], [], []
    for batch in DataLoader(dataset, batch_size=batch_size, shuffle=False):
        *inputs, y = batch
        logp = model(*inputs)
        total += float(F.nll_loss(logp, y, reduction="sum"))
        preds.append(logp.argmax(dim=1))
        golds.append(y)
        logps.append(logp)
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot run inference on an empty dataset")
    return (total / n, torch.cat(preds).numpy(), torch.cat(golds).numpy(), torch.cat(logps).numpy())


def train(model, train_data: PreparedData, val_data: PreparedData, config: TrainConfig | None = None,
          vocab: Optional[Vocabulary] = None, wordpiece_vocab=None, extra_manifest: Optional[dict] = None):
    """Train ``model`` in place; returns ``(ModelCheckpoint, TrainHistory)``.

    The checkpoint holds the best-validation-loss parameters unless
    ``config.restore_best`` is False, in which case it holds the final ones.
    """
    config = config or TrainConfig()
    if len(train_data) == 0 or len(val_data) == 0:
        raise ValueError("train and validation data must be non-empty")
    if train_data.fingerprint != val_data.fingerprint:
        raise FingerprintMismatch("train and validation data were preprocessed differently")

    torch.manual_seed(config.seed)
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=config.lr, betas=config.betas, eps=config.eps)
    gen = torch.Generator().manual_seed(config.seed)
    loader = DataLoader(train_data.dataset, batch_size=config.batch_size, shuffle=True,
                        generator=gen, num_workers=config.num_workers)

    history = TrainHistory()
    stopper = EarlyStopping(config.patience)
    best_state = _state_copy(model)
    for epoch in range(1, config.max_epochs + 1):
        model.train()
        total, seen = 0.0, 0
        for b, batch in enumerate(loader):
            *inputs, y = batch
            loss = F.nll_loss(model(*inputs), y)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}: {loss.item()}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(y)
            seen += len(y)
        val_loss, preds, golds, _ = run_inference(model, val_data, config.eval_batch_size)
        history.train_loss.append(total / seen)
        history.val_loss.append(val_loss)
        history.val_accuracy.append(float(np.mean(preds == golds)))
        logger.info("epoch %d: train %.4f  val %.4f  acc %.3f", epoch, total / seen, val_loss,
                    history.val_accuracy[-1])
        if stopper.update(val_loss):
            best_state = _state_copy(model)
        if stopper.should_stop:
            break

    restored = None
    if config.restore_best and history.epochs:
        model.load_state_dict(best_state)
        restored = history.best_epoch
    manifest = {"train_config": config.to_dict(), "restored_epoch": restored,
                "epochs_run": history.epochs}
    manifest.update(extra_manifest or {})
    ckpt = ModelCheckpoint.from_model(model, train_data.fingerprint, val_data.dataset, vocab,
                                      wordpiece_vocab, **manifest)
    return ckpt, history


def evaluate(checkpoint, data: PreparedData, batch_size: int = 256) -> MetricsReport:
    """Full-split metrics for a checkpoint.

    A bare ``nn.Module`` is accepted too; the fingerprint check is then skipped.
    """
    if isinstance(checkpoint, ModelCheckpoint):
        if checkpoint.fingerprint != data.fingerprint:
            raise FingerprintMismatch(
                "data was preprocessed with a different vocabulary/config than the checkpoint: "
                f"checkpoint {checkpoint.fingerprint} vs data {data.fingerprint}")
        model = checkpoint.to_model()
    else:
        model = checkpoint
    loss, preds, golds, _ = run_inference(model, data, batch_size)
    return MetricsReport.from_predictions(preds, golds, loss=loss, split=data.split, n=len(data))


def write_run_manifest(path, config: TrainConfig, dataset_hashes: dict, wall_time: float, **extra):
    info = {
        "train_config": config.to_dict(),
        "seed": config.seed,
        "dataset_sha256": dataset_hashes,
        "wall_time_seconds": wall_time,
        "torch_version": torch.__version__,
        "python_version": platform.python_version(),
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    info.update(extra)
    Path(path).write_text(json.dumps(info, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
