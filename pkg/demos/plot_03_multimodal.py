"""
Early fusion of a title and an image
====================================

The image branch is conv 5x5 -> ReLU -> max pool, twice.  At 560 pixels it
flattens to 56307 numbers, which are concatenated with the 200 text features
before the dense head.  A small-image mode keeps the same layers at a lower
resolution; here 64 pixels flatten to 507 numbers.
"""

import tempfile

import matplotlib.pyplot as plt
import torch

from _common import OUT
from ffn.data import generate_synthetic
from ffn.models import MultimodalCNN
from ffn.models.multimodal import load_and_resize
from ffn.text import TextPipeline
from ffn.trainer import TrainConfig, evaluate, prepare_multimodal, train

###############################################################################
# Full-size shapes.  Nothing is trained at this size.

trace = {}
with torch.no_grad():
    MultimodalCNN(10)(torch.zeros(1, 15, dtype=torch.long), torch.zeros(1, 3, 560, 560), trace)
for k in ("image_conv1", "image_pool1", "image_conv2", "image_pool2", "image_features", "fused"):
    print(f"{k:<15}{trace[k]}")

###############################################################################
# Synthetic images carry a class colour and shape, so both branches are informative.

tmp = tempfile.mkdtemp()
train_s = generate_synthetic(0, 20, with_images=True, image_dir=tmp, image_size=64)
val_s = generate_synthetic(1000, 10, with_images=True, image_dir=tmp, image_size=64, split="validation")

fig, axes = plt.subplots(1, 6, figsize=(9, 1.8))
for ax, label in zip(axes, range(6)):
    sample = next(s for s in train_s if s.label == label)
    ax.imshow(load_and_resize(sample.image_ref, 64).transpose(1, 2, 0))
    ax.set_title(sample.label.display, fontsize=6)
    ax.axis("off")
fig.savefig(OUT / "synthetic_images.png", dpi=120, bbox_inches="tight")

pipeline = TextPipeline.fit(s.title for s in train_s)
tr = prepare_multimodal(train_s, pipeline, image_size=64, preload=True)
va = prepare_multimodal(val_s, pipeline, image_size=64, preload=True)
torch.manual_seed(0)
ckpt, hist = train(MultimodalCNN(len(pipeline.vocab), image_size=64), tr, va, TrainConfig(max_epochs=20))
print(evaluate(ckpt, va).to_table())
