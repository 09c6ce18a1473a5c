"""Early-fusion text + image CNN.

The image branch is two (conv 5x5 -> ReLU -> maxpool 2x2) stages, 3 -> 6 -> 3
channels.  At the canonical 560 x 560 input the chain is
6x556x556 -> 6x278x278 -> 3x274x274 -> 3x137x137 -> 56307 features.  Any
other ``image_size`` (the small-image mode used in tests) keeps the same
layer pattern and recomputes the flatten length.
"""

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from torch import nn

from ..labels import NUM_CLASSES
from ..text import SEQ_LEN
from .text_cnn import TEXT_FEATURES, TextCnnEncoder

IMAGE_SIZE = 560
KERNEL = 5


def image_flat_dim(image_size: int) -> int:
    side = image_size
    for _ in range(2):
        side = (side - KERNEL + 1) // 2
    if side < 1:
        raise ValueError(f"image_size {image_size} is too small for the image branch")
    return 3 * side * side


def load_and_resize(path, size: int = IMAGE_SIZE) -> np.ndarray:
    """Decode an image to a float32 (3, size, size) RGB array in [0, 1].

    Resizing uses Pillow's BILINEAR filter on the 8-bit RGB image; grayscale
    and palette images are expanded to three channels and alpha is dropped.
    """
    with Image.open(path) as img:
        img = img.convert("RGB")
        if img.size != (size, size):
            img = img.resize((size, size), resample=Image.BILINEAR)
        arr = np.asarray(img, dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


class ImageBranch(nn.Module):
    def __init__(self, image_size=IMAGE_SIZE):
        super().__init__()
        self.image_size = image_size
        self.conv1 = nn.Conv2d(3, 6, kernel_size=KERNEL, stride=1, padding=0)
        self.conv2 = nn.Conv2d(6, 3, kernel_size=KERNEL, stride=1, padding=0)
        self.flat_dim = image_flat_dim(image_size)

    def forward(self, images, trace=None):
        expected = (3, self.image_size, self.image_size)
        if images.shape[1:] != expected:
            raise ValueError(f"expected (B, {expected}) images, got {tuple(images.shape)}")
        c1 = F.relu(self.conv1(images))
        p1 = F.max_pool2d(c1, 2, 2)
        c2 = F.relu(self.conv2(p1))
        p2 = F.max_pool2d(c2, 2, 2)
        flat = p2.flatten(1)  # channel-major, then row-major
        if trace is not None:
            trace["image_conv1"] = tuple(c1.shape[1:])
            trace["image_pool1"] = tuple(p1.shape[1:])
            trace["image_conv2"] = tuple(c2.shape[1:])
            trace["image_pool2"] = tuple(p2.shape[1:])
            trace["image_features"] = tuple(flat.shape[1:])
        return flat


class MultimodalCNN(nn.Module):
    arch = "multimodal"

    def __init__(self, vocab_size, static_embeddings=False, embedding_weights=None,
                 hidden=256, seq_len=SEQ_LEN, image_size=IMAGE_SIZE):
        super().__init__()
        self.hidden = hidden
        self.text = TextCnnEncoder(vocab_size, static_embeddings, embedding_weights, seq_len)
        self.image = ImageBranch(image_size)
        self.fused_dim = TEXT_FEATURES + self.image.flat_dim
        self.dense1 = nn.Linear(self.fused_dim, hidden)
        self.dense2 = nn.Linear(hidden, NUM_CLASSES)

    def hparams(self):
        return {
            "vocab_size": self.text.embedding.num_embeddings,
            "static_embeddings": self.text.static_embeddings,
            "hidden": self.hidden,
            "seq_len": self.text.seq_len,
            "image_size": self.image.image_size,
        }

    def fuse(self, ids, images, trace=None):
        if ids is None or images is None:
            raise ValueError("the multimodal model needs both text and image input")
        fused = torch.cat([self.text(ids, trace), self.image(images, trace)], dim=1)
        if trace is not None:
            trace["fused"] = tuple(fused.shape[1:])
        return fused

    def forward(self, ids, images, trace=None):
        h = F.relu(self.dense1(self.fuse(ids, images, trace)))
        logits = self.dense2(h)
        if trace is not None:
            trace["dense1"] = tuple(h.shape[1:])
            trace["logits"] = tuple(logits.shape[1:])
        return F.log_softmax(logits, dim=1)
