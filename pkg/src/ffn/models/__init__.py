"""Model architectures and a small registry used to rebuild them from checkpoints."""

import numpy as np
import torch

from ..labels import Label

from .bert import BertClassifier, StubEncoder, build_encoder
from .bilstm_cnn import BiLstmCNN
from .multimodal import MultimodalCNN
from .text_cnn import TextCNN, TextCnnEncoder

ARCHITECTURES = {
    TextCNN.arch: TextCNN,
    BiLstmCNN.arch: BiLstmCNN,
    MultimodalCNN.arch: MultimodalCNN,
    BertClassifier.arch: BertClassifier,
}


def build_model(arch, hparams, pretrained=False):
    """Instantiate an architecture from its ``hparams()`` (weights left at init)."""
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}")
    if arch == BertClassifier.arch:
        hp = dict(hparams)
        encoder = build_encoder(hp.pop("encoder"), pretrained=pretrained)
        return BertClassifier(encoder, **hp)
    return ARCHITECTURES[arch](**hparams)


def predict(logprobs):
    """Argmax class index per row; ties go to the lowest index."""
    return torch.as_tensor(logprobs).argmax(dim=-1)


def predict_label(logprobs) -> Label:
    """Class of a single 6-vector of log-probabilities (lowest index wins ties)."""
    return Label(int(np.argmax(np.asarray(logprobs))))
