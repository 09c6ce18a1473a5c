"""
Checking gradients by central differences
=========================================

Every sampled parameter coordinate is nudged by +-1e-3 in float64 and the
resulting slope is compared with autograd.  Coordinates whose nudge flips a
ReLU or moves a max-pool winner are skipped, since the function is not
smooth across the stencil there.
"""

import numpy as np
import torch
import torch.nn.functional as F

from ffn.gradcheck import check_gradients, pass_fraction
from ffn.models import BiLstmCNN, MultimodalCNN, TextCNN

torch.manual_seed(0)
weights = np.random.default_rng(0).uniform(-0.5, 0.5, (12, 300)).astype(np.float32)
ids = torch.randint(1, 12, (2, 15))
images = torch.rand(2, 3, 16, 16, dtype=torch.float64)
y = torch.tensor([0, 3])

models = {
    "text cnn": (TextCNN(12, embedding_weights=weights).double(), lambda m: m(ids)),
    "bilstm-cnn": (BiLstmCNN(12, embedding_weights=weights).double(), lambda m: m(ids)),
    "multimodal": (MultimodalCNN(12, embedding_weights=weights, image_size=16).double(),
                   lambda m: m(ids, images)),
}
for name, (model, fwd) in models.items():
    res = check_gradients(lambda: F.nll_loss(fwd(model), y), model.named_parameters())
    worst = max(res, key=lambda r: r.rel_error)
    print(f"{name:<12}{len(res):>4} coords  pass {pass_fraction(res):.1%}  "
          f"worst {worst.rel_error:.1e} at {worst.name}{list(worst.index)}")
