"""Central finite-difference checks of autograd gradients.

ReLU and max pooling are only piecewise smooth.  A central difference whose
stencil crosses a kink averages two slopes and is not a valid reference, so
each sampled coordinate is tested for that (the activation pattern at
``x - eps`` and ``x + eps`` must match the one at ``x``) and redrawn if it
straddles one.
"""

from dataclasses import dataclass

import numpy as np
import torch
from torch.overrides import TorchFunctionMode


@dataclass
class GradCheckResult:
    name: str
    index: tuple
    analytic: float
    numeric: float

    @property
    def rel_error(self) -> float:
        diff = abs(self.analytic - self.numeric)
        scale = max(abs(self.analytic), abs(self.numeric))
        # both effectively zero: nothing to compare
        if scale < 1e-10:
            return 0.0 if diff < 1e-10 else float("inf")
        return diff / scale


class ActivationPattern(TorchFunctionMode):
    """Records ReLU on/off masks and max/max-pool argmax indices during a forward pass."""

    def __init__(self):
        super().__init__()
        self.pattern = []

    def __torch_function__(self, func, types, args=(), kwargs=None):
        kwargs = kwargs or {}
        out = func(*args, **kwargs)
        name = getattr(func, "__name__", "")
        if name in ("relu", "relu_"):
            self.pattern.append(out.detach() > 0)
        elif "max_pool2d" in name:
            _, idx = torch.nn.functional.max_pool2d_with_indices(*args, **kwargs)
            self.pattern.append(idx)
        elif name == "max" and ("dim" in kwargs or len(args) > 1):
            self.pattern.append(out.indices)
        return out


def _pattern(loss_fn):
    with ActivationPattern() as mode:
        value = loss_fn().item()
    return value, mode.pattern


def _same(a, b):
    return len(a) == len(b) and all(torch.equal(x, y) for x, y in zip(a, b))


def check_gradients(loss_fn, params, coords_per_param=8, eps=1e-3, seed=0, max_redraws=50):
    """Compare d(loss)/d(param) from autograd with central differences.

    ``loss_fn()`` must rebuild the scalar loss from the current parameter
    values; ``params`` is an iterable of ``(name, tensor)`` pairs (use
    float64 tensors).  ``coords_per_param`` coordinates are sampled per
    tensor among those whose stencil stays on one smooth piece.
    """
    rng = np.random.default_rng(seed)
    params = [(n, p) for n, p in params if p.requires_grad]
    for _, p in params:
        p.grad = None
    loss_fn().backward()
    with torch.no_grad():
        _, base = _pattern(loss_fn)
    results = []
    for name, p in params:
        grad = p.grad.detach().clone()
        order = rng.permutation(p.numel())
        want = min(coords_per_param, p.numel())
        taken = tried = 0
        for flat in order:
            if taken == want or tried == want + max_redraws:
                break
            tried += 1
            idx = np.unravel_index(int(flat), tuple(p.shape))
            with torch.no_grad():
                orig = p[idx].item()
                p[idx] = orig + eps
                plus, pat_plus = _pattern(loss_fn)
                p[idx] = orig - eps
                minus, pat_minus = _pattern(loss_fn)
                p[idx] = orig
            if not (_same(base, pat_plus) and _same(base, pat_minus)):
                continue
            taken += 1
            results.append(GradCheckResult(name, tuple(int(i) for i in idx), grad[idx].item(),
                                           (plus - minus) / (2 * eps)))
    return results


def pass_fraction(results, tol=1e-2) -> float:
    return float(np.mean([r.rel_error < tol for r in results]))
