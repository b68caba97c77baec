"""Adam with decoupled weight decay."""

from __future__ import annotations

import numpy as np

from .senet import ModelState, is_decayed


def adam_step(state: ModelState, grads: dict, lr: float, beta1=0.9, beta2=0.98, eps=1e-9, weight_decay=1e-4):
    """One in-place update of ``state.params``; bias-corrected moments."""
    state.step += 1
    t = state.step
    corr1 = 1.0 - beta1**t
    corr2 = 1.0 - beta2**t
    for name, p in state.params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.adam_m[name]
        v = state.adam_v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        if lr == 0:
            continue
        if weight_decay and is_decayed(name):
            p -= (lr * weight_decay) * p
        p -= (lr * (m / corr1) / (np.sqrt(v / corr2) + eps)).astype(p.dtype)
