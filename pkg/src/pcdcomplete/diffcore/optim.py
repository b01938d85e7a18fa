"""Adam with bias correction; deterministic given identical gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch
from .tensor import Tensor


@dataclass
class AdamState:
    step: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: list[Tensor],
    grads: dict[int, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One Adam update over params, consuming grads keyed by tensor id.

    Parameters without a gradient entry are treated as zero-gradient
    (their moments decay, which is a no-op while the moments are zero).
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p in params:
        m = state.m.get(p.gid)
        if m is None:
            m = state.m[p.gid] = np.zeros_like(p.data)
            state.v[p.gid] = np.zeros_like(p.data)
        v = state.v[p.gid]
        g = grads.get(p.gid)
        if g is not None and g.shape != p.data.shape:
            raise ShapeMismatch(f"adam_step: grad {g.shape} vs param {p.data.shape}")
        m *= beta1
        v *= beta2
        if g is not None:
            m += (1.0 - beta1) * g
            v += (1.0 - beta2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state
