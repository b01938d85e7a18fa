"""Parameter-holding building blocks composed by the network modules.

Layers register their trainable tensors and persistent buffers under
hierarchical names so the whole model can be checkpointed as a flat
name -> array map. Initialization draws from the caller's Generator in
construction order, which ties the full parameter set to one seed.
"""
from __future__ import annotations

import numpy as np

from . import ops
from .tensor import Tensor, parameter


def uniform_fanin(rng: np.random.Generator, fan_in: int, shape, dtype=np.float32) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Linear:
    def __init__(self, rng: np.random.Generator, d_in: int, d_out: int, dtype=np.float32):
        self.w = parameter(uniform_fanin(rng, d_in, (d_in, d_out), dtype), dtype=dtype)
        self.b = parameter(uniform_fanin(rng, d_in, (d_out,), dtype), dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.w, self.b)

    def named_params(self, prefix: str):
        yield prefix + ".w", self.w
        yield prefix + ".b", self.b

    def named_buffers(self, prefix: str):
        return iter(())


class BatchNorm1d:
    def __init__(self, width: int, dtype=np.float32):
        self.gamma = parameter(np.ones(width, dtype=dtype), dtype=dtype)
        self.beta = parameter(np.zeros(width, dtype=dtype), dtype=dtype)
        self.running_mean = np.zeros(width, dtype=np.float64)
        self.running_var = np.ones(width, dtype=np.float64)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ops.batchnorm_1d(
            x,
            self.gamma,
            self.beta,
            training=training,
            running_mean=self.running_mean,
            running_var=self.running_var,
        )

    def named_params(self, prefix: str):
        yield prefix + ".gamma", self.gamma
        yield prefix + ".beta", self.beta

    def named_buffers(self, prefix: str):
        yield prefix + ".running_mean", self.running_mean
        yield prefix + ".running_var", self.running_var


class Mlp:
    """linear -> relu stack; the final layer is linear only."""

    def __init__(self, rng: np.random.Generator, widths, dtype=np.float32):
        if len(widths) < 2:
            raise ValueError("Mlp needs at least input and output widths")
        self.layers = [Linear(rng, widths[i], widths[i + 1], dtype) for i in range(len(widths) - 1)]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ops.relu(x)
        return x

    def named_params(self, prefix: str):
        for i, layer in enumerate(self.layers):
            yield from layer.named_params(f"{prefix}.{i}")

    def named_buffers(self, prefix: str):
        return iter(())


def collect_params(named) -> list[tuple[str, Tensor]]:
    """Materialize a named_params iterator, checking name uniqueness."""
    out = list(named)
    names = [n for n, _ in out]
    if len(set(names)) != len(names):
        raise ValueError("duplicate parameter names in module tree")
    return out
