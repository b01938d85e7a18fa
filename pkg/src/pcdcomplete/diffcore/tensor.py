"""Dense-tensor substrate with tape-based reverse-mode differentiation.

A Graph is a Wengert list: ops append one record each during the forward
pass, and backward() replays the records in reverse insertion order exactly
once. Tensors are thin wrappers over numpy arrays (float32 by default;
float64 is used by the gradient checker and by scalar loss accumulation).
"""
from __future__ import annotations

import itertools
import math
from typing import Callable, Optional

import numpy as np

from ..errors import NonFiniteValue, NonScalarLoss

_ids = itertools.count()
_ACTIVE: list["Graph"] = []


def _finite_or_raise(arr: np.ndarray, op: str) -> None:
    # min/max both propagate NaN and keep Inf, so two reductions suffice
    if arr.size and not (math.isfinite(float(arr.min())) and math.isfinite(float(arr.max()))):
        raise NonFiniteValue(f"non-finite values produced by op '{op}'")


class Tensor:
    """Shape-carrying view over a contiguous numpy buffer."""

    __slots__ = ("data", "requires_grad", "grad", "gid")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        arr = np.ascontiguousarray(data, dtype=dtype)
        _finite_or_raise(arr, "tensor")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.gid = next(_ids)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise NonScalarLoss(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Node:
    """One op record: output, its inputs, and the matching backward rule."""

    __slots__ = ("op", "out", "parents", "backward_fn")

    def __init__(self, op: str, out: Tensor, parents: tuple, backward_fn: Callable):
        self.op = op
        self.out = out
        self.parents = parents
        self.backward_fn = backward_fn


class Graph:
    """Append-only op tape; single-owner during construction and backward."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Graph":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.pop()

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Accumulate gradients of loss w.r.t. every requires_grad leaf.

        Walks the tape once in reverse insertion order. Inputs always
        precede outputs on the tape, so every tensor's gradient is complete
        before its producing node is visited; whatever remains unconsumed
        after the walk belongs to leaves. Returns a map from tensor id to
        gradient array; leaf tensors also get .grad populated.
        """
        if loss.data.size != 1:
            raise NonScalarLoss(f"loss must be scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {loss.gid: np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {loss.gid: loss}
        for node in reversed(self.nodes):
            gout = grads.pop(node.out.gid, None)
            leaves.pop(node.out.gid, None)
            if gout is None:
                continue
            for parent, g in zip(node.parents, node.backward_fn(gout)):
                if g is None or not parent.requires_grad:
                    continue
                if parent.gid in grads:
                    grads[parent.gid] += g
                else:
                    grads[parent.gid] = g
                    leaves[parent.gid] = parent
        for gid, tensor in leaves.items():
            if tensor.grad is None:
                tensor.grad = grads[gid]
            else:
                tensor.grad = tensor.grad + grads[gid]
        return grads


def active_graph() -> Optional[Graph]:
    return _ACTIVE[-1] if _ACTIVE else None


def record(op: str, out: Tensor, parents: tuple, backward_fn: Callable) -> Tensor:
    """Mark out as derived from parents; append to the active tape if any."""
    out.requires_grad = any(p.requires_grad for p in parents)
    graph = active_graph()
    if graph is not None and out.requires_grad:
        graph.nodes.append(Node(op, out, parents, backward_fn))
    return out


def constant(data, dtype=np.float32) -> Tensor:
    return Tensor(data, requires_grad=False, dtype=dtype)


def parameter(data, dtype=np.float32) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype)
