"""Differentiable operations over Tensors.

Each op computes its forward value with numpy, validates shapes, and
registers a closure implementing the exact analytic vector-Jacobian
product. The set is intentionally exactly what the completion network
needs; no general broadcasting.
"""
from __future__ import annotations

import numpy as np

from .. import geomcore
from ..errors import DegenerateBatch, EmptyCloud, ShapeMismatch
from .tensor import Tensor, _finite_or_raise, _ids, record


def _out(op: str, data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    _finite_or_raise(data, op)
    t = Tensor.__new__(Tensor)
    t.data = np.ascontiguousarray(data)
    t.requires_grad = False
    t.grad = None
    t.gid = next(_ids)
    return record(op, t, parents, backward_fn)


def _scalar(g) -> float:
    return float(np.reshape(g, -1)[0])


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """y = x @ w (+ b). x is (in,) or (n, in); w is (in, out); b is (out,)."""
    if x.data.ndim not in (1, 2) or w.data.ndim != 2 or x.data.shape[-1] != w.data.shape[0]:
        raise ShapeMismatch(f"linear: x {x.shape} vs w {w.shape}")
    if b is not None and b.data.shape != (w.data.shape[1],):
        raise ShapeMismatch(f"linear: b {b.shape} vs w {w.shape}")
    y = x.data @ w.data
    if b is not None:
        y = y + b.data

    def backward(g):
        gx = g @ w.data.T
        if x.data.ndim == 1:
            gw = np.outer(x.data, g)
            gb = g
        else:
            gw = x.data.T @ g
            gb = g.sum(axis=0)
        return (gx, gw, gb) if b is not None else (gx, gw)

    parents = (x, w) if b is None else (x, w, b)
    return _out("linear", y, parents, backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Plain or equal-batch matmul: (n,k)@(k,m) or (h,n,k)@(h,k,m)."""
    if a.data.ndim != b.data.ndim or a.data.ndim not in (2, 3):
        raise ShapeMismatch(f"matmul: ranks {a.shape} vs {b.shape}")
    if a.data.shape[-1] != b.data.shape[-2] or (a.data.ndim == 3 and a.data.shape[0] != b.data.shape[0]):
        raise ShapeMismatch(f"matmul: {a.shape} vs {b.shape}")
    y = a.data @ b.data

    def backward(g):
        return g @ b.data.swapaxes(-1, -2), a.data.swapaxes(-1, -2) @ g

    return _out("matmul", y, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}")
    return _out("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"sub: {a.shape} vs {b.shape}")
    return _out("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def scale(t: Tensor, c: float) -> Tensor:
    c = float(c)
    return _out("scale", t.data * c, (t,), lambda g: (g * c,))


def mul_const(t: Tensor, c) -> Tensor:
    """Elementwise multiply by a constant array (no gradient into c)."""
    c = np.asarray(c, dtype=t.data.dtype)
    if c.shape != t.data.shape and c.ndim != 0:
        raise ShapeMismatch(f"mul_const: {t.shape} vs {c.shape}")
    return _out("mul_const", t.data * c, (t,), lambda g: (g * c,))


def relu(t: Tensor) -> Tensor:
    y = np.maximum(t.data, 0)
    mask = t.data > 0
    return _out("relu", y, (t,), lambda g: (g * mask,))


def softmax_lastdim(t: Tensor) -> Tensor:
    z = t.data - t.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _out("softmax", y, (t,), backward)


def batchnorm_1d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    training: bool = True,
    running_mean: np.ndarray | None = None,
    running_var: np.ndarray | None = None,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-feature normalization of an (n, d) tensor.

    Training mode normalizes with batch statistics (n >= 2) and, when
    running buffers are supplied, updates them in place with an EMA
    (unbiased variance, torch convention). Eval mode uses the buffers.
    """
    if x.data.ndim != 2:
        raise ShapeMismatch(f"batchnorm_1d expects (n, d), got {x.shape}")
    n, d = x.data.shape
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise ShapeMismatch("batchnorm_1d: gamma/beta width mismatch")
    if training:
        if n < 2:
            raise DegenerateBatch("batchnorm_1d training mode needs n >= 2")
        mu = x.data.mean(axis=0)
        xc = x.data - mu
        var = (xc * xc).mean(axis=0)
        if running_mean is not None:
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu
            running_var *= 1.0 - momentum
            running_var += momentum * var * (n / (n - 1))
    else:
        if running_mean is None or running_var is None:
            raise ShapeMismatch("batchnorm_1d eval mode needs running stats")
        mu = running_mean.astype(x.data.dtype)
        var = running_var.astype(x.data.dtype)
        xc = x.data - mu
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = gamma.data * xhat + beta.data

    def backward(g):
        ggamma = (g * xhat).sum(axis=0)
        gbeta = g.sum(axis=0)
        gxhat = g * gamma.data
        if training:
            # d/dx of ((x - mean(x)) / sqrt(var(x) + eps))
            gx = inv / n * (n * gxhat - gxhat.sum(axis=0) - xhat * (gxhat * xhat).sum(axis=0))
        else:
            gx = gxhat * inv
        return gx, ggamma, gbeta

    return _out("batchnorm_1d", y, (x, gamma, beta), backward)


def maxpool_over_tokens(t: Tensor) -> Tensor:
    """(tokens, width) -> (width,) per-column max."""
    if t.data.ndim != 2:
        raise ShapeMismatch(f"maxpool_over_tokens expects (n, d), got {t.shape}")
    idx = t.data.argmax(axis=0)
    y = t.data[idx, np.arange(t.data.shape[1])]

    def backward(g):
        gx = np.zeros_like(t.data)
        gx[idx, np.arange(t.data.shape[1])] = g
        return (gx,)

    return _out("maxpool_over_tokens", y, (t,), backward)


def max_over_axis(t: Tensor, axis: int) -> Tensor:
    """Max-reduce one axis; gradient routes to the first argmax entries."""
    idx = np.expand_dims(t.data.argmax(axis=axis), axis)
    y = np.take_along_axis(t.data, idx, axis=axis).squeeze(axis)

    def backward(g):
        gx = np.zeros_like(t.data)
        np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _out("max_over_axis", y, (t,), backward)


def concat_lastdim(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape[:-1] != b.data.shape[:-1]:
        raise ShapeMismatch(f"concat_lastdim: {a.shape} vs {b.shape}")
    y = np.concatenate([a.data, b.data], axis=-1)
    wa = a.data.shape[-1]
    return _out("concat_lastdim", y, (a, b), lambda g: (g[..., :wa], g[..., wa:]))


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[1]:
        raise ShapeMismatch(f"concat_rows: {a.shape} vs {b.shape}")
    y = np.concatenate([a.data, b.data], axis=0)
    na = a.data.shape[0]
    return _out("concat_rows", y, (a, b), lambda g: (g[:na], g[na:]))


def reshape(t: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    y = t.data.reshape(shape)
    old = t.data.shape
    return _out("reshape", y, (t,), lambda g: (g.reshape(old),))


def permute(t: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    y = np.ascontiguousarray(t.data.transpose(axes))
    return _out("permute", y, (t,), lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def take_rows(t: Tensor, indices) -> Tensor:
    """Gather rows of an (n, d) tensor by a constant index vector."""
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if t.data.ndim != 2:
        raise ShapeMismatch(f"take_rows expects (n, d), got {t.shape}")
    y = t.data[idx]

    def backward(g):
        gx = np.zeros_like(t.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _out("take_rows", y, (t,), backward)


def repeat_rows(t: Tensor, r: int) -> Tensor:
    """Repeat each row r times: (n, d) -> (n*r, d)."""
    if t.data.ndim != 2:
        raise ShapeMismatch(f"repeat_rows expects (n, d), got {t.shape}")
    n, d = t.data.shape
    y = np.repeat(t.data, r, axis=0)
    return _out("repeat_rows", y, (t,), lambda g: (g.reshape(n, r, d).sum(axis=1),))


def sum_all(t: Tensor) -> Tensor:
    y = np.asarray(t.data.sum(dtype=np.float64))
    return _out("sum_all", y, (t,), lambda g: (np.full_like(t.data, _scalar(g)),))


def chamfer(a: Tensor, b: Tensor) -> Tensor:
    """Differentiable symmetric L2 Chamfer distance between (n, 3) tensors.

    Matches geomcore.chamfer_l2 on values; the gradient w.r.t. each point
    collects its nearest-neighbor residual terms from both directions.
    """
    if a.data.ndim != 2 or a.data.shape[1] != 3 or b.data.ndim != 2 or b.data.shape[1] != 3:
        raise ShapeMismatch(f"chamfer expects (n, 3) clouds, got {a.shape} and {b.shape}")
    if a.data.shape[0] < 1 or b.data.shape[0] < 1:
        raise EmptyCloud("chamfer distance needs non-empty clouds")
    value, idx_ab, idx_ba = geomcore.chamfer_l2_parts(a.data, b.data)
    n, m = a.data.shape[0], b.data.shape[0]

    def backward(g):
        go = _scalar(g)
        res_ab = a.data - b.data[idx_ab]
        res_ba = b.data - a.data[idx_ba]
        ga = (2.0 * go / n) * res_ab
        gb = (2.0 * go / m) * res_ba
        np.add.at(gb, idx_ab, (-2.0 * go / n) * res_ab)
        np.add.at(ga, idx_ba, (-2.0 * go / m) * res_ba)
        return ga.astype(a.data.dtype, copy=False), gb.astype(b.data.dtype, copy=False)

    return _out("chamfer", np.asarray(value, dtype=np.float64), (a, b), backward)
