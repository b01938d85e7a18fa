"""Finite-difference verification of every differentiable op.

Each registered op builds randomized float64 trials; the analytic
gradient from one taped backward pass is compared against central
differences of the recomputed forward value. Trials keep inputs away
from kinks (relu zero crossings, max/argmin ties), resampling until the
configuration is stable under +-h perturbation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import Graph, Tensor

H = 1e-3
RTOL = 1e-4
ATOL = 1e-6


@dataclass
class OpCheckReport:
    op: str
    trials: int
    worst_abs: float
    worst_rel: float
    passed: bool


def numeric_gradients(f, inputs: list[Tensor], h: float = H) -> list[np.ndarray]:
    """Central finite differences of scalar f() w.r.t. each input tensor."""
    grads = []
    for t in inputs:
        flat = t.data.reshape(-1)
        g = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f()
            flat[i] = orig - h
            fm = f()
            flat[i] = orig
            g[i] = (fp - fm) / (2.0 * h)
        grads.append(g.reshape(t.data.shape))
    return grads


def compare_gradients(f_build, inputs: list[Tensor]) -> tuple[bool, float, float]:
    """Analytic vs numeric gradients for scalar f_build().

    f_build() must rebuild the loss tensor from the current input values.
    Returns (passed, worst_abs_diff, rel_at_worst); an element passes when
    its difference is within ATOL absolute or RTOL relative.
    """
    with Graph() as graph:
        loss = f_build()
        grads = graph.backward(loss)
    analytic = [grads.get(t.gid, np.zeros_like(t.data)) for t in inputs]
    numeric = numeric_gradients(lambda: f_build().item(), inputs)
    passed = True
    worst_abs = 0.0
    rel_at_worst = 0.0
    for a, n in zip(analytic, numeric):
        diff = np.abs(a - n).reshape(-1)
        if not diff.size:
            continue
        denom = np.maximum(np.abs(a), np.abs(n)).reshape(-1)
        rel = diff / np.maximum(denom, 1e-300)
        if ((diff > ATOL) & (rel > RTOL)).any():
            passed = False
        i = int(diff.argmax())
        if diff[i] > worst_abs:
            worst_abs = float(diff[i])
            rel_at_worst = float(rel[i])
    return passed, worst_abs, rel_at_worst


def _t(rng, *shape, lo=-1.0, hi=1.0):
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True, dtype=np.float64)


def _away_from_zero(rng, *shape, margin=0.05):
    x = rng.uniform(-1.0, 1.0, size=shape)
    x = np.where(np.abs(x) < margin, x + np.sign(x + 1e-12) * margin, x)
    return Tensor(x, requires_grad=True, dtype=np.float64)


def _distinct_values(rng, *shape, axis):
    """Random tensor whose top-2 values along axis differ by > 10*H."""
    while True:
        x = rng.uniform(-1.0, 1.0, size=shape)
        s = np.sort(x, axis=axis)
        gap = np.take(s, -1, axis=axis) - np.take(s, -2, axis=axis)
        if (gap > 10 * H).all():
            return Tensor(x, requires_grad=True, dtype=np.float64)


def _separated_clouds(rng, n, m):
    """Cloud pair whose nearest-neighbor assignments survive +-H nudges."""
    while True:
        a = rng.uniform(-1.0, 1.0, size=(n, 3))
        b = rng.uniform(-1.0, 1.0, size=(m, 3))
        d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
        ok = True
        for mat in (d2, d2.T):
            s = np.sort(mat, axis=1)
            if mat.shape[1] >= 2 and not ((s[:, 1] - s[:, 0]) > 0.05).all():
                ok = False
        if ok:
            return (
                Tensor(a, requires_grad=True, dtype=np.float64),
                Tensor(b, requires_grad=True, dtype=np.float64),
            )


def _projected(op_fn, rng):
    """Wrap an op call into a scalar via a per-trial random projection."""

    def build():
        out = op_fn()
        if build.proj is None:
            build.proj = rng.normal(size=out.data.shape)
        return ops.sum_all(ops.mul_const(out, build.proj))

    build.proj = None
    return build


def _trial_linear(rng):
    x, w, b = _t(rng, 4, 6), _t(rng, 6, 5), _t(rng, 5)
    return [x, w, b], _projected(lambda: ops.linear(x, w, b), rng)


def _trial_linear_1d(rng):
    x, w, b = _t(rng, 6), _t(rng, 6, 5), _t(rng, 5)
    return [x, w, b], _projected(lambda: ops.linear(x, w, b), rng)


def _trial_matmul(rng):
    a, b = _t(rng, 3, 4), _t(rng, 4, 5)
    return [a, b], _projected(lambda: ops.matmul(a, b), rng)


def _trial_matmul_batched(rng):
    a, b = _t(rng, 2, 3, 4), _t(rng, 2, 4, 3)
    return [a, b], _projected(lambda: ops.matmul(a, b), rng)


def _trial_add(rng):
    a, b = _t(rng, 5, 3), _t(rng, 5, 3)
    return [a, b], _projected(lambda: ops.add(a, b), rng)


def _trial_sub(rng):
    a, b = _t(rng, 5, 3), _t(rng, 5, 3)
    return [a, b], _projected(lambda: ops.sub(a, b), rng)


def _trial_scale(rng):
    a = _t(rng, 4, 4)
    c = float(rng.uniform(0.2, 3.0))
    return [a], _projected(lambda: ops.scale(a, c), rng)


def _trial_mul_const(rng):
    a = _t(rng, 4, 4)
    c = rng.normal(size=(4, 4))
    return [a], _projected(lambda: ops.mul_const(a, c), rng)


def _trial_relu(rng):
    a = _away_from_zero(rng, 6, 5)
    return [a], _projected(lambda: ops.relu(a), rng)


def _trial_softmax(rng):
    a = _t(rng, 5, 7, lo=-2.0, hi=2.0)
    return [a], _projected(lambda: ops.softmax_lastdim(a), rng)


def _trial_batchnorm_train(rng):
    x, g, b = _t(rng, 8, 5), _t(rng, 5, lo=0.5, hi=1.5), _t(rng, 5)
    return [x, g, b], _projected(lambda: ops.batchnorm_1d(x, g, b, training=True), rng)


def _trial_batchnorm_eval(rng):
    x, g, b = _t(rng, 8, 5), _t(rng, 5, lo=0.5, hi=1.5), _t(rng, 5)
    rm = rng.normal(size=5) * 0.1
    rv = rng.uniform(0.5, 1.5, size=5)
    return [x, g, b], _projected(
        lambda: ops.batchnorm_1d(x, g, b, training=False, running_mean=rm, running_var=rv), rng
    )


def _trial_maxpool(rng):
    a = _distinct_values(rng, 7, 5, axis=0)
    return [a], _projected(lambda: ops.maxpool_over_tokens(a), rng)


def _trial_max_over_axis(rng):
    a = _distinct_values(rng, 4, 6, 3, axis=1)
    return [a], _projected(lambda: ops.max_over_axis(a, 1), rng)


def _trial_concat_lastdim(rng):
    a, b = _t(rng, 5, 3), _t(rng, 5, 4)
    return [a, b], _projected(lambda: ops.concat_lastdim(a, b), rng)


def _trial_concat_rows(rng):
    a, b = _t(rng, 3, 4), _t(rng, 5, 4)
    return [a, b], _projected(lambda: ops.concat_rows(a, b), rng)


def _trial_reshape(rng):
    a = _t(rng, 4, 6)
    return [a], _projected(lambda: ops.reshape(a, (2, 12)), rng)


def _trial_permute(rng):
    a = _t(rng, 3, 4, 5)
    return [a], _projected(lambda: ops.permute(a, (2, 0, 1)), rng)


def _trial_take_rows(rng):
    a = _t(rng, 6, 4)
    idx = rng.integers(0, 6, size=9)
    return [a], _projected(lambda: ops.take_rows(a, idx), rng)


def _trial_repeat_rows(rng):
    a = _t(rng, 5, 3)
    return [a], _projected(lambda: ops.repeat_rows(a, 4), rng)


def _trial_sum_all(rng):
    a = _t(rng, 6, 3)
    return [a], lambda: ops.sum_all(a)


def _trial_chamfer(rng):
    a, b = _separated_clouds(rng, 7, 9)
    return [a, b], lambda: ops.chamfer(a, b)


REGISTRY = {
    "linear": _trial_linear,
    "linear_1d": _trial_linear_1d,
    "matmul": _trial_matmul,
    "matmul_batched": _trial_matmul_batched,
    "add": _trial_add,
    "sub": _trial_sub,
    "scale": _trial_scale,
    "mul_const": _trial_mul_const,
    "relu": _trial_relu,
    "softmax_lastdim": _trial_softmax,
    "batchnorm_1d": _trial_batchnorm_train,
    "batchnorm_1d_eval": _trial_batchnorm_eval,
    "maxpool_over_tokens": _trial_maxpool,
    "max_over_axis": _trial_max_over_axis,
    "concat_lastdim": _trial_concat_lastdim,
    "concat_rows": _trial_concat_rows,
    "reshape": _trial_reshape,
    "permute": _trial_permute,
    "take_rows": _trial_take_rows,
    "repeat_rows": _trial_repeat_rows,
    "sum_all": _trial_sum_all,
    "chamfer": _trial_chamfer,
}


def check_op(name: str, trials: int = 10, seed: int = 0) -> OpCheckReport:
    factory = REGISTRY[name]
    rng = np.random.default_rng(seed)
    worst_abs = 0.0
    rel_at_worst = 0.0
    passed = True
    for _ in range(trials):
        inputs, build = factory(rng)
        ok, wa, wr = compare_gradients(build, inputs)
        if wa > worst_abs:
            worst_abs = wa
            rel_at_worst = wr
        passed = passed and ok
    return OpCheckReport(op=name, trials=trials, worst_abs=worst_abs, worst_rel=rel_at_worst, passed=passed)


def check_all(trials: int = 10, seed: int = 0) -> list[OpCheckReport]:
    return [check_op(name, trials=trials, seed=seed) for name in REGISTRY]
