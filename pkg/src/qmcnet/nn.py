"""Small dense layer kit with explicit forward/backward passes.

Each ``*_forward`` returns ``(output, cache)`` and the matching ``*_backward``
consumes the upstream gradient and that cache. Everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def linear_forward(x, w, b):
    """y = x W^T + b for x of shape (N, in), W of shape (out, in)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != w.shape[1]:
        raise ValueError(f"linear expects {w.shape[1]} inputs, got {x.shape[-1]}")
    return x @ w.T + b, (x, w)


def linear_backward(dy, cache):
    x, w = cache
    return dy @ w, dy.T @ x, dy.sum(axis=0)


def conv2d_forward(x, w, b, padding: int | None = None):
    """Stride-1 cross-correlation, (N, Ci, H, W) -> (N, Co, H, W), zero padded."""
    k = w.shape[-1]
    if k not in (1, 3):
        raise ValueError(f"unsupported kernel size {k}")
    pad = k // 2 if padding is None else padding
    if pad != k // 2:
        raise ValueError("only shape-preserving padding is supported")
    if x.shape[1] != w.shape[1]:
        raise ValueError(f"conv expects {w.shape[1]} input channels, got {x.shape[1]}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))  # (N, Ci, H, W, k, k)
    y = np.einsum("nchwij,ocij->nohw", cols, w, optimize=True) + b[None, :, None, None]
    return y, (cols, w, x.shape, pad)


def conv2d_backward(dy, cache):
    cols, w, xshape, pad = cache
    k = w.shape[-1]
    dw = np.einsum("nohw,nchwij->ocij", dy, cols, optimize=True)
    db = dy.sum(axis=(0, 2, 3))
    dcols = np.einsum("nohw,ocij->nchwij", dy, w, optimize=True)
    n, c, h, wd = xshape
    dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + h, j : j + wd] += dcols[..., i, j]
    dx = dxp[:, :, pad : pad + h, pad : pad + wd] if pad else dxp
    return dx, dw, db


def _bn_axes(x):
    return (0,) if x.ndim == 2 else (0, 2, 3)


def _bn_shape(x, v):
    return v if x.ndim == 2 else v[None, :, None, None]


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train: bool):
    """Batch norm over (N, F) or (N, C, H, W).

    In train mode the running statistics are updated in place (momentum 0.1,
    unbiased variance, as in the common framework convention).
    """
    axes = _bn_axes(x)
    if train:
        count = int(np.prod([x.shape[a] for a in axes]))
        if x.shape[0] < 2:
            raise ValueError("batch norm in train mode needs a batch of at least 2")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean *= 1 - BN_MOMENTUM
        running_mean += BN_MOMENTUM * mean
        running_var *= 1 - BN_MOMENTUM
        running_var += BN_MOMENTUM * var * count / max(count - 1, 1)
    else:
        mean, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - _bn_shape(x, mean)) * _bn_shape(x, inv)
    y = xhat * _bn_shape(x, gamma) + _bn_shape(x, beta)
    return y, (xhat, inv, gamma, train)


def batchnorm_backward(dy, cache):
    xhat, inv, gamma, train = cache
    axes = _bn_axes(dy)
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxhat = dy * _bn_shape(dy, gamma)
    if not train:
        return dxhat * _bn_shape(dy, inv), dgamma, dbeta
    mean_d = dxhat.mean(axis=axes)
    mean_dx = (dxhat * xhat).mean(axis=axes)
    dx = (dxhat - _bn_shape(dy, mean_d) - xhat * _bn_shape(dy, mean_dx)) * _bn_shape(dy, inv)
    return dx, dgamma, dbeta


def relu_forward(x):
    return np.maximum(x, 0.0), x > 0


def relu_backward(dy, mask):
    return dy * mask


def dropout_mask(shape, rate: float, seed: int, step: int, tensor_id: int) -> np.ndarray:
    """Inverted-dropout mask; a pure function of (seed, step, tensor_id)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if rate == 0.0:
        return np.ones(shape)
    rng = np.random.default_rng([seed, step, tensor_id])
    return (rng.random(shape) >= rate) / (1.0 - rate)


def dropout_forward(x, rate: float, train: bool, seed: int = 0, step: int = 0, tensor_id: int = 0):
    if not train or rate == 0.0:
        return x, None
    mask = dropout_mask(x.shape, rate, seed, step, tensor_id)
    return x * mask, mask


def dropout_backward(dy, mask):
    return dy if mask is None else dy * mask


def spatial_softmax(logits):
    """Softmax over the last axis (flattened grid cells)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def spatial_softmax_backward(da, a):
    return a * (da - (a * da).sum(axis=-1, keepdims=True))


def cross_entropy(logits, labels):
    """Mean categorical cross-entropy and its gradient w.r.t. the logits."""
    logits = np.atleast_2d(logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.intp))
    n, k = logits.shape
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsum - z[np.arange(n), labels]))
    grad = np.exp(z - logsum[:, None])
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    if set(grads) - set(params):
        raise ValueError(f"gradients for unknown parameters: {sorted(set(grads) - set(params))}")
    state.step += 1
    t = state.step
    c1 = 1 - state.beta1**t
    c2 = 1 - state.beta2**t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
