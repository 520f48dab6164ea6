"""Differentiable layer primitives built on :mod:`fbn.numerics.tensor`.

Array layouts follow the usual channel-first convention: sequences are
``(..., channels, length)``, feature batches are ``(batch, features)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor, make_node, matmul, mean

__all__ = [
    "relu",
    "tanh",
    "sigmoid",
    "activation",
    "softmax_rows",
    "log_softmax",
    "linear",
    "conv1d_valid",
    "maxpool1d",
    "BatchNormState",
    "batchnorm_1d",
    "cross_entropy_logits",
    "matmul",
]


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return make_node(out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    z = x.data
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return make_node(out, (x,), lambda g: (g * out * (1.0 - out),))


_ACTIVATIONS = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid}


def activation(x: Tensor, kind: str) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}") from None
    return fn(as_tensor(x))


def softmax_rows(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` (last by default) with max subtraction."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_node(out, (x,), grad_fn)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)
    return make_node(out, (x,), lambda g: (g - soft * g.sum(axis=axis, keepdims=True),))


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as (in, out)."""
    out = matmul(x, weight)
    return out if bias is None else out + bias


def conv1d_valid(x: Tensor, kernels: Tensor, bias: Tensor | None = None) -> Tensor:
    """Stride-1 cross-correlation without padding.

    ``x`` is ``(..., cin, L)``, ``kernels`` is ``(cout, cin, k)``; the result
    is ``(..., cout, L - k + 1)``.
    """
    x, kernels = as_tensor(x), as_tensor(kernels)
    cout, cin, k = kernels.shape
    if x.ndim < 2 or x.shape[-2] != cin:
        raise ValueError(f"conv1d expects (..., {cin}, L) input, got {x.shape}")
    length = x.shape[-1]
    if length < k:
        raise ValueError(f"conv1d input length {length} shorter than kernel {k}")
    lead = x.shape[:-2]
    lout = length - k + 1
    xs = x.data.reshape(-1, cin, length)
    # (N, cin, lout, k) -> (N, lout, cin*k)
    cols = sliding_window_view(xs, k, axis=-1).transpose(0, 2, 1, 3).reshape(-1, cin * k)
    wmat = kernels.data.reshape(cout, cin * k)
    out = (cols @ wmat.T).reshape(xs.shape[0], lout, cout).transpose(0, 2, 1)
    parents = [x, kernels]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.data[:, None]
        parents.append(bias)
    out = np.ascontiguousarray(out).reshape(*lead, cout, lout)

    def grad_fn(g):
        g2 = g.reshape(-1, cout, lout).transpose(0, 2, 1).reshape(-1, cout)
        grads = []
        if x.requires_grad:
            # (N, lout, cin, k) -> (N, k, cin, lout) so each tap is a contiguous slab
            dcols = np.ascontiguousarray((g2 @ wmat).reshape(-1, lout, cin, k).transpose(0, 3, 2, 1))
            dx = np.zeros_like(xs)
            for j in range(k):
                dx[:, :, j : j + lout] += dcols[:, j]
            grads.append(dx.reshape(x.shape))
        else:
            grads.append(None)
        grads.append((g2.T @ cols).reshape(kernels.shape) if kernels.requires_grad else None)
        if bias is not None:
            grads.append(g.reshape(-1, cout, lout).sum(axis=(0, 2)))
        return grads

    return make_node(out, parents, grad_fn)


def maxpool1d(x: Tensor, k: int) -> Tensor:
    """Non-overlapping max over windows of ``k`` along the last axis; the remainder is dropped."""
    x = as_tensor(x)
    length = x.shape[-1]
    if k < 1 or length < k:
        raise ValueError(f"maxpool1d window {k} invalid for length {length}")
    nwin = length // k
    windows = x.data[..., : nwin * k].reshape(*x.shape[:-1], nwin, k)
    arg = windows.argmax(axis=-1)  # first maximal index on ties
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def grad_fn(g):
        dwin = np.zeros_like(windows)
        np.put_along_axis(dwin, arg[..., None], g[..., None], axis=-1)
        dx = np.zeros_like(x.data)
        dx[..., : nwin * k] = dwin.reshape(*x.shape[:-1], nwin * k)
        return (dx,)

    return make_node(out, (x,), grad_fn)


@dataclass
class BatchNormState:
    """Running statistics for :func:`batchnorm_1d`."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5
    num_batches: int = field(default=0)

    @classmethod
    def fresh(cls, dim: int, momentum: float = 0.1, eps: float = 1e-5) -> "BatchNormState":
        return cls(np.zeros(dim), np.ones(dim), momentum, eps)


def batchnorm_1d(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, mode: str = "train") -> Tensor:
    """Batch normalization over axis 0 of a ``(batch, d)`` tensor.

    Train mode normalizes with the batch mean and biased variance and folds
    both into the running statistics; eval mode uses the running values.
    """
    x = as_tensor(x)
    if mode == "train":
        if x.shape[0] < 2:
            raise ValueError("batchnorm_1d in train mode needs a batch of at least 2")
        mu = mean(x, axis=0, keepdims=True)
        centered = x - mu
        var = mean(centered * centered, axis=0, keepdims=True)
        xhat = centered / ((var + state.eps) ** 0.5)
        m = state.momentum
        state.running_mean = (1.0 - m) * state.running_mean + m * mu.data[0]
        state.running_var = (1.0 - m) * state.running_var + m * var.data[0]
        state.num_batches += 1
    elif mode == "eval":
        if x.shape[0] < 1:
            raise ValueError("batchnorm_1d needs a non-empty batch")
        xhat = (x - state.running_mean) / np.sqrt(state.running_var + state.eps)
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return xhat * gamma + beta


def cross_entropy_logits(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under row-wise softmax of ``logits``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    batch, ncls = logits.shape
    if labels.shape != (batch,):
        raise ValueError(f"expected {batch} labels, got shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= ncls:
        raise ValueError(f"labels must lie in [0, {ncls})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(batch)
    loss = float(np.mean(lse - shifted[rows, labels]))

    def grad_fn(g):
        probs = np.exp(shifted - lse[:, None])
        probs[rows, labels] -= 1.0
        return (probs * (g / batch),)

    return make_node(np.asarray(loss), (logits,), grad_fn)
