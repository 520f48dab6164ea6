"""Learnable connectivity graphs and the group / sparsity regularizers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Tensor, absolute, as_tensor, matmul, mean, softmax_rows, swapaxes, tsum


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1e-3  # group inner
    beta: float = 1e-3  # group intra
    gamma: float = 1e-4  # sparsity

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val >= 0):
                raise ValueError(f"loss weight {name} must be finite and non-negative, got {val}")


def generate_graph(h_e) -> Tensor:
    """A = h_A h_A^T with h_A the row-wise softmax of the ROI features.

    Accepts ``(v, o)`` or a batch ``(batch, v, o)``.
    """
    h_a = softmax_rows(as_tensor(h_e), axis=-1)
    return matmul(h_a, swapaxes(h_a, -1, -2))


@dataclass
class ClassStats:
    mean: Tensor  # (v, v)
    variance: Tensor  # scalar
    count: int


def group_statistics(graphs: Tensor, labels) -> dict[int, ClassStats]:
    """Per-class mean graph and mean squared Frobenius deviation from it."""
    graphs = as_tensor(graphs)
    labels = np.asarray(labels)
    if graphs.ndim != 3 or graphs.shape[0] == 0:
        raise ValueError(f"expected a non-empty (batch, v, v) stack, got {graphs.shape}")
    if labels.shape != (graphs.shape[0],):
        raise ValueError("one label per graph required")
    stats = {}
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        members = graphs[idx]
        mu = mean(members, axis=0)
        dev = members - mu
        var = tsum(dev * dev) * (1.0 / len(idx))
        stats[int(c)] = ClassStats(mu, var, len(idx))
    return stats


def loss_inner(stats: dict[int, ClassStats]) -> Tensor:
    """Sum of within-class variances."""
    total = Tensor(0.0)
    for s in stats.values():
        total = total + s.variance
    return total


def loss_intra(stats: dict[int, ClassStats]) -> Tensor:
    """Minus the summed squared distance between class means over ordered class pairs."""
    if len(stats) < 2:
        raise ValueError("intra-class loss needs at least two classes")
    keys = sorted(stats)
    total = Tensor(0.0)
    for a in keys:
        for b in keys:
            if a == b:
                continue
            d = stats[a].mean - stats[b].mean
            total = total - tsum(d * d)
    return total


def loss_sparsity(graphs: Tensor) -> Tensor:
    """Mean absolute edge weight over the batch: sum_i |vec(A_i)|_1 / (n v v)."""
    graphs = as_tensor(graphs)
    if graphs.ndim != 3 or graphs.shape[0] == 0:
        raise ValueError(f"expected a non-empty (batch, v, v) stack, got {graphs.shape}")
    return mean(absolute(graphs))
