"""GCN graph classifier and the four-term training objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphgen import LossWeights, group_statistics, loss_inner, loss_intra, loss_sparsity
from .nn import Mlp, Module, glorot_uniform
from .numerics import BatchNormState, Prng, Tensor, as_tensor, batchnorm_1d, cross_entropy_logits, matmul, relu, tsum


@dataclass
class PredictorConfig:
    layers: int = 3
    hidden: int = 16
    head_hidden: int = 16
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5


class BatchNorm(Module):
    def __init__(self, dim: int, momentum: float, eps: float):
        super().__init__()
        self.add_param("gamma", np.ones(dim))
        self.add_param("beta", np.zeros(dim))
        self.state = BatchNormState.fresh(dim, momentum, eps)

    def __call__(self, x: Tensor, mode: str) -> Tensor:
        return batchnorm_1d(x, self.params["gamma"], self.params["beta"], self.state, mode)

    def extra_state(self):
        return {"running_mean": self.state.running_mean, "running_var": self.state.running_var}

    def load_extra_state(self, arrays):
        if "running_mean" in arrays:
            self.state.running_mean = np.asarray(arrays["running_mean"], dtype=np.float64).reshape(-1)
        if "running_var" in arrays:
            self.state.running_var = np.asarray(arrays["running_var"], dtype=np.float64).reshape(-1)


class GcnPredictor(Module):
    """h <- ReLU(A h W) for each layer on raw A, sum over nodes, batchnorm, MLP head."""

    def __init__(self, f: int, n_classes: int, cfg: PredictorConfig, rng: Prng):
        super().__init__()
        self.cfg = cfg
        self.f = f
        width = f
        for k in range(cfg.layers):
            self.add_param(f"W{k + 1}", glorot_uniform((width, cfg.hidden), width, cfg.hidden, rng))
            width = cfg.hidden
        self.bn = self.add_child("bn", BatchNorm(width, cfg.bn_momentum, cfg.bn_eps))
        self.head = self.add_child("head", Mlp([width, cfg.head_hidden, n_classes], rng))

    def embed(self, A, F) -> Tensor:
        """Sum-pooled node embeddings, shape (batch, hidden)."""
        A, F = as_tensor(A), as_tensor(F)
        if A.ndim != 3 or F.ndim != 3:
            raise ValueError("gcn expects batched (batch, v, v) graphs and (batch, v, f) features")
        if A.shape[1] != A.shape[2] or A.shape[:2] != F.shape[:2]:
            raise ValueError(f"graph {A.shape} and features {F.shape} disagree")
        if F.shape[2] != self.f:
            raise ValueError(f"predictor built for {self.f} node features, got {F.shape[2]}")
        h = F
        for k in range(self.cfg.layers):
            h = relu(matmul(matmul(A, h), self.params[f"W{k + 1}"]))
        return tsum(h, axis=1)

    def __call__(self, A, F, mode: str = "train") -> Tensor:
        return self.head(self.bn(self.embed(A, F), mode))


def gcn_forward(A, F, predictor: GcnPredictor, mode: str = "train") -> Tensor:
    return predictor(A, F, mode)


@dataclass
class LossBreakdown:
    ce: Tensor
    inner: Tensor
    intra: Tensor
    sparsity: Tensor
    total: Tensor
    weights: LossWeights

    def as_dict(self) -> dict[str, float]:
        return {
            "L_ce": self.ce.item(),
            "L_inner": self.inner.item(),
            "L_intra": self.intra.item(),
            "L_sparsity": self.sparsity.item(),
            "total": self.total.item(),
        }


def total_loss(logits: Tensor, labels, graphs, weights: LossWeights) -> LossBreakdown:
    """L_ce + α·L_inner + β·L_intra + γ·L_sparsity; a batch holding one class has L_intra = 0."""
    labels = np.asarray(labels)
    graphs = as_tensor(graphs)
    ce = cross_entropy_logits(logits, labels)
    stats = group_statistics(graphs, labels)
    inner = loss_inner(stats)
    intra = loss_intra(stats) if len(stats) >= 2 else Tensor(0.0)
    sparsity = loss_sparsity(graphs)
    total = ce + weights.alpha * inner + weights.beta * intra + weights.gamma * sparsity
    return LossBreakdown(ce, inner, intra, sparsity, total, weights)
