"""Built-in correctness checks: finite-difference gradients and loss-identity oracles.

Each check returns a :class:`Check` holding the worst observed error and the
tolerance it is held to.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import pearson_matrix
from .encoder import EncoderConfig
from .graphgen import LossWeights, generate_graph, group_statistics, loss_inner, loss_intra, loss_sparsity
from .model import GraphModel
from .numerics import (
    BatchNormState,
    Prng,
    Tensor,
    batchnorm_1d,
    conv1d_valid,
    cross_entropy_logits,
    gradient_check,
    log_softmax,
    matmul,
    maxpool1d,
    relu,
    sigmoid,
    softmax_rows,
    tanh,
)
from .predictor import PredictorConfig, total_loss

GRAD_TOL = 1e-4
IDENTITY_TOL = 1e-8
SPARSITY_TOL = 1e-12


@dataclass
class Check:
    name: str
    error: float
    tol: float

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.error) and self.error < self.tol)

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}: error {self.error:.3e} (tol {self.tol:.0e})"


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

OP_CASES = {
    "matmul": (lambda a, b: matmul(a, b), [(3, 4), (4, 2)]),
    "relu": (lambda a: relu(a), [(4, 5)]),
    "tanh": (lambda a: tanh(a), [(4, 5)]),
    "sigmoid": (lambda a: sigmoid(a), [(4, 5)]),
    "softmax_rows": (lambda a: softmax_rows(a), [(3, 6)]),
    "log_softmax": (lambda a: log_softmax(a), [(3, 6)]),
    "conv1d_valid": (lambda x, w, b: conv1d_valid(x, w, b), [(2, 3, 11), (4, 3, 5), (4,)]),
    "maxpool1d": (lambda x: maxpool1d(x, 3), [(2, 3, 10)]),
    "batchnorm_1d": (lambda x, g, b: batchnorm_1d(x, g, b, BatchNormState.fresh(3)), [(5, 3), (3,), (3,)]),
    "cross_entropy": (lambda z: cross_entropy_logits(z, [0, 2, 1, 2]), [(4, 3)]),
    "generate_graph": (lambda h: generate_graph(h), [(2, 5, 4)]),
    "loss_inner": (lambda a: loss_inner(group_statistics(a, [0, 1, 0, 1, 1])), [(5, 3, 3)]),
    "loss_intra": (lambda a: loss_intra(group_statistics(a, [0, 1, 0, 2, 1])), [(5, 3, 3)]),
    "loss_sparsity": (lambda a: loss_sparsity(a), [(3, 4, 4)]),
}


def check_op(name: str, points: int = 5, seed: int = 0) -> Check:
    """Random weighted sum of the op's output, checked at ``points`` random inputs."""
    fn, shapes = OP_CASES[name]
    worst = 0.0
    for k in range(points):
        r = np.random.default_rng([seed, k])
        args = [Tensor(r.normal(size=s), requires_grad=True) for s in shapes]
        w = r.normal(size=fn(*args).shape)
        worst = max(worst, gradient_check(lambda: (fn(*args) * w).sum(), args))
    return Check(f"grad {name}", worst, GRAD_TOL)


def small_encoder(variant: str) -> EncoderConfig:
    """Encoder small enough that finite differences over every weight stay fast."""
    if variant == "cnn":
        return EncoderConfig("cnn", out_dim=4, mlp_hidden=5, channels=(3, 3, 2), kernel=3, pool=2)
    return EncoderConfig("gru", out_dim=4, mlp_hidden=5, window=8, gru_layers=3, gru_hidden=3)


def check_end_to_end(variant: str, batch: int = 4, v: int = 6, t: int = 32, seed: int = 0) -> Check:
    """Total loss w.r.t. every parameter from the encoder through the head."""
    rng = Prng(seed)
    X = rng.normal(size=(batch, v, t))
    F = np.stack([pearson_matrix(x) for x in X])
    labels = np.arange(batch) % 2
    model = GraphModel(v, t, v, 2, small_encoder(variant), PredictorConfig(hidden=4, head_hidden=4), "learnable", rng)
    # zero biases leave fully dead receptive fields exactly on the ReLU kink
    for name, p in model.named_parameters():
        if name.endswith("bias") or name.endswith("b_ih") or name.endswith("b_hh"):
            p.data[...] = rng.normal(size=p.shape, scale=0.1)
    weights = LossWeights(0.5, 0.3, 0.2)  # large enough that every term moves the gradient

    def objective():
        logits, A = model(X, F, mode="train")
        return total_loss(logits, labels, A, weights).total

    err = gradient_check(objective, model.parameters())
    return Check(f"grad end-to-end {variant}", err, GRAD_TOL)


# ---------------------------------------------------------------------------
# loss identities
# ---------------------------------------------------------------------------


def inner_pairwise(graphs: np.ndarray, labels: np.ndarray) -> float:
    """sum_c (1 / 2 n_c^2) sum_{i,j in c} |A_i - A_j|_F^2."""
    total = 0.0
    for c in np.unique(labels):
        g = graphs[labels == c]
        n = len(g)
        for i in range(n):
            for j in range(n):
                total += np.sum((g[i] - g[j]) ** 2) / (2.0 * n * n)
    return total


def intra_pairwise(graphs: np.ndarray, labels: np.ndarray) -> float:
    """-sum_{a != b} |mu_a - mu_b|^2, with every mean built from an explicit double sum over samples."""
    classes = np.unique(labels)
    total = 0.0
    for a in classes:
        for b in classes:
            if a == b:
                continue
            ga, gb = graphs[labels == a], graphs[labels == b]
            d = np.zeros(graphs.shape[1:])
            for x in ga:
                for y in gb:
                    d += (x - y) / (len(ga) * len(gb))
            total -= np.sum(d * d)
    return total


def sparsity_direct(graphs: np.ndarray) -> float:
    return float(sum(abs(x) for x in graphs.ravel()) / graphs.size)


def random_batch(rng: np.random.Generator, max_n: int = 16, max_v: int = 8):
    n = int(rng.integers(2, max_n + 1))
    v = int(rng.integers(2, max_v + 1))
    o = int(rng.integers(1, 6))
    labels = rng.integers(0, int(rng.integers(2, 4)), size=n)
    labels[:2] = [0, 1]  # at least two classes
    graphs = generate_graph(rng.normal(size=(n, v, o)) * rng.uniform(0.1, 3.0)).data
    return graphs, labels


def check_loss_identities(batches: int = 100, seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    err_inner = err_intra = err_sparse = 0.0
    for _ in range(batches):
        graphs, labels = random_batch(rng)
        stats = group_statistics(Tensor(graphs), labels)
        err_inner = max(err_inner, abs(loss_inner(stats).item() - inner_pairwise(graphs, labels)))
        err_intra = max(err_intra, abs(loss_intra(stats).item() - intra_pairwise(graphs, labels)))
        err_sparse = max(err_sparse, abs(loss_sparsity(Tensor(graphs)).item() - sparsity_direct(graphs)))
    return [
        Check("identity loss_inner", err_inner, IDENTITY_TOL),
        Check("identity loss_intra", err_intra, IDENTITY_TOL),
        Check("identity loss_sparsity", err_sparse, SPARSITY_TOL),
    ]


def run_all() -> list[Check]:
    checks = [check_op(name) for name in OP_CASES]
    checks += [check_end_to_end("cnn"), check_end_to_end("gru")]
    checks += check_loss_identities()
    return checks
