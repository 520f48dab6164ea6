"""End-to-end models: encoder -> graph -> GCN, and the encoder-only time-series baseline."""

from __future__ import annotations

import numpy as np

from .encoder import EncoderConfig, build_encoder
from .graphgen import generate_graph
from .nn import Mlp, Module
from .numerics import Prng, Tensor
from .predictor import GcnPredictor, PredictorConfig

GRAPH_SOURCES = ("learnable", "pearson", "uniform")


class GraphModel(Module):
    """Time series -> learnable (or fixed) graph -> GCN logits.

    The encoder is built for every graph source so that all sources share
    the same predictor initialization for a given seed; with a fixed source
    it is simply left out of the trainable set.
    """

    def __init__(
        self,
        v: int,
        t: int,
        f: int,
        n_classes: int,
        encoder_cfg: EncoderConfig,
        predictor_cfg: PredictorConfig,
        graph_source: str,
        rng: Prng,
    ):
        super().__init__()
        if graph_source not in GRAPH_SOURCES:
            raise ValueError(f"graph source must be one of {GRAPH_SOURCES}, got {graph_source!r}")
        self.graph_source = graph_source
        self.v = v
        self.encoder = self.add_child("encoder", build_encoder(t, encoder_cfg, rng))
        self.predictor = self.add_child("predictor", GcnPredictor(f, n_classes, predictor_cfg, rng))

    def trainable_parameters(self) -> list[Tensor]:
        if self.graph_source == "learnable":
            return self.parameters()
        return self.predictor.parameters()

    def graphs(self, X, fixed=None) -> Tensor:
        if self.graph_source == "learnable":
            return generate_graph(self.encoder(Tensor(X)))
        if fixed is None:
            raise ValueError(f"graph source {self.graph_source!r} needs precomputed graphs")
        return Tensor(fixed)

    def __call__(self, X, F, fixed=None, mode: str = "train") -> tuple[Tensor, Tensor]:
        A = self.graphs(X, fixed)
        return self.predictor(A, Tensor(F), mode), A


class TimeSeriesModel(Module):
    """Encoder features of all ROIs flattened into an MLP classifier; no graph."""

    def __init__(self, v: int, t: int, n_classes: int, encoder_cfg: EncoderConfig, rng: Prng):
        super().__init__()
        self.v = v
        self.out_dim = encoder_cfg.out_dim
        self.encoder = self.add_child("encoder", build_encoder(t, encoder_cfg, rng))
        self.head = self.add_child("head", Mlp([v * encoder_cfg.out_dim, encoder_cfg.mlp_hidden, n_classes], rng))

    def trainable_parameters(self) -> list[Tensor]:
        return self.parameters()

    def __call__(self, X, F=None, fixed=None, mode: str = "train") -> tuple[Tensor, None]:
        return timeseries_baseline_forward(X, self), None


def timeseries_baseline_forward(x, model: TimeSeriesModel) -> Tensor:
    x = np.asarray(x.data if isinstance(x, Tensor) else x)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.shape[1] != model.v:
        raise ValueError(f"baseline built for {model.v} ROIs, got {x.shape[1]}")
    h_e = model.encoder(Tensor(x))
    logits = model.head(h_e.reshape(x.shape[0], model.v * model.out_dim))
    return logits.reshape(-1) if squeeze else logits
