"""Per-ROI feature extractors mapping a (v, t) signal to (v, o) features.

Both encoders treat each ROI's series as an independent single-channel
sequence with weights shared across ROIs, so permuting ROIs permutes the
output rows the same way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Mlp, Module, glorot_uniform
from .numerics import (
    Prng,
    Tensor,
    as_tensor,
    concat,
    conv1d_valid,
    matmul,
    maxpool1d,
    mean,
    relu,
    sigmoid,
    stack,
    tanh,
)


@dataclass
class EncoderConfig:
    variant: str = "cnn"  # cnn | gru
    out_dim: int = 8
    mlp_hidden: int = 32
    # cnn
    channels: tuple[int, ...] = (32, 32, 16)
    kernel: int = 16
    pool: int = 4
    # gru
    window: int = 16
    gru_layers: int = 3
    gru_hidden: int | None = None  # None -> window size
    aggregate: str = "mean"  # mean | last

    def __post_init__(self):
        self.channels = tuple(int(c) for c in self.channels)
        if self.variant not in ("cnn", "gru"):
            raise ValueError(f"encoder variant must be cnn or gru, got {self.variant!r}")
        if self.out_dim < 1:
            raise ValueError("out_dim must be at least 1")
        if self.aggregate not in ("mean", "last"):
            raise ValueError(f"aggregate must be mean or last, got {self.aggregate!r}")


def cnn_lengths(t: int, kernel: int, layers: int, pool: int) -> tuple[int, int]:
    """(length after the conv stack, length after pooling) for valid stride-1 convolutions."""
    conv_len = t - layers * (kernel - 1)
    if conv_len < pool or conv_len < 1:
        raise ValueError(
            f"series of length {t} too short for {layers} convolutions of width {kernel} plus pooling {pool}"
        )
    return conv_len, conv_len // pool


def _as_batch(x) -> tuple[Tensor, bool]:
    x = as_tensor(x)
    if x.ndim == 2:
        return x.reshape(1, *x.shape), True
    if x.ndim != 3:
        raise ValueError(f"expected (v, t) or (batch, v, t) input, got {x.shape}")
    return x, False


class CnnEncoder(Module):
    def __init__(self, t: int, cfg: EncoderConfig, rng: Prng):
        super().__init__()
        self.cfg = cfg
        self.t = t
        _, pooled = cnn_lengths(t, cfg.kernel, len(cfg.channels), cfg.pool)
        cin = 1
        for i, cout in enumerate(cfg.channels):
            fan_in, fan_out = cin * cfg.kernel, cout * cfg.kernel
            self.add_param(f"conv{i}.weight", glorot_uniform((cout, cin, cfg.kernel), fan_in, fan_out, rng))
            self.add_param(f"conv{i}.bias", np.zeros(cout))
            cin = cout
        self.feature_length = cin * pooled
        self.mlp = self.add_child("mlp", Mlp([self.feature_length, cfg.mlp_hidden, cfg.out_dim], rng))

    def __call__(self, x) -> Tensor:
        x, squeeze = _as_batch(x)
        batch, v, t = x.shape
        if t != self.t:
            raise ValueError(f"encoder built for length {self.t}, got {t}")
        h = x.reshape(batch * v, 1, t)
        for i in range(len(self.cfg.channels)):
            h = relu(conv1d_valid(h, self.params[f"conv{i}.weight"], self.params[f"conv{i}.bias"]))
        h = maxpool1d(h, self.cfg.pool)
        h = h.reshape(batch * v, self.feature_length)
        out = self.mlp(h).reshape(batch, v, self.cfg.out_dim)
        return out.reshape(v, self.cfg.out_dim) if squeeze else out


class GruLayer(Module):
    """One direction of a GRU layer (gate order r, z, n)."""

    def __init__(self, in_dim: int, hidden: int, rng: Prng):
        super().__init__()
        self.hidden = hidden
        self.add_param("w_ih", glorot_uniform((in_dim, 3 * hidden), in_dim, 3 * hidden, rng))
        self.add_param("w_hh", glorot_uniform((hidden, 3 * hidden), hidden, 3 * hidden, rng))
        self.add_param("b_ih", np.zeros(3 * hidden))
        self.add_param("b_hh", np.zeros(3 * hidden))

    def run(self, seq: Tensor, reverse: bool = False) -> list[Tensor]:
        """Hidden states for every step of ``seq`` (S, steps, in), in input order."""
        H = self.hidden
        S, steps, _ = seq.shape
        gates_in = matmul(seq, self.params["w_ih"]) + self.params["b_ih"]
        h = Tensor(np.zeros((S, H)))
        outs: list[Tensor | None] = [None] * steps
        order = range(steps - 1, -1, -1) if reverse else range(steps)
        for s in order:
            gi = gates_in[:, s, :]
            gh = matmul(h, self.params["w_hh"]) + self.params["b_hh"]
            r = sigmoid(gi[:, :H] + gh[:, :H])
            z = sigmoid(gi[:, H : 2 * H] + gh[:, H : 2 * H])
            n = tanh(gi[:, 2 * H :] + r * gh[:, 2 * H :])
            h = (1.0 - z) * n + z * h
            outs[s] = h
        return outs


class GruEncoder(Module):
    def __init__(self, t: int, cfg: EncoderConfig, rng: Prng):
        super().__init__()
        if t < cfg.window:
            raise ValueError(f"series of length {t} shorter than window {cfg.window}")
        self.cfg = cfg
        self.t = t
        self.hidden = cfg.gru_hidden or cfg.window
        self.n_windows = -(-t // cfg.window)
        in_dim = 1
        for layer in range(cfg.gru_layers):
            self.add_child(f"gru{layer}_fwd", GruLayer(in_dim, self.hidden, rng))
            self.add_child(f"gru{layer}_bwd", GruLayer(in_dim, self.hidden, rng))
            in_dim = 2 * self.hidden
        self.mlp = self.add_child("mlp", Mlp([2 * self.hidden, cfg.mlp_hidden, cfg.out_dim], rng))

    def window_features(self, x) -> Tensor:
        """Per-window bidirectional summaries, shape (batch, v, windows, 2*hidden)."""
        x, _ = _as_batch(x)
        batch, v, t = x.shape
        if t != self.t:
            raise ValueError(f"encoder built for length {self.t}, got {t}")
        tau = self.cfg.window
        padded = self.n_windows * tau
        if padded > t:
            x = concat([x, Tensor(np.zeros((batch, v, padded - t)))], axis=2)
        seq = x.reshape(batch * v * self.n_windows, tau, 1)
        for layer in range(self.cfg.gru_layers):
            fwd = self.children[f"gru{layer}_fwd"].run(seq)
            bwd = self.children[f"gru{layer}_bwd"].run(seq, reverse=True)
            if layer == self.cfg.gru_layers - 1:
                # final state of each direction: last step forward, first step backward
                summary = concat([fwd[-1], bwd[0]], axis=1)
                break
            seq = concat([stack(fwd, axis=1), stack(bwd, axis=1)], axis=2)
        return summary.reshape(batch, v, self.n_windows, 2 * self.hidden)

    def __call__(self, x) -> Tensor:
        x, squeeze = _as_batch(x)
        batch, v, _ = x.shape
        h_r = self.window_features(x)
        if self.cfg.aggregate == "mean":
            pooled = mean(h_r, axis=2)
        else:
            pooled = h_r[:, :, -1, :]
        out = self.mlp(pooled)
        return out.reshape(v, self.cfg.out_dim) if squeeze else out


def build_encoder(t: int, cfg: EncoderConfig, rng: Prng) -> Module:
    return CnnEncoder(t, cfg, rng) if cfg.variant == "cnn" else GruEncoder(t, cfg, rng)


def cnn_encode(x, encoder: CnnEncoder) -> Tensor:
    return encoder(x)


def gru_encode(x, encoder: GruEncoder) -> Tensor:
    return encoder(x)
