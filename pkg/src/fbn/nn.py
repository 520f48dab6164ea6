"""Parameter containers, initializers and checkpoint I/O shared by the model parts."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

import numpy as np

from .numerics import Prng, Tensor, linear, relu


def glorot_uniform(shape: tuple[int, ...], fan_in: int, fan_out: int, rng: Prng) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Module:
    """Owns named tracked tensors plus child modules, in insertion order."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.children: dict[str, Module] = {}

    def add_param(self, name: str, data: np.ndarray) -> Tensor:
        t = Tensor(data, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def add_child(self, name: str, module: "Module") -> "Module":
        self.children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self.params.items():
            yield prefix + name, p
        for cname, child in self.children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def extra_state(self) -> dict[str, np.ndarray]:
        """Non-trainable arrays that belong in a checkpoint (running stats)."""
        out: dict[str, np.ndarray] = {}
        for cname, child in self.children.items():
            for k, v in child.extra_state().items():
                out[f"{cname}.{k}"] = v
        return out

    def load_extra_state(self, arrays: dict[str, np.ndarray]) -> None:
        for cname, child in self.children.items():
            prefix = cname + "."
            child.load_extra_state({k[len(prefix):]: v for k, v in arrays.items() if k.startswith(prefix)})

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: np.array(v, copy=True) for name, v in self.extra_state().items()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        named = dict(self.named_parameters())
        missing = [k for k in named if k not in state]
        if missing:
            raise KeyError(f"checkpoint lacks parameters: {missing}")
        for name, p in named.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: checkpoint shape {arr.shape} != model shape {p.shape}")
            p.data[...] = arr
        self.load_extra_state({k: v for k, v in state.items() if k not in named})


class Mlp(Module):
    """Dense layers with ReLU between them (none after the last)."""

    def __init__(self, sizes: list[int], rng: Prng):
        super().__init__()
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        self.sizes = list(sizes)
        for i, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.add_param(f"{i}.weight", glorot_uniform((fi, fo), fi, fo, rng))
            self.add_param(f"{i}.bias", np.zeros(fo))

    def __call__(self, x: Tensor) -> Tensor:
        n = len(self.sizes) - 1
        for i in range(n):
            x = linear(x, self.params[f"{i}.weight"], self.params[f"{i}.bias"])
            if i < n - 1:
                x = relu(x)
        return x


def save_checkpoint(module: Module, directory: str | Path) -> None:
    """One CSV per array (2-D view, 17 significant digits) plus ``shapes.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    shapes = {}
    for name, arr in module.state_dict().items():
        arr = np.asarray(arr, dtype=np.float64)
        shapes[name] = list(arr.shape)
        flat = arr.reshape(arr.shape[0], -1) if arr.ndim >= 2 else arr.reshape(1, -1)
        np.savetxt(directory / f"{name}.csv", flat, delimiter=",", fmt="%.17g")
    (directory / "shapes.json").write_text(json.dumps(shapes, indent=2, sort_keys=True) + "\n")


def load_checkpoint(module: Module, directory: str | Path) -> None:
    directory = Path(directory)
    manifest = directory / "shapes.json"
    if not manifest.exists():
        raise FileNotFoundError(f"checkpoint manifest missing: {manifest}")
    shapes = json.loads(manifest.read_text())
    state = {}
    for name, shape in shapes.items():
        path = directory / f"{name}.csv"
        if not path.exists():
            raise FileNotFoundError(f"checkpoint array missing: {path}")
        flat = np.loadtxt(path, delimiter=",", ndmin=2)
        state[name] = flat.reshape(shape)
    module.load_state_dict(state)


__all__ = ["Module", "Mlp", "glorot_uniform", "save_checkpoint", "load_checkpoint"]
