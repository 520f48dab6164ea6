"""Run configuration as nested dataclasses, serialized as one flat JSON object of dotted keys."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import SyntheticConfig
from .encoder import EncoderConfig
from .graphgen import LossWeights
from .model import GRAPH_SOURCES
from .numerics import DEFAULT_SEED
from .predictor import PredictorConfig

LOSS_VARIANTS = ("ce", "ce+gl", "ce+sl", "full")


class ConfigError(ValueError):
    pass


@dataclass
class GraphConfig:
    source: str = "learnable"

    def __post_init__(self):
        if self.source not in GRAPH_SOURCES:
            raise ConfigError(f"graph.source must be one of {GRAPH_SOURCES}, got {self.source!r}")


@dataclass
class LossConfig:
    variant: str = "full"
    alpha: float = 1e-3
    beta: float = 1e-3
    gamma: float = 1e-4

    def __post_init__(self):
        if self.variant not in LOSS_VARIANTS:
            raise ConfigError(f"loss.variant must be one of {LOSS_VARIANTS}, got {self.variant!r}")
        LossWeights(self.alpha, self.beta, self.gamma)

    def effective(self) -> LossWeights:
        """Weights actually applied: the variant switches whole regularizer groups off."""
        use_group = self.variant in ("ce+gl", "full")
        use_sparse = self.variant in ("ce+sl", "full")
        return LossWeights(
            self.alpha if use_group else 0.0,
            self.beta if use_group else 0.0,
            self.gamma if use_sparse else 0.0,
        )


@dataclass
class TrainConfig:
    model: str = "graph"  # graph | timeseries
    epochs: int = 500
    batch_size: int = 16
    lr: float = 1e-4
    weight_decay: float = 1e-4

    def __post_init__(self):
        if self.model not in ("graph", "timeseries"):
            raise ConfigError(f"train.model must be graph or timeseries, got {self.model!r}")
        if self.epochs < 1 or self.batch_size < 2 or not self.lr > 0 or self.weight_decay < 0:
            raise ConfigError("need epochs >= 1, batch_size >= 2, lr > 0, weight_decay >= 0")


@dataclass
class CvConfig:
    folds: int = 5
    repetitions: int = 3
    final_fit: bool = True

    def __post_init__(self):
        if self.folds < 2 or self.repetitions < 1:
            raise ConfigError("need cv.folds >= 2 and cv.repetitions >= 1")


@dataclass
class RunConfig:
    data: SyntheticConfig = field(default_factory=SyntheticConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    cv: CvConfig = field(default_factory=CvConfig)
    seed: int = DEFAULT_SEED

    # -- flat dotted-key form -------------------------------------------

    def to_flat(self) -> dict:
        flat = {}
        for sec in dataclasses.fields(self):
            value = getattr(self, sec.name)
            if not dataclasses.is_dataclass(value):
                flat[sec.name] = value
                continue
            for f in dataclasses.fields(value):
                flat[f"{sec.name}.{f.name}"] = _jsonable(getattr(value, f.name))
        return flat

    @classmethod
    def from_flat(cls, flat: dict) -> "RunConfig":
        known = set(cls().to_flat())
        unknown = sorted(set(flat) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        nested: dict[str, dict] = {}
        top = {}
        for key, value in flat.items():
            if "." in key:
                sec, name = key.split(".", 1)
                nested.setdefault(sec, {})[name] = value
            else:
                top[key] = value
        kwargs = dict(top)
        types = {f.name: f.default_factory for f in dataclasses.fields(cls) if f.default_factory is not dataclasses.MISSING}
        try:
            for sec, values in nested.items():
                kwargs[sec] = types[sec](**values)
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def with_overrides(self, overrides: dict) -> "RunConfig":
        flat = self.to_flat()
        flat.update(overrides)
        return RunConfig.from_flat(flat)

    def to_json(self) -> str:
        return json.dumps(self.to_flat(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            flat = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(flat, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return cls().with_overrides(flat)


def _jsonable(value):
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    if dataclasses.is_dataclass(value):
        return dataclasses.asdict(value)
    return value


def desk_config() -> RunConfig:
    """Settings used for the synthetic experiments on a single CPU core.

    Differs from the defaults only in epochs (150) and CNN channel widths.
    """
    cfg = RunConfig()
    cfg.train.epochs = 150
    cfg.encoder.channels = (8, 8, 8)
    return cfg


def parse_override(text: str) -> tuple[str, object]:
    """``key=value`` with the value read as JSON when possible, else as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def parse_overrides(items) -> dict:
    out: dict = {}
    for item in items or ():
        key, value = parse_override(item)
        if key in out and out[key] != value:
            raise ConfigError(f"conflicting overrides for {key}: {out[key]!r} vs {value!r}")
        out[key] = value
    return out
