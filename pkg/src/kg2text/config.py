"""Run configuration: one flat key/value JSON object whose defaults are the full-size recipe."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .model import VARIANTS, ModelConfig
from .trainer import TrainConfig


@dataclass
class RunConfig:
    # model
    d: int = 500
    heads: int = 4
    layers: int = 6
    ffn: int = 2000
    dropout: float = 0.3
    variant: str = "graph_transformer"
    copy: bool = True
    # optimisation
    lr_max: float = 0.25
    lr_min: float = 0.05
    cycle_epochs: int = 5
    momentum: float = 0.9
    max_epochs: int = 15
    batch_size: int = 24
    patience: int | None = 2
    clip_norm: float | None = 1.0
    unk_threshold: int = 5
    # generation
    beam: int = 4
    max_len: int = 250
    # entity inference
    k: int = 12
    threshold: float = 0.7
    negatives: int = 5
    embed_dim: int = 32
    embed_epochs: int = 30
    seed: int = 0
    data_dir: str | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.data_dir is not None and not Path(self.data_dir).is_dir():
            raise FileNotFoundError(f"data_dir {self.data_dir} does not exist")

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.d, self.heads, self.layers, self.ffn, self.dropout, self.variant,
                           self.copy)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.lr_max, self.lr_min, self.cycle_epochs, self.momentum,
                           self.max_epochs, self.batch_size, self.patience, self.clip_norm,
                           self.unk_threshold, self.seed)

    def to_dict(self) -> dict:
        return asdict(self)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        bad = sorted(set(d) - set(known))
        if bad:
            raise KeyError(f"unknown config keys: {', '.join(bad)}")
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path, overrides: dict | None = None) -> "RunConfig":
        d = json.loads(Path(path).read_text()) if path else {}
        d.update(overrides or {})
        return cls.from_dict(d)


PRESETS = {
    "full": {},
    "desk": {"d": 64, "heads": 2, "layers": 2, "ffn": 256},
    "tiny": {"d": 16, "heads": 2, "layers": 1, "ffn": 32, "max_epochs": 3, "batch_size": 4},
}


def parse_value(key: str, raw: str):
    """Coerce a ``key=value`` override to the field's type."""
    f = {f.name: f for f in fields(RunConfig)}.get(key)
    if f is None:
        raise KeyError(f"unknown config key {key!r}")
    if raw.lower() in ("none", "null"):
        return None
    default = f.default
    if isinstance(default, bool):
        if raw.lower() not in ("true", "false", "1", "0"):
            raise ValueError(f"{key} expects true/false, got {raw!r}")
        return raw.lower() in ("true", "1")
    if isinstance(default, int) or key == "patience":
        return int(raw)
    if isinstance(default, float) or key == "clip_norm":
        return float(raw)
    return raw
