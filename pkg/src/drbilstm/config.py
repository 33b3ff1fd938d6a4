"""Model and training configuration, ablation presets, and the key = value format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError


@dataclass
class ModelConfig:
    r: int = 300
    d: int = 450
    mlp_hidden: Optional[int] = None  # defaults to d
    dropout_rate: float = 0.4
    projection_activation: str = "relu"
    dependent_reading_rounds: int = 2
    # ablation toggles; all on is the full model
    hidden_mlp: bool = True
    avg_pool: bool = True
    max_pool: bool = True
    elem_prod: bool = True
    difference: bool = True
    inference_pooling: bool = True
    dep_infer: bool = True
    dep_enc: bool = True
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.r < 1 or self.d < 1:
            raise ConfigError(f"dimensions must be positive (r={self.r}, d={self.d})")
        if self.mlp_hidden is not None and self.mlp_hidden < 1:
            raise ConfigError("mlp_hidden must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.projection_activation not in ("relu", "tanh"):
            raise ConfigError(f"projection_activation must be relu or tanh, got {self.projection_activation!r}")
        if self.dependent_reading_rounds not in (1, 2, 3):
            raise ConfigError(f"dependent_reading_rounds must be 1, 2 or 3, got {self.dependent_reading_rounds}")
        if not (self.avg_pool or self.max_pool):
            raise ConfigError("at least one of avg_pool and max_pool must stay on")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @property
    def hidden_width(self) -> int:
        return self.mlp_hidden or self.d

    @property
    def enrichment_width(self) -> int:
        return 2 * self.d * (2 + int(self.difference) + int(self.elem_prod))

    @property
    def pooled_width(self) -> int:
        return 2 * self.d * (int(self.max_pool) + int(self.avg_pool))

    @property
    def encoder_rounds(self) -> int:
        return self.dependent_reading_rounds if self.dep_enc else 1

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class TrainConfig:
    learning_rate: float = 0.0004
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 10
    patience: Optional[int] = 5
    clip_norm: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.epochs < 1:
            raise ConfigError("epochs must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


# Removed-component rows of the ablation table, by toggle combination.
ABLATIONS = {
    "baseline": {},
    "no_hidden_mlp": {"hidden_mlp": False},
    "no_avg_pool": {"avg_pool": False},
    "no_max_pool": {"max_pool": False},
    "no_elem_prod": {"elem_prod": False},
    "no_difference": {"difference": False},
    "no_diff_elem_prod": {"difference": False, "elem_prod": False},
    "no_inference_pooling": {"inference_pooling": False},
    "no_dep_infer": {"dep_infer": False},
    "no_dep_enc": {"dep_enc": False},
    "no_dep_enc_infer": {"dep_enc": False, "dep_infer": False},
}

# Ensemble member variants; seed variants are added by the caller.
ROSTER = {
    "default": {},
    "tanh_projection": {"projection_activation": "tanh"},
    "one_round": {"dependent_reading_rounds": 1},
    "three_rounds": {"dependent_reading_rounds": 3},
}


def ablation(name: str, base: Optional[ModelConfig] = None) -> ModelConfig:
    if name not in ABLATIONS:
        raise ConfigError(f"unknown ablation {name!r}; choose from {', '.join(ABLATIONS)}")
    return (base or ModelConfig()).replace(**ABLATIONS[name])


# --------------------------------------------------------------------------
# key = value files


def _convert(raw: str, target):
    text = raw.strip()
    if text.lower() in ("none", "null", ""):
        return None
    if target in (bool, "bool"):
        lowered = text.lower()
        if lowered in ("true", "yes", "on", "1"):
            return True
        if lowered in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if target in (int, "int", "Optional[int]"):
        return int(text)
    if target in (float, "float", "Optional[float]"):
        return float(text)
    return text


def _field_types(cls) -> dict:
    return {f.name: f.type for f in fields(cls)}


def parse_key_values(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def from_key_values(cls, values: dict, base=None, strict: bool = True):
    """Build a config dataclass from string values, ignoring foreign keys unless ``strict``."""
    types = _field_types(cls)
    changes = {}
    for key, raw in values.items():
        if key not in types:
            if strict:
                raise ConfigError(f"unknown config key {key!r}")
            continue
        try:
            changes[key] = _convert(raw, types[key]) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    if base is None:
        return cls(**changes)
    return dataclasses.replace(base, **changes)


def to_key_values(*configs) -> str:
    lines = []
    for cfg in configs:
        for f in fields(cfg):
            lines.append(f"{f.name} = {getattr(cfg, f.name)}")
    return "\n".join(lines) + "\n"


def load_config_file(path) -> dict:
    return parse_key_values(Path(path).read_text(encoding="utf-8"))


def config_field_names(cls) -> list:
    return [f.name for f in fields(cls)]


__all__ = [
    "ABLATIONS",
    "ROSTER",
    "ModelConfig",
    "TrainConfig",
    "ablation",
    "from_key_values",
    "load_config_file",
    "parse_key_values",
    "to_key_values",
]
