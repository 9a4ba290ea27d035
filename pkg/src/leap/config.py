"""Experiment configuration: a flat dataclass read from INI-style text.

Sections only group keys for readability; every key maps to one field of
:class:`ExperimentConfig`. A ``[link_prediction]`` or ``[wsn]`` section holds
overrides applied only when that task is selected.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

TASKS = ("link_prediction", "wsn")
TASK_ALIASES = {"lp": "link_prediction", "link_prediction": "link_prediction", "wsn": "wsn", "wsn_regression": "wsn"}

SECTIONS = {
    "experiment": ("task", "dataset", "seeds", "test_fraction", "normalize"),
    "paths": ("lengths", "cap", "respect_direction"),
    "model": (
        "aggregator",
        "embedding_dim",
        "dense_hidden",
        "dense_activation",
        "inner_hidden",
        "outer_hidden",
        "conv_filters",
        "conv_activation",
        "edge_features",
        "el_layers",
        "el_hidden",
        "el_activation",
        "pretrained_embeddings",
        "freeze_embeddings",
        "node_features",
    ),
    "train": ("lr", "max_epochs", "patience", "batch_size", "val_fraction"),
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    task: str = "link_prediction"
    dataset: str = ""
    seeds: tuple[int, ...] = (0, 1, 2)
    test_fraction: float = 0.1
    normalize: bool = True

    lengths: tuple[int, ...] = (3, 4)
    cap: int = 50
    respect_direction: bool = False

    aggregator: str = "edgeconv"
    embedding_dim: int = 32
    dense_hidden: int = 64
    dense_activation: str = "relu"
    inner_hidden: int = 32
    outer_hidden: int = 32
    conv_filters: int = 32
    conv_activation: str = "relu"
    edge_features: bool = True
    el_layers: int = 2
    el_hidden: int = 64
    el_activation: str = "relu"
    pretrained_embeddings: Optional[str] = None
    freeze_embeddings: bool = True
    node_features: Optional[str] = None

    lr: float = 0.001
    max_epochs: int = 30
    patience: int = 5
    batch_size: int = 32
    val_fraction: float = 0.1

    seed: int = field(default=0, metadata={"runtime": True})

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task: unknown task {self.task!r}; expected one of {TASKS}")
        self.lengths = tuple(int(x) for x in self.lengths)
        self.seeds = tuple(int(x) for x in self.seeds)
        if not self.lengths or min(self.lengths) < 2:
            raise ConfigError("lengths: path lengths must be >= 2")
        for name in ("cap", "embedding_dim", "dense_hidden", "inner_hidden", "outer_hidden", "conv_filters", "el_hidden", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be positive")
        for name in ("el_layers", "max_epochs", "patience"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name}: must be non-negative")
        if not self.lr > 0:
            raise ConfigError("lr: must be positive")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction: must lie in (0, 1)")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError("val_fraction: must lie in [0, 1)")
        if self.aggregator not in ("avgpool", "densemax", "seqofseq", "edgeconv"):
            raise ConfigError(f"aggregator: unknown aggregator {self.aggregator!r}")
        if not self.seeds:
            raise ConfigError("seeds: at least one seed is required")

    @property
    def output_activation(self) -> str:
        return "sigmoid" if self.task == "link_prediction" else "tanh"

    @property
    def loss_kind(self) -> str:
        return "bce" if self.task == "link_prediction" else "mse"

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: _plain(getattr(self, f.name)) for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown configuration key")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})

    def to_ini(self) -> str:
        lines = []
        for section, keys in SECTIONS.items():
            lines.append(f"[{section}]")
            for k in keys:
                v = getattr(self, k)
                if v is None:
                    continue
                if isinstance(v, tuple):
                    v = ",".join(map(str, v))
                elif isinstance(v, bool):
                    v = "true" if v else "false"
                lines.append(f"{k} = {v}")
            lines.append("")
        return "\n".join(lines)

    def hash(self) -> str:
        """Content hash of every setting except the runtime seed."""
        d = self.to_dict()
        d.pop("seed")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def _plain(v):
    return list(v) if isinstance(v, tuple) else v


_FIELD_TYPES = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key: str, raw: str):
    default = _FIELD_TYPES[key].default
    raw = raw.strip()
    try:
        if key in ("seeds", "lengths"):
            return tuple(int(x) for x in raw.replace(" ", "").split(",") if x)
        if key in ("pretrained_embeddings", "node_features"):
            return raw or None
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if key == "task":
            return TASK_ALIASES.get(raw.lower(), raw)
        return raw.lower() if key in ("aggregator", "dense_activation", "conv_activation", "el_activation") else raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse value {raw!r}") from None


def parse_config(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Parse INI text; unknown sections or keys raise :class:`ConfigError` naming the key."""
    parser = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    values: dict = {}
    overrides: dict[str, dict] = {}
    for section in parser.sections():
        sec = section.strip().lower()
        if sec in TASK_ALIASES:
            target = overrides.setdefault(TASK_ALIASES[sec], {})
            allowed = {k for keys in SECTIONS.values() for k in keys} - {"task"}
        elif sec in SECTIONS:
            target = values
            allowed = set(SECTIONS[sec])
        else:
            raise ConfigError(f"[{section}]: unknown section")
        for key, raw in parser.items(section):
            if key not in allowed:
                raise ConfigError(f"{key}: unknown configuration key in [{section}]")
            target[key] = _coerce(key, raw)
    base = base or ExperimentConfig()
    task = values.get("task", base.task)
    values.update(overrides.get(task, {}))
    try:
        return dataclasses.replace(base, **values)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
