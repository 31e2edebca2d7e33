"""Run configuration: INI-style files with strict key checking.

A run is fully described by one config file (plus the documented CLI
overrides); the resolved configuration is hashed into the manifest so a
checkpoint can be matched to the exact settings that produced it.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .model import ATTN_MODES, MASK_MODES
from .training import TrainConfig

__all__ = [
    "ConfigError",
    "DataError",
    "DatasetConfig",
    "ModelConfig",
    "EvalConfig",
    "RunConfig",
    "load_config",
    "config_hash",
]

DATA_ROOT_ENV = "ASPECTMF_DATA_ROOT"

DATASET_FILES = {
    "ml100k": ("ml-100k", "u.data", "u.item"),
    "ml1m": ("ml-1m", "ratings.dat", "movies.dat"),
}


class ConfigError(ValueError):
    """Configuration problems: unknown keys, bad types, out-of-range values."""


class DataError(RuntimeError):
    """Dataset files missing or unreadable."""


@dataclass
class DatasetConfig:
    name: str = "ml100k"
    root: str = ""
    train_frac: float = 0.85
    val_frac: float = 0.05
    test_frac: float = 0.10
    split_seed: int = 42
    max_rating: float = 5.0

    def fractions(self):
        return (self.train_frac, self.val_frac, self.test_frac)

    def validate(self):
        if self.name not in DATASET_FILES:
            raise ConfigError(
                f"dataset.name must be one of {sorted(DATASET_FILES)}, got {self.name!r}"
            )
        fr = self.fractions()
        if any(f < 0 for f in fr):
            raise ConfigError("dataset fractions must be nonnegative")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"dataset fractions must sum to 1, got {sum(fr)}")
        if self.train_frac <= 0:
            raise ConfigError("dataset.train_frac must be positive")
        if self.max_rating <= 1:
            raise ConfigError(f"dataset.max_rating must exceed 1, got {self.max_rating}")

    def resolve_paths(self):
        """Locate the rating and item files, honoring the data-root env var."""
        subdir, ratings_name, items_name = DATASET_FILES[self.name]
        root = self.root or os.environ.get(DATA_ROOT_ENV, "")
        if not root:
            raise DataError(
                f"no dataset root: set [dataset] root or the {DATA_ROOT_ENV} env var"
            )
        base = Path(root)
        if (base / subdir).is_dir():
            base = base / subdir
        ratings = base / ratings_name
        items = base / items_name
        if not ratings.is_file():
            raise DataError(f"missing ratings file: {ratings}")
        if not items.is_file():
            raise DataError(f"missing item metadata file: {items}")
        return ratings, items


@dataclass
class ModelConfig:
    dim: int = 120
    attn_mode: str = "softmax"
    mask_mode: str = "masked"

    def validate(self):
        if self.dim < 1:
            raise ConfigError(f"model.dim must be positive, got {self.dim}")
        if self.attn_mode not in ATTN_MODES:
            raise ConfigError(
                f"model.attn_mode must be one of {ATTN_MODES}, got {self.attn_mode!r}"
            )
        if self.mask_mode not in MASK_MODES:
            raise ConfigError(
                f"model.mask_mode must be one of {MASK_MODES}, got {self.mask_mode!r}"
            )


@dataclass
class EvalConfig:
    recall_pairs: tuple = ((1, 3), (3, 5))
    lr_ridge: float = 1.0

    def validate(self):
        for pair in self.recall_pairs:
            m_top, k = pair
            if not (1 <= m_top <= k):
                raise ConfigError(f"eval.recall_pairs entry {m_top}:{k} needs 1 <= M <= K")
        if self.lr_ridge < 0:
            raise ConfigError(f"eval.lr_ridge must be nonnegative, got {self.lr_ridge}")


@dataclass
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: str = "runs/out"

    def validate(self):
        self.dataset.validate()
        self.model.validate()
        try:
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.eval.validate()
        if self.train.interp_weight > 0 and self.model.attn_mode == "linear":
            raise ConfigError(
                "model.attn_mode='linear' cannot be trained with train.lambda > 0; "
                "use softmax for training or set lambda = 0"
            )

    def resolved(self) -> dict:
        return {
            "dataset": {
                "name": self.dataset.name,
                "root": self.dataset.root,
                "train_frac": self.dataset.train_frac,
                "val_frac": self.dataset.val_frac,
                "test_frac": self.dataset.test_frac,
                "split_seed": self.dataset.split_seed,
                "max_rating": self.dataset.max_rating,
            },
            "model": {
                "dim": self.model.dim,
                "attn_mode": self.model.attn_mode,
                "mask_mode": self.model.mask_mode,
            },
            "train": self.train.to_dict(),
            "eval": {
                "recall_pairs": [f"{m}:{k}" for m, k in self.eval.recall_pairs],
                "lr_ridge": self.eval.lr_ridge,
            },
            "output_dir": self.output_dir,
        }


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.resolved(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


# Parsers keyed by section -> key -> (setter target attribute, converter)

def _to_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _to_pairs(raw: str) -> tuple:
    pairs = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise ValueError(f"recall pair {chunk!r} must look like M:K")
        m_s, k_s = chunk.split(":", 1)
        pairs.append((int(m_s), int(k_s)))
    if not pairs:
        raise ValueError("recall_pairs is empty")
    return tuple(pairs)


_SCHEMA = {
    "dataset": {
        "name": ("name", str),
        "root": ("root", str),
        "train_frac": ("train_frac", float),
        "val_frac": ("val_frac", float),
        "test_frac": ("test_frac", float),
        "split_seed": ("split_seed", int),
        "max_rating": ("max_rating", float),
    },
    "model": {
        "dim": ("dim", int),
        "attn_mode": ("attn_mode", str),
        "mask_mode": ("mask_mode", str),
    },
    "train": {
        "lr": ("lr", float),
        "l2": ("l2", float),
        "lambda": ("interp_weight", float),
        "batch_size": ("batch_size", int),
        "max_epochs": ("max_epochs", int),
        "patience": ("patience", int),
        "seed": ("seed", int),
        "shield": ("shield", _to_bool),
        "learn_scorer": ("learn_scorer", _to_bool),
        "kernel": ("kernel", str),
    },
    "eval": {
        "recall_pairs": ("recall_pairs", _to_pairs),
        "lr_ridge": ("lr_ridge", float),
    },
    "output": {
        "dir": ("output_dir", str),
    },
}


def load_config(path, overrides=None) -> RunConfig:
    """Parse and validate a config file; unknown sections or keys are errors.

    ``overrides`` is a flat dict of dotted keys (e.g. ``train.seed``)
    applied after the file, used by the CLI flags.
    """
    parser = configparser.ConfigParser(interpolation=None)
    read = parser.read(path, encoding="utf-8")
    if not read:
        raise ConfigError(f"cannot read config file: {path}")

    cfg = RunConfig()
    targets = {
        "dataset": cfg.dataset,
        "model": cfg.model,
        "train": cfg.train,
        "eval": cfg.eval,
        "output": cfg,
    }
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            spec = _SCHEMA[section].get(key)
            if spec is None:
                raise ConfigError(f"unknown config key {section}.{key}")
            attr, conv = spec
            try:
                value = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {exc}") from None
            setattr(targets[section], attr, value)

    for dotted, value in (overrides or {}).items():
        section, key = dotted.split(".", 1)
        attr, conv = _SCHEMA[section][key]
        if not isinstance(value, str):
            setattr(targets[section], attr, value)
        else:
            try:
                setattr(targets[section], attr, conv(value))
            except ValueError as exc:
                raise ConfigError(f"bad value for {dotted}: {exc}") from None

    cfg.validate()
    return cfg
