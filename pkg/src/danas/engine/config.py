"""Run configuration: one JSON document, validated field by field."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..archspace import OP_SETS
from ..dataspace import DataConfig, enumerate_configs

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Schema or usage error; maps to exit code 2 at the CLI."""


@dataclass
class ModelConfig:
    cells: int = 4
    nodes: int = 4
    channels: int = 8
    stem_multiplier: int = 3
    partial_channel_k: int = 2
    op_set: str = "darts8"


@dataclass
class DatasetConfig:
    root: str = ""
    task: str = "folders"  # folders | all35 | names


@dataclass
class SearchRunConfig:
    """Everything a search/evaluation run depends on.

    The update-loop hyperparameters (eta_w, eta_arch, momentum, decay,
    warm-up length, batch size) have no published reference values; the
    defaults here are desk-scale choices and are recorded verbatim in
    each run's config.json.
    """

    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    space: object = None  # space description; None = stock 8-config grid
    allow_custom_configs: bool = False
    data_aware: bool = True
    fixed_config: list | None = None
    alignment: str = "pre_process"
    warmup_epochs: int = 2
    search_epochs: int = 10
    eval_epochs: int = 10
    batch_size: int = 16
    eta_w: float = 0.05
    eta_arch: float = 0.3
    momentum: float = 0.9
    weight_decay: float = 3e-4
    arch_weight_decay: float = 0.0
    precision: str = "float32"
    early_stop_on_raw_gamma: bool = False
    normalize_features: bool = True
    model: ModelConfig = field(default_factory=ModelConfig)

    # -- resolution helpers ---------------------------------------------
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64

    def configs(self) -> list[DataConfig]:
        return enumerate_configs(self.space,
                                 allow_custom=self.allow_custom_configs)

    def fixed_data_config(self) -> DataConfig:
        if self.fixed_config is None:
            raise ConfigError("fixed_config is not set")
        w, h, m = self.fixed_config
        return DataConfig(int(w), int(h), int(m))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_TOP_FIELDS = {
    "schema_version": int, "seed": int, "dataset": dict, "space": object,
    "allow_custom_configs": bool, "data_aware": bool, "fixed_config": object,
    "alignment": str, "warmup_epochs": int, "search_epochs": int,
    "eval_epochs": int, "batch_size": int, "eta_w": float, "eta_arch": float,
    "momentum": float, "weight_decay": float, "arch_weight_decay": float,
    "precision": str, "early_stop_on_raw_gamma": bool,
    "normalize_features": bool, "model": dict,
}

_MODEL_FIELDS = {
    "cells": int, "nodes": int, "channels": int, "stem_multiplier": int,
    "partial_channel_k": int, "op_set": str,
}

_DATASET_FIELDS = {"root": str, "task": str}


def _check_fields(d: dict, allowed: dict, prefix: str, problems: list[str]):
    for key, value in d.items():
        if key not in allowed:
            problems.append(f"{prefix}{key}: unknown field")
            continue
        want = allowed[key]
        if want is object or value is None:
            continue
        if want is float:
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                problems.append(f"{prefix}{key}: expected a number, got "
                                f"{type(value).__name__}")
        elif want is int:
            if not isinstance(value, int) or isinstance(value, bool):
                problems.append(f"{prefix}{key}: expected an integer, got "
                                f"{type(value).__name__}")
        elif not isinstance(value, want):
            problems.append(f"{prefix}{key}: expected {want.__name__}, got "
                            f"{type(value).__name__}")


def validate_config_dict(raw: dict) -> list[str]:
    """All schema problems, each as 'field: message'. Empty means valid."""
    problems: list[str] = []
    if not isinstance(raw, dict):
        return ["config: top level must be a JSON object"]
    _check_fields(raw, _TOP_FIELDS, "", problems)
    if isinstance(raw.get("dataset"), dict):
        _check_fields(raw["dataset"], _DATASET_FIELDS, "dataset.", problems)
    if isinstance(raw.get("model"), dict):
        _check_fields(raw["model"], _MODEL_FIELDS, "model.", problems)
    if problems:
        return problems

    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        problems.append(f"schema_version: got {version}, supported "
                        f"{SCHEMA_VERSION}")

    cfg_kwargs = dict(raw)
    cfg_kwargs.setdefault("dataset", {})
    cfg_kwargs.setdefault("model", {})
    cfg = SearchRunConfig(
        **{**cfg_kwargs,
           "dataset": DatasetConfig(**cfg_kwargs["dataset"]),
           "model": ModelConfig(**cfg_kwargs["model"])})
    problems.extend(validate_config(cfg))
    return problems


def validate_config(cfg: SearchRunConfig) -> list[str]:
    problems: list[str] = []

    def bad(name, msg):
        problems.append(f"{name}: {msg}")

    for name in ("warmup_epochs", "search_epochs", "eval_epochs"):
        if getattr(cfg, name) < 0:
            bad(name, "must be >= 0")
    for name in ("eta_w", "eta_arch"):
        if getattr(cfg, name) <= 0:
            bad(name, "must be > 0")
    if not 0.0 <= cfg.momentum < 1.0:
        bad("momentum", "must be in [0, 1)")
    for name in ("weight_decay", "arch_weight_decay"):
        if getattr(cfg, name) < 0:
            bad(name, "must be >= 0")
    if cfg.batch_size < 1:
        bad("batch_size", "must be >= 1")
    if cfg.alignment not in ("zero_pad", "pre_process"):
        bad("alignment", f"unknown strategy {cfg.alignment!r}")
    if cfg.precision not in ("float32", "float64"):
        bad("precision", f"unknown precision {cfg.precision!r}")
    if not cfg.data_aware and cfg.fixed_config is None:
        bad("fixed_config", "required when data_aware is false")
    if cfg.fixed_config is not None:
        try:
            cfg.fixed_data_config()
        except (ConfigError, ValueError, TypeError) as exc:
            bad("fixed_config", str(exc))
    if cfg.dataset.task not in ("folders", "all35", "names"):
        bad("dataset.task", f"unknown task {cfg.dataset.task!r}")
    if not cfg.dataset.root:
        bad("dataset.root", "required")
    if cfg.model.cells < 3:
        bad("model.cells", "need at least 3 cells")
    if cfg.model.nodes < 1:
        bad("model.nodes", "need at least 1 intermediate node")
    if cfg.model.op_set not in OP_SETS:
        bad("model.op_set", f"unknown op set {cfg.model.op_set!r}; "
            f"choose from {sorted(OP_SETS)}")
    if cfg.model.partial_channel_k < 1:
        bad("model.partial_channel_k", "must be >= 1")
    elif cfg.model.channels % cfg.model.partial_channel_k != 0:
        bad("model.channels", f"{cfg.model.channels} not divisible by "
            f"partial_channel_k={cfg.model.partial_channel_k}")
    if cfg.data_aware:
        try:
            cfg.configs()
        except ValueError as exc:
            bad("space", str(exc))
    return problems


def load_config(path, overrides: dict | None = None) -> SearchRunConfig:
    """Parse, apply flag overrides (flags win), validate; raise ConfigError."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return config_from_dict(raw, overrides)


def config_from_dict(raw: dict, overrides: dict | None = None) -> SearchRunConfig:
    raw = dict(raw)
    for key, value in (overrides or {}).items():
        if key.startswith("model."):
            raw.setdefault("model", {})
            raw["model"] = {**raw["model"], key.split(".", 1)[1]: value}
        elif key.startswith("dataset."):
            raw.setdefault("dataset", {})
            raw["dataset"] = {**raw["dataset"], key.split(".", 1)[1]: value}
        else:
            raw[key] = value
    problems = validate_config_dict(raw)
    if problems:
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems))
    kwargs = dict(raw)
    kwargs["dataset"] = DatasetConfig(**kwargs.get("dataset", {}))
    kwargs["model"] = ModelConfig(**kwargs.get("model", {}))
    return SearchRunConfig(**kwargs)
