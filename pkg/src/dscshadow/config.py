"""JSON training configuration: schema, defaults, validation.

Unknown keys are rejected with their full dotted path so typos surface
immediately; the resolved configuration (defaults filled in) is echoed back
by the CLI for reproducibility.
"""

from __future__ import annotations

import json
from typing import Any, Callable

from .network import EncoderConfig, NetworkConfig, TrainConfig


class ConfigError(ValueError):
    """Invalid training configuration; the message names the key path."""


_REQUIRED = object()


def _typed(kind, what: str) -> Callable[[Any, str], Any]:
    def conv(v, path):
        if kind is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if not isinstance(v, kind) or isinstance(v, bool) and kind is not bool:
            raise ConfigError(f"{path}: expected {what}, got {v!r}")
        return v
    return conv


def _choice(*options: str) -> Callable[[Any, str], Any]:
    def conv(v, path):
        if v not in options:
            raise ConfigError(f"{path}: expected one of {options}, got {v!r}")
        return v
    return conv


def _int_list(v, path):
    if not isinstance(v, list) or not all(
            isinstance(x, int) and not isinstance(x, bool) for x in v):
        raise ConfigError(f"{path}: expected a list of integers, got {v!r}")
    return v


def _int_list_or_null(v, path):
    return None if v is None else _int_list(v, path)


_DSC_SCHEMA = {
    "enabled": (True, _typed(bool, "a boolean")),
    "scales": (None, _int_list_or_null),
    "rounds": (2, _typed(int, "an integer")),
    "share_attention": (True, _typed(bool, "a boolean")),
    "share_recurrent": (True, _typed(bool, "a boolean")),
    "attention": (True, _typed(bool, "a boolean")),
}

TRAIN_SCHEMA = {
    "task": (_REQUIRED, _choice("detect", "remove")),
    "dataset": (_REQUIRED, _typed(str, "a path string")),
    "out": (None, _typed(str, "a path string")),
    "seed": (0, _typed(int, "an integer")),
    "iterations": (2000, _typed(int, "an integer")),
    "lr": (None, _typed(float, "a number")),
    "momentum": (0.9, _typed(float, "a number")),
    "beta1": (0.9, _typed(float, "a number")),
    "beta2": (0.99, _typed(float, "a number")),
    "weight_decay": (5e-4, _typed(float, "a number")),
    "accum_steps": (1, _typed(int, "an integer")),
    "lr_milestones": ([], _int_list),
    "lr_factor": (0.316, _typed(float, "a number")),
    "scale_channels": ([16, 32, 64, 64], _int_list),
    "mlif_channels": (16, _typed(int, "an integer")),
    "color_space": ("lab", _choice("lab", "rgb")),
    "use_color_transfer": (False, _typed(bool, "a boolean")),
    "dsc": _DSC_SCHEMA,
}

# task-dependent learning rates applied when "lr" is omitted (values from
# the desk-scale calibration runs)
DEFAULT_LR = {"detect": 0.01, "remove": 5e-3}


def _resolve(raw: dict, schema: dict, path: str = "") -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"{path or 'config'}: expected an object, got {raw!r}")
    for key in raw:
        if key not in schema:
            raise ConfigError(f"unknown config key: {path}{key}")
    out = {}
    for key, spec in schema.items():
        if isinstance(spec, dict):
            out[key] = _resolve(raw.get(key, {}), spec, f"{path}{key}.")
            continue
        default, conv = spec
        if key in raw:
            out[key] = conv(raw[key], f"{path}{key}")
        elif default is _REQUIRED:
            raise ConfigError(f"missing required config key: {path}{key}")
        else:
            out[key] = default
    return out


def resolve_train_config(raw: dict) -> dict:
    """Validate a raw JSON dict and fill every default."""
    cfg = _resolve(raw, TRAIN_SCHEMA)
    if cfg["lr"] is None:
        cfg["lr"] = DEFAULT_LR[cfg["task"]]
    if cfg["iterations"] < 1:
        raise ConfigError("iterations: must be at least 1")
    if cfg["accum_steps"] < 1:
        raise ConfigError("accum_steps: must be at least 1")
    return cfg


def load_train_config(path: str) -> dict:
    with open(path, encoding="utf-8") as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})") from e
    return resolve_train_config(raw)


def network_config(cfg: dict) -> NetworkConfig:
    dsc = cfg["dsc"]
    return NetworkConfig(
        task=cfg["task"],
        encoder=EncoderConfig(tuple(cfg["scale_channels"])),
        dsc_scales=tuple(dsc["scales"]) if dsc["scales"] is not None else None,
        dsc_rounds=dsc["rounds"],
        dsc_share_attention=dsc["share_attention"],
        dsc_share_recurrent=dsc["share_recurrent"],
        dsc_attention=dsc["attention"],
        use_dsc=dsc["enabled"],
        mlif_channels=cfg["mlif_channels"],
        color_space=cfg["color_space"],
    )


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        iterations=cfg["iterations"],
        lr=cfg["lr"],
        momentum=cfg["momentum"],
        beta1=cfg["beta1"],
        beta2=cfg["beta2"],
        weight_decay=cfg["weight_decay"],
        accum_steps=cfg["accum_steps"],
        lr_milestones=tuple(cfg["lr_milestones"]),
        lr_factor=cfg["lr_factor"],
        seed=cfg["seed"],
    )
