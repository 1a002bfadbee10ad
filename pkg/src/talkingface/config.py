"""Pipeline configuration: one JSON document, namespaced per module, with a
--set key=value override mechanism. Unknown keys are rejected; missing keys
take the defaults below."""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .attribute_gan import AttributeGanConfig
from .errors import ConfigError
from .pipeline import CameraConfig
from .render_net import RenderNetConfig
from .seeding import derive_seed

DEFAULTS: dict = {
    "seed": 0,
    "audio": {
        "target_fps": 30.0,
        "window": 128,
        "stride": 5,
    },
    "attribute_gan": {
        "d_z": 128,
        "d_c": 128,
        "hidden": 64,
        "disc_hidden": 64,
        "omega_exp": 2.0,
        "omega_pose": 1.0,
        "omega_eye": 5.0,
        "omega_state": 10.0,
        "omega_motion": 10.0,
        "omega_adv": 0.1,
        "learning_rate": 1e-4,
        "general_epochs": 50,
        "general_batch": 64,
        "finetune_epochs": 10,
        "finetune_batch": 16,
        "max_steps": None,
    },
    "render": {
        "n_w": 2,
        "lambda_fm": 2.0,
        "lambda_perc": 10.0,
        "lambda_l1": 50.0,
        "learning_rate": 1e-4,
        "epochs": 50,
        "batch": 1,
        "decay_epochs": 30,
        "base_channels": 24,
        "disc_channels": 24,
        "n_scales": 3,
        "gan_mode": "log",
        "extractor_channels": 8,
        "max_steps": None,
    },
    "eye": {
        "threshold": 0.02,
        "au_max": 5.0,
    },
    "face3d": {
        "width": 256,
        "height": 256,
        "scale": 100.0,
        "center": [0.0, 0.0],
    },
    "metrics": {
        "blink_hi": 0.5,
        "blink_lo": 0.3,
        "hist_bin_s": 0.1,
        "personalization_window": 64,
        "personalization_stride": 32,
        "personalization_epochs": 150,
        "k_fold": 2,
    },
}


def _merge(defaults: dict, overrides: dict, path: str = "") -> dict:
    out = copy.deepcopy(defaults)
    for key, value in overrides.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown config key {here!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {here!r} must be an object")
            out[key] = _merge(defaults[key], value, here)
        else:
            out[key] = value
    return out


def load_config(path=None, overrides: list[str] | None = None, seed: int | None = None) -> dict:
    """Load config JSON (or defaults), apply --set overrides, then --seed."""
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    cfg = _merge(DEFAULTS, doc)
    for item in overrides or []:
        cfg = apply_override(cfg, item)
    if seed is not None:
        cfg["seed"] = seed
    return cfg


def apply_override(cfg: dict, item: str) -> dict:
    if "=" not in item:
        raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw  # bare strings are allowed unquoted
    node: dict = {}
    leaf = node
    parts = key.split(".")
    for part in parts[:-1]:
        leaf[part] = {}
        leaf = leaf[part]
    leaf[parts[-1]] = value
    return _merge(cfg, node)


def attribute_gan_config(cfg: dict) -> AttributeGanConfig:
    block = cfg["attribute_gan"]
    return AttributeGanConfig(
        window=cfg["audio"]["window"],
        seed=derive_seed(cfg["seed"], "attribute_gan"),
        **block,
    )


def render_net_config(cfg: dict) -> RenderNetConfig:
    return RenderNetConfig(seed=derive_seed(cfg["seed"], "render_net"), **cfg["render"])


def camera_config(cfg: dict) -> CameraConfig:
    block = cfg["face3d"]
    return CameraConfig(
        width=block["width"],
        height=block["height"],
        scale=block["scale"],
        center=tuple(block["center"]),
    )
