"""Checkpoints: a directory of FACL1 parameter arrays plus a JSON manifest
carrying names, shapes, config, seed, and step count. Round trips are
bit-exact for float32 parameters."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import read_array, write_array
from .errors import CheckpointError

MANIFEST_NAME = "checkpoint.json"


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    config: dict
    seed: int
    step: int
    kind: str = "checkpoint"
    extra: dict = field(default_factory=dict)


def save_checkpoint(ckpt: Checkpoint, dir_path) -> None:
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (name, array) in enumerate(ckpt.params.items()):
        rel = f"param_{i:05d}.facl"
        write_array(out / rel, np.asarray(array, dtype=np.float32), kind="param")
        entries.append({"name": name, "file": rel, "shape": list(np.asarray(array).shape)})
    manifest = {
        "kind": ckpt.kind,
        "params": entries,
        "config": ckpt.config,
        "seed": ckpt.seed,
        "step": ckpt.step,
        "extra": ckpt.extra,
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2))


def load_checkpoint(dir_path) -> Checkpoint:
    src = Path(dir_path)
    manifest_path = src / MANIFEST_NAME
    if not manifest_path.exists():
        raise CheckpointError(f"{src} is not a checkpoint ({MANIFEST_NAME} missing)")
    manifest = json.loads(manifest_path.read_text())
    params = {}
    for entry in manifest["params"]:
        data, _, _ = read_array(src / entry["file"])
        if list(data.shape) != entry["shape"]:
            raise CheckpointError(
                f"{entry['file']}: shape {list(data.shape)} != manifest {entry['shape']}"
            )
        params[entry["name"]] = data
    return Checkpoint(
        params=params,
        config=manifest["config"],
        seed=int(manifest["seed"]),
        step=int(manifest["step"]),
        kind=manifest.get("kind", "checkpoint"),
        extra=manifest.get("extra", {}),
    )
