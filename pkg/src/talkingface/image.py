"""Lossless PNG import/export for frame sequences (8-bit quantization)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ShapeMismatchError
from .render_net import RenderFrame


def _to_uint8(arr: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(arr, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def save_rgb(path, rgb: np.ndarray) -> None:
    Image.fromarray(_to_uint8(rgb), mode="RGB").save(path)


def save_gray(path, gray: np.ndarray) -> None:
    Image.fromarray(_to_uint8(np.asarray(gray).squeeze()), mode="L").save(path)


def save_render_frame(path, frame: RenderFrame) -> None:
    """RGBA PNG: render in RGB, attention map in alpha."""
    rgba = np.concatenate([frame.rgb, frame.attention], axis=2)
    Image.fromarray(_to_uint8(rgba), mode="RGBA").save(path)


def load_render_frame(path) -> RenderFrame:
    arr = np.asarray(Image.open(path).convert("RGBA"), dtype=np.float32) / 255.0
    return RenderFrame(rgb=arr[..., :3], attention=arr[..., 3:])


def load_rgb(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0


def write_frame_index(dir_path, names: list[str]) -> None:
    (Path(dir_path) / "index.json").write_text(json.dumps({"frames": names}, indent=2))


def read_frame_index(dir_path) -> list[str]:
    index = Path(dir_path) / "index.json"
    if not index.exists():
        raise ShapeMismatchError(f"{dir_path} has no index.json frame index")
    return json.loads(index.read_text())["frames"]
