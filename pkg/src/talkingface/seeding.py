"""One seed fans out to every RNG in the pipeline. Determinism holds per
machine and thread configuration; training additionally pins torch to one
thread while it runs so update order is a single stream."""

from __future__ import annotations

import random

import numpy as np
import torch


def seed_all(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def derive_seed(seed: int, label: str) -> int:
    """Stable per-module sub-seed from the top-level seed and a label."""
    h = 0
    for ch in label:
        h = (h * 131 + ord(ch)) % (2**31 - 1)
    return (seed * 2654435761 + h) % 2**31
