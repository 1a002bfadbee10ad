"""Spherical-harmonics shading up to band 2 (9 real basis functions per
color channel; constants listed in docs/formats.md)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NonUnitNormalError, ShapeMismatchError

GAMMA_DIM = 27
_UNIT_TOLERANCE = 1e-3


@dataclass
class SHIllumination:
    gamma: np.ndarray  # (27,) = 9 coefficients x 3 channels, channel-major

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=np.float64).ravel()
        if self.gamma.shape[0] != GAMMA_DIM:
            raise ShapeMismatchError(f"gamma must have length {GAMMA_DIM}, got {self.gamma.shape[0]}")


def sh_basis(normals: np.ndarray) -> np.ndarray:
    """Real SH basis values Y_0..Y_8 for unit normals, shape (N, 9)."""
    n = np.asarray(normals, dtype=np.float64)
    x, y, z = n[:, 0], n[:, 1], n[:, 2]
    return np.stack(
        [
            np.full_like(x, 0.282095),
            0.488603 * y,
            0.488603 * z,
            0.488603 * x,
            1.092548 * x * y,
            1.092548 * y * z,
            0.315392 * (3.0 * z * z - 1.0),
            1.092548 * x * z,
            0.546274 * (x * x - y * y),
        ],
        axis=1,
    )


def shade_sh(normals: np.ndarray, texture: np.ndarray, gamma) -> np.ndarray:
    """Per-vertex shaded color: texture_c * sum_k gamma[9c + k] * Y_k(normal).

    Output is unclamped; the rasterizer clamps final colors to [0, 1].
    """
    if not isinstance(gamma, SHIllumination):
        gamma = SHIllumination(gamma)
    normals = np.asarray(normals, dtype=np.float64)
    texture = np.asarray(texture, dtype=np.float64)
    if normals.ndim != 2 or normals.shape[1] != 3:
        raise ShapeMismatchError(f"normals must be (N, 3), got {normals.shape}")
    if texture.shape != normals.shape:
        raise ShapeMismatchError(f"texture shape {texture.shape} != normals shape {normals.shape}")
    lengths = np.linalg.norm(normals, axis=1)
    worst = np.abs(lengths - 1.0).max() if len(lengths) else 0.0
    if worst > _UNIT_TOLERANCE:
        raise NonUnitNormalError(f"normals deviate from unit length by up to {worst:.2e}")
    basis = sh_basis(normals)  # (N, 9)
    coeff = gamma.gamma.reshape(3, 9)  # channel-major blocks
    irradiance = basis @ coeff.T  # (N, 3)
    return texture * irradiance
