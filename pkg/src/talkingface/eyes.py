"""Part-sensitive eye encoding: elliptical vertex selection on the mean face,
attention-map rasterization, and blink-AU normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySelectionError, ShapeMismatchError
from .face3d.basis import FaceBasis
from .face3d.raster import rasterize_buffers

AU_MAX_INTENSITY = 5.0  # customary ceiling of graded AU intensities


@dataclass
class EyeRegion:
    """Per-eye vertex sets selected by the elliptical criterion on the mean face."""

    vertex_ids: dict[str, np.ndarray]  # "left"/"right" -> sorted vertex ids
    centers: dict[str, np.ndarray]  # per-eye 2-D centers in mean-face coords
    threshold: float

    def all_ids(self) -> np.ndarray:
        return np.unique(np.concatenate(list(self.vertex_ids.values())))


def ellipse_membership(xy: np.ndarray, center: np.ndarray, th: float) -> np.ndarray:
    """(v_x - c_x)^2 / 4 + (v_y - c_y)^2 < th, evaluated per row, strict."""
    dx = xy[:, 0] - center[0]
    dy = xy[:, 1] - center[1]
    return dx * dx / 4.0 + dy * dy < th


def select_eye_vertices(basis: FaceBasis, th: float) -> EyeRegion:
    """Select every mean-face vertex inside the per-eye ellipse with semi-axes
    2*sqrt(th) in x and sqrt(th) in y. Pose and expression never enter."""
    if th <= 0:
        raise ShapeMismatchError(f"eye threshold must be positive, got {th}")
    xy = basis.mean_vertices[:, :2]
    centers = basis.eye_centers()
    vertex_ids = {}
    for side, center in centers.items():
        ids = np.flatnonzero(ellipse_membership(xy, center, th))
        if ids.size == 0:
            raise EmptySelectionError(
                f"threshold {th} selects no vertices for the {side} eye; mesh too coarse"
            )
        vertex_ids[side] = ids.astype(np.int64)
    return EyeRegion(vertex_ids=vertex_ids, centers=centers, threshold=th)


def eye_triangle_ids(triangles: np.ndarray, region: EyeRegion) -> np.ndarray:
    """Triangles whose three vertices all lie in one eye's vertex set."""
    triangles = np.asarray(triangles, dtype=np.int64)
    selected = np.zeros(0, dtype=np.int64)
    for ids in region.vertex_ids.values():
        member = np.isin(triangles, ids)
        selected = np.concatenate([selected, np.flatnonzero(member.all(axis=1))])
    return np.unique(selected)


def attention_from_buffers(tri_buffer: np.ndarray, eye_tris: np.ndarray, au45: float) -> np.ndarray:
    """Attention map from an existing rasterization's triangle-id buffer."""
    mask = np.isin(tri_buffer, eye_tris) & (tri_buffer >= 0)
    return np.where(mask, float(au45), 0.0)


def render_attention_map(
    vertices_px: np.ndarray,
    triangles: np.ndarray,
    region: EyeRegion,
    au45: float,
    width: int,
    height: int,
) -> np.ndarray:
    """Rasterize the eye attention map, (height, width) in [0, 1].

    The whole mesh goes through the shared rasterizer so eye pixels occluded
    by nearer geometry stay zero and the map is pixel-aligned with the face
    render. au45 must already be normalized to [0, 1].
    """
    _, _, tri_buffer = rasterize_buffers(vertices_px, None, triangles, width, height)
    return attention_from_buffers(tri_buffer, eye_triangle_ids(triangles, region), au45)


def normalize_au(raw_au45: float, max_intensity: float = AU_MAX_INTENSITY) -> float:
    """Clamp raw_au45 / max_intensity into [0, 1]."""
    if max_intensity <= 0:
        raise ShapeMismatchError(f"max_intensity must be positive, got {max_intensity}")
    return float(min(max(raw_au45 / max_intensity, 0.0), 1.0))
