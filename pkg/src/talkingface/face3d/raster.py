"""Deterministic software rasterizer: orthographic x-y projection, z-buffer,
barycentric color interpolation.

Conventions (documented in docs/formats.md):
  - pixel (row, col) has center (col + 0.5, row + 0.5) in x-y pixel space;
  - the viewer looks along -z, so the LARGER interpolated z wins the depth
    test; ties keep the earlier triangle;
  - shared edges follow a top-left fill rule, so adjacent triangles cover
    each boundary pixel exactly once;
  - zero-area triangles are skipped.
Output is bit-identical across runs: triangles are processed sequentially in
input order with no parallel reductions.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError


def viewport_transform(
    vertices: np.ndarray,
    width: int,
    height: int,
    scale: float,
    center: tuple[float, float] = (0.0, 0.0),
) -> np.ndarray:
    """Map model x,y (y up) to pixel x,y (y down), keeping z for depth."""
    vertices = np.asarray(vertices, dtype=np.float64)
    out = np.empty_like(vertices)
    out[:, 0] = width / 2.0 + (vertices[:, 0] - center[0]) * scale
    out[:, 1] = height / 2.0 - (vertices[:, 1] - center[1]) * scale
    out[:, 2] = vertices[:, 2]
    return out


def project_landmarks(vertices: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Orthographic x,y of the selected vertices."""
    vertices = np.asarray(vertices, dtype=np.float64)
    return vertices[np.asarray(indices, dtype=np.int64)][:, :2].copy()


def _edge(ax, ay, bx, by, px, py):
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _accepts_boundary(ax, ay, bx, by) -> bool:
    # Top-left rule for positively oriented triangles in y-down pixel space.
    dx, dy = bx - ax, by - ay
    return dy < 0 or (dy == 0 and dx > 0)


def rasterize_buffers(
    vertices: np.ndarray,
    colors: np.ndarray | None,
    triangles: np.ndarray,
    width: int,
    height: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rasterize into (color, depth, triangle-id) buffers.

    vertices are in pixel space (see viewport_transform). colors may be None
    to skip color interpolation (coverage/depth only). The triangle-id buffer
    holds the winning input triangle index per pixel, -1 for background.
    """
    if width <= 0 or height <= 0:
        raise ShapeMismatchError(f"image dims must be positive, got {width}x{height}")
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64)
    color = np.zeros((height, width, 3), dtype=np.float64)
    depth = np.full((height, width), -np.inf, dtype=np.float64)
    tri_id = np.full((height, width), -1, dtype=np.int64)
    if colors is not None:
        colors = np.asarray(colors, dtype=np.float64)

    for m in range(len(triangles)):
        ia, ib, ic = triangles[m]
        ax, ay, az = vertices[ia]
        bx, by, bz = vertices[ib]
        cx, cy, cz = vertices[ic]
        area2 = _edge(ax, ay, bx, by, cx, cy)
        if area2 == 0.0:
            continue
        if area2 < 0.0:  # reorient positively; keeps the fill rule one-sided
            ib, ic = ic, ib
            (bx, by, bz), (cx, cy, cz) = (cx, cy, cz), (bx, by, bz)
            area2 = -area2

        col0 = max(0, int(np.ceil(min(ax, bx, cx) - 0.5)))
        col1 = min(width - 1, int(np.floor(max(ax, bx, cx) - 0.5)))
        row0 = max(0, int(np.ceil(min(ay, by, cy) - 0.5)))
        row1 = min(height - 1, int(np.floor(max(ay, by, cy) - 0.5)))
        if col0 > col1 or row0 > row1:
            continue

        px = np.arange(col0, col1 + 1, dtype=np.float64) + 0.5
        py = np.arange(row0, row1 + 1, dtype=np.float64) + 0.5
        gx, gy = np.meshgrid(px, py)

        # Edge opposite each vertex; baryentric weight_i = e_i / area2.
        e_a = _edge(bx, by, cx, cy, gx, gy)
        e_b = _edge(cx, cy, ax, ay, gx, gy)
        e_c = _edge(ax, ay, bx, by, gx, gy)
        inside = (
            (e_a > 0) | ((e_a == 0) & _accepts_boundary(bx, by, cx, cy))
        ) & (
            (e_b > 0) | ((e_b == 0) & _accepts_boundary(cx, cy, ax, ay))
        ) & (
            (e_c > 0) | ((e_c == 0) & _accepts_boundary(ax, ay, bx, by))
        )
        if not inside.any():
            continue

        wa, wb, wc = e_a / area2, e_b / area2, e_c / area2
        z = wa * az + wb * bz + wc * cz
        window = (slice(row0, row1 + 1), slice(col0, col1 + 1))
        wins = inside & (z > depth[window])
        if not wins.any():
            continue
        depth[window][wins] = z[wins]
        tri_id[window][wins] = m
        if colors is not None:
            shade = (
                wa[..., None] * colors[ia]
                + wb[..., None] * colors[ib]
                + wc[..., None] * colors[ic]
            )
            color[window][wins] = shade[wins]

    return color, depth, tri_id


def rasterize(
    vertices: np.ndarray,
    colors: np.ndarray,
    triangles: np.ndarray,
    width: int,
    height: int,
) -> np.ndarray:
    """RGB render (height, width, 3) with final colors clamped to [0, 1]."""
    color, _, _ = rasterize_buffers(vertices, colors, triangles, width, height)
    return np.clip(color, 0.0, 1.0)
