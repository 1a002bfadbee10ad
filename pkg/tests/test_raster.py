import numpy as np
import pytest

from talkingface.errors import ShapeMismatchError
from talkingface.face3d import (
    PoseParams,
    apply_pose,
    project_landmarks,
    rasterize,
    rasterize_buffers,
    viewport_transform,
)


def test_right_triangle_exact_pixel_set():
    # Triangle (0,0)-(4,0)-(0,4) in pixel space. Pixel centers (c+.5, r+.5)
    # are covered when c+r < 3 (diagonal is a non-top-left edge, excluded;
    # the horizontal top edge and vertical left edge are included).
    verts = np.array([[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [0.0, 4.0, 0.0]])
    colors = np.ones((3, 3))
    img = rasterize(verts, colors, np.array([[0, 1, 2]]), 8, 8)
    covered = {(r, c) for r, c in zip(*np.nonzero(img[..., 0]))}
    assert covered == {(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (2, 0)}


def test_shared_edge_covered_exactly_once():
    # Two triangles split the square [0,4]x[0,4]; every interior pixel center
    # must be covered by exactly one triangle under the top-left rule.
    verts = np.array(
        [[0.0, 0.0, 0.0], [4.0, 0.0, 0.0], [4.0, 4.0, 0.0], [0.0, 4.0, 0.0]]
    )
    tris = np.array([[0, 1, 3], [1, 2, 3]])
    _, _, tri_a = rasterize_buffers(verts, None, tris[:1], 8, 8)
    _, _, tri_b = rasterize_buffers(verts, None, tris[1:], 8, 8)
    count = (tri_a >= 0).astype(int) + (tri_b >= 0).astype(int)
    assert count.max() == 1
    assert count.sum() == 16  # all 4x4 pixel centers inside the square


def test_z_buffer_nearer_wins():
    # Same footprint, the second triangle sits nearer (larger z).
    verts = np.array(
        [
            [0.0, 0.0, 0.0], [6.0, 0.0, 0.0], [0.0, 6.0, 0.0],
            [0.0, 0.0, 1.0], [6.0, 0.0, 1.0], [0.0, 6.0, 1.0],
        ]
    )
    colors = np.array([[1, 0, 0]] * 3 + [[0, 1, 0]] * 3, dtype=np.float64)
    img, _, tri = rasterize_buffers(verts, colors, np.array([[0, 1, 2], [3, 4, 5]]), 8, 8)
    mask = tri >= 0
    assert mask.any()
    assert np.all(tri[mask] == 1)
    assert np.all(img[mask][:, 1] == 1.0)


def test_depth_tie_keeps_earlier_triangle():
    verts = np.array([[0.0, 0.0, 0.0], [6.0, 0.0, 0.0], [0.0, 6.0, 0.0]])
    _, _, tri = rasterize_buffers(verts, None, np.array([[0, 1, 2], [0, 1, 2]]), 8, 8)
    assert np.all(tri[tri >= 0] == 0)


def test_empty_triangle_list_is_background():
    img = rasterize(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3), dtype=int), 4, 4)
    assert np.all(img == 0.0)


def test_degenerate_triangle_skipped():
    verts = np.array([[1.0, 1.0, 0.0], [3.0, 3.0, 0.0], [5.0, 5.0, 0.0]])
    img, _, tri = rasterize_buffers(verts, np.ones((3, 3)), np.array([[0, 1, 2]]), 8, 8)
    assert np.all(tri == -1)


def test_barycentric_interpolation_midpoint():
    verts = np.array([[0.0, 0.0, 0.0], [8.0, 0.0, 0.0], [0.0, 8.0, 0.0]])
    colors = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    img = rasterize(verts, colors, np.array([[0, 1, 2]]), 8, 8)
    # pixel (0,0) center (0.5,0.5): weights (1-1/8-1/8, 1/16, 1/16)... compute directly
    w_b = 0.5 / 8.0
    w_c = 0.5 / 8.0
    w_a = 1.0 - w_b - w_c
    assert np.allclose(img[0, 0], [w_a, w_b, w_c], atol=1e-12)


def test_rasterize_clamps_colors():
    verts = np.array([[0.0, 0.0, 0.0], [8.0, 0.0, 0.0], [0.0, 8.0, 0.0]])
    colors = np.array([[2.0, -1.0, 0.5]] * 3)
    img = rasterize(verts, colors, np.array([[0, 1, 2]]), 8, 8)
    inside = img[0, 0]
    assert np.allclose(inside, [1.0, 0.0, 0.5])


def test_rasterize_deterministic():
    rng = np.random.default_rng(0)
    verts = rng.uniform(0, 32, (60, 3))
    colors = rng.uniform(0, 1, (60, 3))
    tris = rng.integers(0, 60, (40, 3))
    a = rasterize(verts, colors, tris, 32, 32)
    b = rasterize(verts, colors, tris, 32, 32)
    assert a.tobytes() == b.tobytes()


def test_bad_dims_rejected():
    with pytest.raises(ShapeMismatchError):
        rasterize_buffers(np.zeros((3, 3)), None, np.array([[0, 1, 2]]), 0, 4)


def test_viewport_transform_mapping():
    verts = np.array([[0.0, 0.0, 2.0], [1.0, 1.0, 3.0]])
    px = viewport_transform(verts, 100, 80, scale=10.0)
    assert np.allclose(px[0], [50.0, 40.0, 2.0])
    # model +y maps upward on screen (smaller pixel y)
    assert np.allclose(px[1], [60.0, 30.0, 3.0])


def test_project_landmarks_verbatim():
    verts = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]])
    pts = project_landmarks(verts, np.array([2, 0]))
    assert np.array_equal(pts, np.array([[7.0, 8.0], [1.0, 2.0]]))


def test_landmarks_shift_with_translation():
    rng = np.random.default_rng(1)
    verts = rng.standard_normal((20, 3))
    idx = np.arange(5)
    pose = PoseParams(euler=np.zeros(3), translation=np.array([2.0, -3.0, 1.0]))
    moved = project_landmarks(apply_pose(verts, pose), idx)
    assert np.allclose(moved, project_landmarks(verts, idx) + np.array([2.0, -3.0]), atol=1e-12)


def test_landmarks_rigid_under_roll():
    rng = np.random.default_rng(2)
    verts = rng.standard_normal((20, 3))
    idx = np.arange(8)
    pose = PoseParams(euler=np.array([0.0, 0.0, 0.7]), translation=np.zeros(3))
    before = project_landmarks(verts, idx)
    after = project_landmarks(apply_pose(verts, pose), idx)
    d0 = np.linalg.norm(before[:, None] - before[None, :], axis=2)
    d1 = np.linalg.norm(after[:, None] - after[None, :], axis=2)
    assert np.abs(d0 - d1).max() <= 1e-6
