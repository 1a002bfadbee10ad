import numpy as np
import pytest

from talkingface.errors import EmptySelectionError, ShapeMismatchError
from talkingface.eyes import (
    attention_from_buffers,
    ellipse_membership,
    eye_triangle_ids,
    normalize_au,
    render_attention_map,
    select_eye_vertices,
)
from talkingface.face3d import (
    PoseParams,
    apply_pose,
    rasterize_buffers,
    synthetic_face_basis,
    viewport_transform,
)

TH = 0.02


@pytest.fixture(scope="module")
def basis():
    return synthetic_face_basis(seed=1, kind="sphere", resolution=24)


@pytest.fixture(scope="module")
def region(basis):
    return select_eye_vertices(basis, TH)


def test_selection_matches_brute_force(basis, region):
    verts = basis.mean_vertices
    centers = basis.eye_centers()
    for side in ("left", "right"):
        cx, cy = centers[side]
        expected = {
            v
            for v in range(basis.n_vertices)
            if (verts[v, 0] - cx) ** 2 / 4 + (verts[v, 1] - cy) ** 2 < TH
        }
        assert set(region.vertex_ids[side].tolist()) == expected


def test_center_vertex_always_selected():
    # single-vertex landmark groups put each center exactly on a mesh vertex
    basis = synthetic_face_basis(seed=4, kind="plate", resolution=40, basis_style="unit")
    left = basis.eye_landmarks["left"][:1]
    right = basis.eye_landmarks["right"][:1]
    basis.eye_landmarks = {"left": left, "right": right}
    for th in (1e-9, 1e-3, 0.5):
        region = select_eye_vertices(basis, th)
        assert left[0] in region.vertex_ids["left"]
        assert right[0] in region.vertex_ids["right"]


def test_boundary_is_strict():
    center = np.array([0.0, 0.0])
    th = 0.04
    on_boundary = np.array([[2 * np.sqrt(th), 0.0]])
    inside = np.array([[2 * np.sqrt(th) - 1e-9, 0.0]])
    assert not ellipse_membership(on_boundary, center, th)[0]
    assert ellipse_membership(inside, center, th)[0]


def test_empty_selection_errors(basis):
    with pytest.raises(EmptySelectionError):
        select_eye_vertices(basis, 1e-12)


def test_selection_pose_independent(basis, region):
    # recomputation under random poses cannot change the mean-face selection
    rng = np.random.default_rng(0)
    for _ in range(3):
        pose = PoseParams(euler=rng.standard_normal(3), translation=rng.standard_normal(3))
        apply_pose(basis.mean_vertices, pose)  # pose never feeds the criterion
        again = select_eye_vertices(basis, TH)
        for side in ("left", "right"):
            assert np.array_equal(again.vertex_ids[side], region.vertex_ids[side])


def _frontal_pixels(basis, size=128, scale=55.0):
    return viewport_transform(basis.mean_vertices, size, size, scale)


def test_zero_blink_gives_zero_map(basis, region):
    px = _frontal_pixels(basis)
    amap = render_attention_map(px, basis.triangles, region, 0.0, 128, 128)
    assert np.all(amap == 0.0)


def test_map_levels_are_binary(basis, region):
    px = _frontal_pixels(basis)
    amap = render_attention_map(px, basis.triangles, region, 0.62, 128, 128)
    assert set(np.unique(amap)) <= {0.0, 0.62}
    assert (amap == 0.62).any()


def test_map_monotone_in_au(basis, region):
    px = _frontal_pixels(basis)
    lo = render_attention_map(px, basis.triangles, region, 0.3, 128, 128)
    hi = render_attention_map(px, basis.triangles, region, 0.8, 128, 128)
    assert np.all(hi >= lo)


def test_map_subset_of_face_render(basis, region):
    px = _frontal_pixels(basis)
    colors = np.full((basis.n_vertices, 3), 0.8)
    img, _, tri = rasterize_buffers(px, colors, basis.triangles, 128, 128)
    amap = attention_from_buffers(tri, eye_triangle_ids(basis.triangles, region), 1.0)
    face_mask = img.sum(axis=2) > 0
    assert np.all(face_mask[amap > 0])


def test_occluded_eye_pixels_not_filled(basis, region):
    # a quad hovering in front of the left eye must win the shared z-buffer
    px = _frontal_pixels(basis)
    amap_before = render_attention_map(px, basis.triangles, region, 1.0, 128, 128)
    n = basis.n_vertices
    occluder = np.array(
        [[0.0, 0.0, 5.0], [64.0, 0.0, 5.0], [64.0, 128.0, 5.0], [0.0, 128.0, 5.0]]
    )
    verts = np.concatenate([px, occluder])
    tris = np.concatenate([basis.triangles, [[n, n + 1, n + 2], [n, n + 2, n + 3]]])
    amap_after = render_attention_map(verts, tris, region, 1.0, 128, 128)
    assert np.all(amap_after[:, :64] == 0.0)  # left half fully occluded
    assert np.array_equal(amap_after[:, 64:], amap_before[:, 64:])
    assert (amap_before[:, :64] > 0).any()  # the occluder actually hid something


def test_fine_mesh_pixel_count_matches_ellipse_area():
    th, scale, size = 0.01, 512, 512
    basis = synthetic_face_basis(seed=2, kind="plate", resolution=300, basis_style="unit")
    region = select_eye_vertices(basis, th)
    px = viewport_transform(basis.mean_vertices, size, size, scale)
    eye_tris = eye_triangle_ids(basis.triangles, region)
    # flat plate: rasterizing only the eye triangles equals the full-mesh map
    _, _, tri = rasterize_buffers(px, None, basis.triangles[eye_tris], size, size)
    analytic = 2.0 * np.pi * th * scale * scale
    for side in ("left", "right"):
        member = np.isin(basis.triangles[eye_tris], region.vertex_ids[side]).all(axis=1)
        count = np.isin(tri, np.flatnonzero(member)).sum()
        assert abs(count - analytic) / analytic < 0.05


def test_triangle_inclusion_requires_all_three(region, basis):
    tris = basis.triangles
    ids = eye_triangle_ids(tris, region)
    all_selected = region.all_ids()
    for t in ids:
        assert np.isin(tris[t], all_selected).all()
    # and no other triangle has all three vertices selected within one eye
    for side in ("left", "right"):
        member = np.isin(tris, region.vertex_ids[side]).all(axis=1)
        assert set(np.flatnonzero(member)) <= set(ids.tolist())


@pytest.mark.parametrize(
    "raw,maximum,expected",
    [(0.0, 5.0, 0.0), (5.0, 5.0, 1.0), (2.5, 5.0, 0.5), (7.0, 5.0, 1.0), (-1.0, 5.0, 0.0)],
)
def test_normalize_au(raw, maximum, expected):
    assert normalize_au(raw, maximum) == expected


def test_normalize_au_bad_max():
    with pytest.raises(ShapeMismatchError):
        normalize_au(1.0, 0.0)
