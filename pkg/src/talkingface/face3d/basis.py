"""Affine 3D morphable face model: linear bases, rigid pose, vertex normals,
and a seeded synthetic basis generator for tests (licensed scan data stays
pluggable through the same loader)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..container import read_array, write_array
from ..errors import ShapeMismatchError, TrackIOError

ID_DIM = 80
EXP_DIM = 64
TEX_DIM = 80


@dataclass
class FaceBasis:
    """Mean geometry/texture and identity/expression/texture linear bases.

    Flat vectors are vertex-interleaved: [x0, y0, z0, x1, ...] and
    [r0, g0, b0, r1, ...].
    """

    mean_geometry: np.ndarray  # (3N,)
    mean_texture: np.ndarray  # (3N,)
    basis_id: np.ndarray  # (3N, 80)
    basis_exp: np.ndarray  # (3N, 64)
    basis_tex: np.ndarray  # (3N, 80)
    triangles: np.ndarray  # (M, 3) int
    landmark_indices: np.ndarray  # union of all landmark vertex ids
    eye_landmarks: dict[str, np.ndarray] = field(default_factory=dict)  # "left"/"right"
    mouth_landmarks: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        self.mean_geometry = np.asarray(self.mean_geometry, dtype=np.float64).ravel()
        self.mean_texture = np.asarray(self.mean_texture, dtype=np.float64).ravel()
        self.basis_id = np.asarray(self.basis_id, dtype=np.float64)
        self.basis_exp = np.asarray(self.basis_exp, dtype=np.float64)
        self.basis_tex = np.asarray(self.basis_tex, dtype=np.float64)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.landmark_indices = np.asarray(self.landmark_indices, dtype=np.int64)
        self.eye_landmarks = {k: np.asarray(v, dtype=np.int64) for k, v in self.eye_landmarks.items()}
        self.mouth_landmarks = np.asarray(self.mouth_landmarks, dtype=np.int64)
        n3 = self.mean_geometry.shape[0]
        if n3 % 3 != 0 or n3 < 9:
            raise ShapeMismatchError(f"mean geometry length {n3} is not 3N with N >= 3")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3 or len(self.triangles) < 1:
            raise ShapeMismatchError(f"triangles must be (M, 3) with M >= 1")
        n = n3 // 3
        if self.triangles.min() < 0 or self.triangles.max() >= n:
            raise ShapeMismatchError("triangle indices outside [0, N)")
        for name, mat, cols in (
            ("basis_id", self.basis_id, ID_DIM),
            ("basis_exp", self.basis_exp, EXP_DIM),
            ("basis_tex", self.basis_tex, TEX_DIM),
        ):
            if mat.shape != (n3, cols):
                raise ShapeMismatchError(f"{name} must be ({n3}, {cols}), got {mat.shape}")

    @property
    def n_vertices(self) -> int:
        return self.mean_geometry.shape[0] // 3

    @property
    def mean_vertices(self) -> np.ndarray:
        return self.mean_geometry.reshape(-1, 3)

    def eye_centers(self) -> dict[str, np.ndarray]:
        """Per-eye 2-D centers: mean x,y of the eye landmark vertices on the mean face."""
        verts = self.mean_vertices
        return {side: verts[ids][:, :2].mean(axis=0) for side, ids in self.eye_landmarks.items()}


@dataclass
class PoseParams:
    """Rigid head pose: Euler angles (pitch, yaw, roll) in radians plus translation."""

    euler: np.ndarray  # (3,) = (theta_x, theta_y, theta_z)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        self.euler = np.asarray(self.euler, dtype=np.float64).reshape(3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.isfinite(self.euler).all() and np.isfinite(self.translation).all()):
            raise ShapeMismatchError("pose parameters must be finite")

    @classmethod
    def from_vector(cls, p: np.ndarray) -> "PoseParams":
        p = np.asarray(p, dtype=np.float64).reshape(6)
        return cls(euler=p[:3], translation=p[3:])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.euler, self.translation])


def synthesize_geometry(basis: FaceBasis, f_id: np.ndarray, f_exp: np.ndarray) -> np.ndarray:
    """Mean geometry plus identity and expression basis offsets, as (N, 3)."""
    f_id = np.asarray(f_id, dtype=np.float64).ravel()
    f_exp = np.asarray(f_exp, dtype=np.float64).ravel()
    if f_id.shape[0] != basis.basis_id.shape[1]:
        raise ShapeMismatchError(f"identity coefficients must have length {basis.basis_id.shape[1]}")
    if f_exp.shape[0] != basis.basis_exp.shape[1]:
        raise ShapeMismatchError(f"expression coefficients must have length {basis.basis_exp.shape[1]}")
    flat = basis.mean_geometry + basis.basis_id @ f_id + basis.basis_exp @ f_exp
    return flat.reshape(-1, 3)


def synthesize_texture(basis: FaceBasis, f_tex: np.ndarray) -> np.ndarray:
    """Mean texture plus texture basis offsets, as per-vertex RGB (N, 3).

    Values are not clamped here; shaded colors are clamped at rasterization.
    """
    f_tex = np.asarray(f_tex, dtype=np.float64).ravel()
    if f_tex.shape[0] != basis.basis_tex.shape[1]:
        raise ShapeMismatchError(f"texture coefficients must have length {basis.basis_tex.shape[1]}")
    return (basis.mean_texture + basis.basis_tex @ f_tex).reshape(-1, 3)


def rotation_matrix(euler: np.ndarray) -> np.ndarray:
    """R_z(roll) @ R_y(yaw) @ R_x(pitch)."""
    tx, ty, tz = np.asarray(euler, dtype=np.float64).reshape(3)
    cx, sx = np.cos(tx), np.sin(tx)
    cy, sy = np.cos(ty), np.sin(ty)
    cz, sz = np.cos(tz), np.sin(tz)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def apply_pose(vertices: np.ndarray, pose: PoseParams) -> np.ndarray:
    vertices = np.asarray(vertices, dtype=np.float64)
    return vertices @ rotation_matrix(pose.euler).T + pose.translation


def vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Unit vertex normals, area-weighted over incident faces.

    Cross products of unnormalized edges carry twice the face area, so plain
    accumulation gives the area weighting.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    triangles = np.asarray(triangles, dtype=np.int64)
    a, b, c = vertices[triangles[:, 0]], vertices[triangles[:, 1]], vertices[triangles[:, 2]]
    face = np.cross(b - a, c - a)
    normals = np.zeros_like(vertices)
    for col in range(3):
        np.add.at(normals, triangles[:, col], face)
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    return normals / norm


def synthetic_face_basis(
    seed: int,
    kind: str = "sphere",
    resolution: int = 16,
    basis_scale: float = 0.02,
    basis_style: str = "qr",
) -> FaceBasis:
    """Seeded synthetic face basis for desk-scale tests.

    kind "sphere": unit sphere head, eyes and mouth marked on the +z front.
    kind "plate": flat (resolution+1)^2 grid over [-0.5, 0.5]^2 at z=0 facing
    +z; its fine triangles make elliptical pixel-area checks tight.

    Basis columns are orthonormal and scaled by basis_scale, so unit
    coefficients move vertices by about basis_scale. basis_style "qr" uses
    dense seeded Gaussians; "unit" uses signed unit vectors at seeded distinct
    positions (orthonormal by disjoint support, O(N) to build for fine meshes).
    """
    rng = np.random.default_rng(seed)
    if kind == "sphere":
        verts, tris = _sphere_mesh(resolution)
    elif kind == "plate":
        verts, tris = _plate_mesh(resolution)
    else:
        raise ShapeMismatchError(f"unknown synthetic mesh kind {kind!r}")
    n3 = verts.size
    if n3 < ID_DIM + EXP_DIM + TEX_DIM:
        raise ShapeMismatchError(f"mesh too small for basis dims: 3N={n3}")

    def ortho(cols: int) -> np.ndarray:
        if basis_style == "unit":
            mat = np.zeros((n3, cols))
            pos = rng.choice(n3, size=cols, replace=False)
            signs = rng.integers(0, 2, size=cols) * 2.0 - 1.0
            mat[pos, np.arange(cols)] = signs * basis_scale
            return mat
        q, _ = np.linalg.qr(rng.standard_normal((n3, cols)))
        return q * basis_scale

    mean_texture = np.tile(np.array([0.75, 0.6, 0.5]), verts.shape[0])

    # Landmark groups: nearest vertices to canonical front-face anchor points.
    if kind == "sphere":
        left_eye = _nearest(verts, np.array([-0.35, 0.3, 0.9]), 6)
        right_eye = _nearest(verts, np.array([0.35, 0.3, 0.9]), 6)
        mouth = _nearest(verts, np.array([0.0, -0.45, 0.85]), 8)
    else:
        left_eye = _nearest(verts, np.array([-0.25, 0.1, 0.0]), 6)
        right_eye = _nearest(verts, np.array([0.25, 0.1, 0.0]), 6)
        mouth = _nearest(verts, np.array([0.0, -0.3, 0.0]), 8)
    landmark_indices = np.unique(np.concatenate([left_eye, right_eye, mouth]))

    return FaceBasis(
        mean_geometry=verts.ravel(),
        mean_texture=mean_texture,
        basis_id=ortho(ID_DIM),
        basis_exp=ortho(EXP_DIM),
        basis_tex=ortho(TEX_DIM),
        triangles=tris,
        landmark_indices=landmark_indices,
        eye_landmarks={"left": left_eye, "right": right_eye},
        mouth_landmarks=mouth,
    )


def _nearest(verts: np.ndarray, point: np.ndarray, count: int) -> np.ndarray:
    d = np.linalg.norm(verts - point, axis=1)
    return np.sort(np.argsort(d)[:count]).astype(np.int64)


def _sphere_mesh(resolution: int) -> tuple[np.ndarray, np.ndarray]:
    """Spherical cap of unit radius facing +z, open at the back.

    Face meshes are front shells; a closed ball would let the x-y eye
    criterion pick up mirrored back-of-head vertices.
    """
    rows, cols = resolution, 2 * resolution
    alpha_max = 0.6 * np.pi  # a bit past the hemisphere so the rim sits behind
    verts = [np.array([0.0, 0.0, 1.0])]
    for i in range(1, rows + 1):
        alpha = alpha_max * i / rows
        for j in range(cols):
            beta = 2 * np.pi * j / cols
            verts.append(
                np.array(
                    [np.sin(alpha) * np.cos(beta), np.sin(alpha) * np.sin(beta), np.cos(alpha)]
                )
            )
    verts = np.array(verts)

    tris = []
    ring = lambda i, j: 1 + (i - 1) * cols + (j % cols)
    for j in range(cols):  # apex fan
        tris.append([0, ring(1, j), ring(1, j + 1)])
    for i in range(1, rows):
        for j in range(cols):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            tris.append([a, c, d])
            tris.append([a, d, b])
    return verts, np.array(tris, dtype=np.int64)


def _plate_mesh(resolution: int) -> tuple[np.ndarray, np.ndarray]:
    side = resolution + 1
    xs = np.linspace(-0.5, 0.5, side)
    ys = np.linspace(-0.5, 0.5, side)
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    verts = np.stack([gx.ravel(), gy.ravel(), np.zeros(side * side)], axis=1)
    row, col = np.meshgrid(np.arange(resolution), np.arange(resolution), indexing="ij")
    v00 = (row * side + col).ravel()
    v01, v10, v11 = v00 + 1, v00 + side, v00 + side + 1
    tris = np.concatenate(
        [np.stack([v00, v01, v11], axis=1), np.stack([v00, v11, v10], axis=1)]
    )
    return verts, tris.astype(np.int64)


_BASIS_ARRAYS = ("mean_geometry", "mean_texture", "basis_id", "basis_exp", "basis_tex")


def save_face_basis(basis: FaceBasis, dir_path) -> None:
    """Persist to a directory: container files per array + JSON sidecar for
    triangles and landmark groups."""
    out = Path(dir_path)
    out.mkdir(parents=True, exist_ok=True)
    for name in _BASIS_ARRAYS:
        write_array(out / f"{name}.facl", getattr(basis, name), kind=name)
    sidecar = {
        "triangles": basis.triangles.tolist(),
        "landmark_indices": basis.landmark_indices.tolist(),
        "eye_landmarks": {k: v.tolist() for k, v in basis.eye_landmarks.items()},
        "mouth_landmarks": basis.mouth_landmarks.tolist(),
    }
    (out / "basis.json").write_text(json.dumps(sidecar))


def load_face_basis(dir_path) -> FaceBasis:
    src = Path(dir_path)
    if not (src / "basis.json").exists():
        raise TrackIOError(f"{src} does not contain a face basis (basis.json missing)")
    arrays = {name: read_array(src / f"{name}.facl")[0] for name in _BASIS_ARRAYS}
    sidecar = json.loads((src / "basis.json").read_text())
    return FaceBasis(
        **arrays,
        triangles=np.array(sidecar["triangles"], dtype=np.int64),
        landmark_indices=np.array(sidecar["landmark_indices"], dtype=np.int64),
        eye_landmarks={k: np.array(v, dtype=np.int64) for k, v in sidecar["eye_landmarks"].items()},
        mouth_landmarks=np.array(sidecar["mouth_landmarks"], dtype=np.int64),
    )
