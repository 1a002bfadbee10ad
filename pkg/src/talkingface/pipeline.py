"""End-to-end glue: attribute sequences to rendered RGB + attention frames."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import read_track
from .datasets import aggregate_reference_coefficients
from .errors import TrackIOError
from .eyes import EyeRegion, attention_from_buffers, eye_triangle_ids, normalize_au, select_eye_vertices
from .face3d.basis import FaceBasis, PoseParams, apply_pose, synthesize_geometry, synthesize_texture, vertex_normals
from .face3d.raster import rasterize_buffers, viewport_transform
from .face3d.shading import shade_sh
from .render_net import RenderFrame


@dataclass
class CameraConfig:
    width: int = 256
    height: int = 256
    scale: float = 100.0
    center: tuple[float, float] = (0.0, 0.0)


@dataclass
class ReferenceData:
    """Per-clip coefficients recovered from a reference video (ingested, not computed)."""

    identity: np.ndarray  # (80,)
    texture: np.ndarray  # (80,)
    illumination: np.ndarray  # (27,)
    initial_state: np.ndarray | None = None  # mean attribute frame, if tracks were present


def load_reference(dir_path) -> ReferenceData:
    """Read identity/texture/illumination coefficient tracks (one vector per
    clip, per-frame tracks are mean-aggregated) and, when attribute tracks are
    present, the clip's mean attribute frame for seeding inference."""
    src = Path(dir_path)
    coeffs = {}
    for kind in ("identity", "texture", "illumination"):
        path = src / f"{kind}.facl"
        if not path.exists():
            raise TrackIOError(f"reference dir {src} is missing {kind}.facl")
        coeffs[kind] = aggregate_reference_coefficients(read_track(path))
    state = None
    attr_paths = [src / f"{k}.facl" for k in ("expression", "pose", "blink_au")]
    if all(p.exists() for p in attr_paths):
        means = [read_track(p).data.astype(np.float64).mean(axis=0) for p in attr_paths]
        state = np.concatenate(means)
    return ReferenceData(
        identity=coeffs["identity"],
        texture=coeffs["texture"],
        illumination=coeffs["illumination"],
        initial_state=state,
    )


@dataclass
class FrameRenderer:
    """Renders attribute frames with fixed basis, reference coefficients and camera."""

    basis: FaceBasis
    reference: ReferenceData
    camera: CameraConfig = field(default_factory=CameraConfig)
    eye_threshold: float = 0.02
    au_max: float = 5.0

    def __post_init__(self):
        self.region: EyeRegion = select_eye_vertices(self.basis, self.eye_threshold)
        self.eye_tris = eye_triangle_ids(self.basis.triangles, self.region)
        self.texture = synthesize_texture(self.basis, self.reference.texture)

    def render(self, attribute_frame: np.ndarray) -> RenderFrame:
        attr = np.asarray(attribute_frame, dtype=np.float64).reshape(71)
        f_exp, pose_vec, raw_au = attr[:64], attr[64:70], attr[70]
        geometry = synthesize_geometry(self.basis, self.reference.identity, f_exp)
        posed = apply_pose(geometry, PoseParams.from_vector(pose_vec))
        normals = vertex_normals(posed, self.basis.triangles)
        colors = shade_sh(normals, self.texture, self.reference.illumination)
        px = viewport_transform(
            posed, self.camera.width, self.camera.height, self.camera.scale, self.camera.center
        )
        color, _, tri_buffer = rasterize_buffers(
            px, colors, self.basis.triangles, self.camera.width, self.camera.height
        )
        au45 = normalize_au(float(raw_au), self.au_max)
        attention = attention_from_buffers(tri_buffer, self.eye_tris, au45)
        return RenderFrame(
            rgb=np.clip(color, 0.0, 1.0).astype(np.float32),
            attention=attention.astype(np.float32)[..., None],
        )

    def render_sequence(self, attributes: np.ndarray) -> list[RenderFrame]:
        return [self.render(frame) for frame in np.asarray(attributes)]
