from .basis import (
    EXP_DIM,
    ID_DIM,
    TEX_DIM,
    FaceBasis,
    PoseParams,
    apply_pose,
    load_face_basis,
    rotation_matrix,
    save_face_basis,
    synthesize_geometry,
    synthesize_texture,
    synthetic_face_basis,
    vertex_normals,
)
from .raster import (
    project_landmarks,
    rasterize,
    rasterize_buffers,
    viewport_transform,
)
from .shading import SHIllumination, sh_basis, shade_sh

__all__ = [
    "EXP_DIM",
    "ID_DIM",
    "TEX_DIM",
    "FaceBasis",
    "PoseParams",
    "SHIllumination",
    "apply_pose",
    "load_face_basis",
    "project_landmarks",
    "rasterize",
    "rasterize_buffers",
    "rotation_matrix",
    "save_face_basis",
    "sh_basis",
    "shade_sh",
    "synthesize_geometry",
    "synthesize_texture",
    "synthetic_face_basis",
    "vertex_normals",
    "viewport_transform",
]
