"""Dataset manifests, synthetic data generation, and ingestion adapters.

Synthetic clips pair Gaussian audio with attribute tracks produced by a
seeded linear map over a 17-frame centered audio context (edges clamped),
followed by a moving average of the given radius. The map is persisted next
to the manifest so targets can be recomputed independently of this module.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .container import FeatureTrack, read_header, write_track
from .errors import FrameCountMismatchError, InvalidTrackError, TrackIOError

ATTRIBUTE_KINDS = ("expression", "pose", "blink_au")
ATTRIBUTE_DIM = 71  # 64 expression + 6 pose + 1 blink
SYNTH_CONTEXT = 17  # centered context frames feeding the target map, both ends inclusive
SYNTH_AUDIO_DIM = 29


@dataclass
class ClipEntry:
    clip_id: str
    audio_path: str
    attribute_paths: dict[str, str]
    frame_count: int


@dataclass
class DatasetManifest:
    clips: list[ClipEntry]
    split: str = "train"
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "split": self.split,
            "clips": [
                {
                    "clip_id": c.clip_id,
                    "audio": c.audio_path,
                    "attributes": dict(c.attribute_paths),
                    "frame_count": c.frame_count,
                }
                for c in self.clips
            ],
            **self.extra,
        }


def save_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_json(), indent=2))


def load_manifest(path, validate: bool = True) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise TrackIOError(f"cannot read manifest {path}: {exc}") from exc
    clips = [
        ClipEntry(
            clip_id=c["clip_id"],
            audio_path=c["audio"],
            attribute_paths=dict(c["attributes"]),
            frame_count=int(c["frame_count"]),
        )
        for c in doc["clips"]
    ]
    extra = {k: v for k, v in doc.items() if k not in ("split", "clips")}
    manifest = DatasetManifest(clips=clips, split=doc.get("split", "train"), extra=extra)
    if validate:
        validate_manifest(manifest, base_dir=path.parent)
    return manifest


def validate_manifest(manifest: DatasetManifest, base_dir) -> None:
    """Check that all tracks of each clip share the clip's frame count."""
    base = Path(base_dir)
    for clip in manifest.clips:
        paths = [clip.audio_path, *clip.attribute_paths.values()]
        for rel in paths:
            header = read_header(base / rel)
            frames = header["shape"][0]
            if frames != clip.frame_count:
                raise FrameCountMismatchError(
                    f"clip {clip.clip_id}: {rel} has {frames} frames, "
                    f"manifest says {clip.frame_count}"
                )


@dataclass
class SyntheticSpec:
    seed: int
    clip_count: int
    frames_per_clip: int
    smoothing_radius: int
    split: str = "train"
    constant_audio: bool = False

    def __post_init__(self):
        if self.clip_count <= 0 or self.frames_per_clip <= 0:
            raise InvalidTrackError("clip_count and frames_per_clip must be positive")
        if self.smoothing_radius < 0:
            raise InvalidTrackError("smoothing_radius must be non-negative")


def synthetic_target_map(seed: int) -> np.ndarray:
    """The seeded linear map (71, 29*17) from flattened audio context to attributes."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((ATTRIBUTE_DIM, SYNTH_AUDIO_DIM * SYNTH_CONTEXT)) / np.sqrt(
        SYNTH_AUDIO_DIM * SYNTH_CONTEXT
    )


def apply_target_map(audio: np.ndarray, weight: np.ndarray, radius: int) -> np.ndarray:
    """Produce (frames, 71) attribute targets from (frames, 29) audio.

    Per frame: gather the 17-frame centered context (edge frames clamped),
    flatten frame-major, apply the linear map, then moving-average over
    [t-radius, t+radius] clipped to the clip.
    """
    audio = np.asarray(audio, dtype=np.float64)
    frames = audio.shape[0]
    half = SYNTH_CONTEXT // 2
    idx = np.clip(np.arange(frames)[:, None] + np.arange(-half, half + 1)[None, :], 0, frames - 1)
    ctx = audio[idx].reshape(frames, -1)  # (frames, 29*17)
    raw = ctx @ weight.T
    if radius == 0:
        return raw
    out = np.empty_like(raw)
    for t in range(frames):
        lo, hi = max(0, t - radius), min(frames, t + radius + 1)
        out[t] = raw[lo:hi].mean(axis=0)
    return out


def split_attribute_matrix(targets: np.ndarray) -> dict[str, np.ndarray]:
    """Split (frames, 71) into the expression/pose/blink_au blocks."""
    return {
        "expression": targets[:, :64],
        "pose": targets[:, 64:70],
        "blink_au": targets[:, 70:71],
    }


def generate_synthetic_dataset(spec: SyntheticSpec, out_dir) -> DatasetManifest:
    """Emit paired audio/attribute tracks with ground truth recomputable from
    the persisted map. Identical specs produce bit-identical outputs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    weight = synthetic_target_map(spec.seed)
    map_path = out / "target_map.npy"
    np.save(map_path, weight)

    clips = []
    for i in range(spec.clip_count):
        clip_id = f"clip{i:03d}"
        if spec.constant_audio:
            audio = np.tile(rng.standard_normal(SYNTH_AUDIO_DIM), (spec.frames_per_clip, 1))
        else:
            audio = rng.standard_normal((spec.frames_per_clip, SYNTH_AUDIO_DIM))
        targets = apply_target_map(audio, weight, spec.smoothing_radius)

        audio_rel = f"{clip_id}_audio.facl"
        write_track(FeatureTrack(audio.astype(np.float32), fps=30.0, kind="audio"), out / audio_rel)
        attr_paths = {}
        for kind, block in split_attribute_matrix(targets).items():
            rel = f"{clip_id}_{kind}.facl"
            write_track(FeatureTrack(block.astype(np.float32), fps=30.0, kind=kind), out / rel)
            attr_paths[kind] = rel
        clips.append(ClipEntry(clip_id, audio_rel, attr_paths, spec.frames_per_clip))

    manifest = DatasetManifest(
        clips=clips,
        split=spec.split,
        extra={
            "target_map": map_path.name,
            "smoothing_radius": spec.smoothing_radius,
            "seed": spec.seed,
        },
    )
    save_manifest(manifest, out / "manifest.json")
    return manifest


# Column names of OpenFace-style CSV exports; pose vector layout is
# [Rx, Ry, Rz, Tx, Ty, Tz] (Euler angles first), see docs/formats.md.
OPENFACE_POSE_COLUMNS = ("pose_Rx", "pose_Ry", "pose_Rz", "pose_Tx", "pose_Ty", "pose_Tz")
OPENFACE_BLINK_COLUMN = "AU45_r"


def load_openface_csv(path, fps: float) -> tuple[FeatureTrack, FeatureTrack]:
    """Ingest an OpenFace-style CSV (one row per frame) into pose and blink tracks."""
    pose_rows, blink_rows = [], []
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise InvalidTrackError(f"{path}: empty CSV")
            fields = {name.strip(): name for name in reader.fieldnames}
            missing = [c for c in (*OPENFACE_POSE_COLUMNS, OPENFACE_BLINK_COLUMN) if c not in fields]
            if missing:
                raise InvalidTrackError(f"{path}: missing columns {missing}")
            for row in reader:
                pose_rows.append([float(row[fields[c]]) for c in OPENFACE_POSE_COLUMNS])
                blink_rows.append([float(row[fields[OPENFACE_BLINK_COLUMN]])])
    except OSError as exc:
        raise TrackIOError(f"cannot read CSV {path}: {exc}") from exc
    pose = FeatureTrack(np.array(pose_rows, dtype=np.float32), fps=fps, kind="pose")
    blink = FeatureTrack(np.array(blink_rows, dtype=np.float32), fps=fps, kind="blink_au")
    return pose, blink


def aggregate_reference_coefficients(track: FeatureTrack) -> np.ndarray:
    """Collapse a per-frame coefficient track to one per-clip vector (column mean)."""
    return track.data.astype(np.float64).mean(axis=0)
