"""FACL1 binary container and the FeatureTrack type.

One container format serves every array this package persists:

    bytes 0..4    magic ``FACL1``
    bytes 5..8    little-endian uint32, byte length of the JSON header
    header        UTF-8 JSON object ``{"kind": str, "fps": float, "shape": [..]}``
    payload       little-endian float32, row-major, prod(shape) values

Feature tracks are 2-D (frames x dim) with a kind from KIND_DIMS; generic
arrays (network parameters, attention maps, basis matrices) use free-form
kinds and fps 0.0 via write_array/read_array.

No shared mutable state: concurrent reads of distinct files are safe;
writers need exclusive access per path.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    DimMismatchError,
    InvalidTrackError,
    TrackIOError,
    TruncatedPayloadError,
)

MAGIC = b"FACL1"

# Per-frame feature width implied by each track kind.
KIND_DIMS = {
    "audio": 29,
    "expression": 64,
    "pose": 6,
    "blink_au": 1,
    "identity": 80,
    "texture": 80,
    "illumination": 27,
}


@dataclass
class FeatureTrack:
    """Time-major array of per-frame feature vectors with an FPS tag."""

    data: np.ndarray  # (frames, dim) float32
    fps: float
    kind: str

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise InvalidTrackError(f"track data must be 2-D, got shape {self.data.shape}")
        if not np.isfinite(self.data).all():
            raise InvalidTrackError("track data contains non-finite entries")
        if self.fps <= 0:
            raise InvalidTrackError(f"fps must be positive, got {self.fps}")
        if self.kind not in KIND_DIMS:
            raise InvalidTrackError(f"unknown track kind {self.kind!r}")
        expected = KIND_DIMS[self.kind]
        if self.data.shape[1] != expected:
            raise DimMismatchError(
                f"kind {self.kind!r} requires dim {expected}, got {self.data.shape[1]}"
            )

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def _encode(kind: str, fps: float, data: np.ndarray) -> bytes:
    header = json.dumps(
        {"kind": kind, "fps": fps, "shape": list(data.shape)}, separators=(",", ":")
    ).encode("utf-8")
    payload = np.ascontiguousarray(data, dtype="<f4").tobytes()
    return MAGIC + struct.pack("<I", len(header)) + header + payload


def write_array(path, data: np.ndarray, kind: str = "array", fps: float = 0.0) -> None:
    """Write an arbitrary float array in the container format."""
    path = Path(path)
    try:
        path.write_bytes(_encode(kind, fps, np.asarray(data)))
    except OSError as exc:
        raise TrackIOError(f"cannot write container file {path}: {exc}") from exc


def read_array(path) -> tuple[np.ndarray, str, float]:
    """Read any container file; returns (data, kind, fps)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise TrackIOError(f"cannot read container file {path}: {exc}") from exc
    if len(raw) < len(MAGIC) + 4 or raw[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{path} is not a FACL1 container")
    header_len = struct.unpack("<I", raw[5:9])[0]
    header_end = 9 + header_len
    if len(raw) < header_end:
        raise TruncatedPayloadError(f"{path}: header truncated")
    try:
        header = json.loads(raw[9:header_end].decode("utf-8"))
        kind = header["kind"]
        fps = float(header["fps"])
        shape = tuple(int(s) for s in header["shape"])
    except (ValueError, KeyError, TypeError) as exc:
        raise BadMagicError(f"{path}: malformed header: {exc}") from exc
    count = int(np.prod(shape)) if shape else 1
    payload = raw[header_end:]
    if len(payload) < 4 * count:
        raise TruncatedPayloadError(
            f"{path}: payload holds {len(payload) // 4} floats, header promises {count}"
        )
    data = np.frombuffer(payload[: 4 * count], dtype="<f4").reshape(shape)
    return data.copy(), kind, fps


def read_header(path) -> dict:
    """Read only the JSON header of a container file (cheap shape/kind probe)."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            prefix = fh.read(9)
            if len(prefix) < 9 or prefix[:5] != MAGIC:
                raise BadMagicError(f"{path} is not a FACL1 container")
            header_len = struct.unpack("<I", prefix[5:9])[0]
            blob = fh.read(header_len)
    except OSError as exc:
        raise TrackIOError(f"cannot read container file {path}: {exc}") from exc
    if len(blob) < header_len:
        raise TruncatedPayloadError(f"{path}: header truncated")
    try:
        return json.loads(blob.decode("utf-8"))
    except ValueError as exc:
        raise BadMagicError(f"{path}: malformed header: {exc}") from exc


def write_track(track: FeatureTrack, path) -> None:
    write_array(path, track.data, kind=track.kind, fps=track.fps)


def read_track(path) -> FeatureTrack:
    data, kind, fps = read_array(path)
    if data.ndim != 2:
        raise InvalidTrackError(f"{path}: track payload must be 2-D, got shape {data.shape}")
    # FeatureTrack re-validates kind, dim and finiteness.
    return FeatureTrack(data=data, fps=fps, kind=kind)
