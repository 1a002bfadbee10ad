"""Audio-track resampling and sliding-window slicing.

Local phonetic context is a[t-8 : t+8), 16 frames end-exclusive, with edge
frames clamped at clip boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import FeatureTrack
from .datasets import ATTRIBUTE_DIM, ATTRIBUTE_KINDS
from .errors import FrameCountMismatchError, InvalidTrackError, ShapeMismatchError

CONTEXT_BEFORE = 8
CONTEXT_AFTER = 7
CONTEXT_FRAMES = CONTEXT_BEFORE + CONTEXT_AFTER + 1  # 16


@dataclass
class WindowSample:
    """One training sample: an audio window, its initial state, and targets."""

    audio: np.ndarray  # (T, 29)
    initial_state: np.ndarray  # (71,) == targets[0]
    targets: np.ndarray  # (T, 71)
    clip_id: str
    start_frame: int


def resample_features(track: FeatureTrack, target_fps: float) -> FeatureTrack:
    """Linearly resample a feature track to target_fps.

    Output frame count is floor((frames-1) * target_fps / in_fps) + 1; output
    frame i interpolates the two input frames bracketing time i * in_fps /
    target_fps. Frames landing exactly on an input sample copy it bit-exactly.
    """
    if target_fps <= 0:
        raise InvalidTrackError(f"target_fps must be positive, got {target_fps}")
    if track.frames < 2:
        raise InvalidTrackError(f"need at least 2 frames to resample, got {track.frames}")
    in_fps = track.fps
    out_frames = int(np.floor((track.frames - 1) * target_fps / in_fps)) + 1
    data = track.data.astype(np.float64)
    out = np.empty((out_frames, track.dim), dtype=np.float64)
    for i in range(out_frames):
        t = (i * in_fps) / target_fps  # multiply first so aligned samples are exact
        i0 = int(np.floor(t))
        frac = t - i0
        if frac == 0.0:
            out[i] = data[i0]
        else:
            out[i] = data[i0] + frac * (data[i0 + 1] - data[i0])
    return FeatureTrack(out.astype(np.float32), fps=target_fps, kind=track.kind)


def window_count(frames: int, window: int, stride: int) -> int:
    return (frames - window) // stride + 1


def slice_windows(
    audio: FeatureTrack,
    targets: tuple[FeatureTrack, FeatureTrack, FeatureTrack],
    window: int = 128,
    stride: int = 5,
    clip_id: str = "",
) -> list[WindowSample]:
    """Slice aligned audio/attribute tracks into overlapping training windows."""
    expression, pose, blink = targets
    for t, kind in zip((expression, pose, blink), ATTRIBUTE_KINDS):
        if t.kind != kind:
            raise InvalidTrackError(f"expected {kind} track, got {t.kind}")
        if t.frames != audio.frames:
            raise FrameCountMismatchError(
                f"{kind} track has {t.frames} frames, audio has {audio.frames}"
            )
    frames = audio.frames
    if frames < window:
        raise FrameCountMismatchError(f"clip of {frames} frames is shorter than window {window}")
    attr = np.concatenate([expression.data, pose.data, blink.data], axis=1)
    assert attr.shape[1] == ATTRIBUTE_DIM
    samples = []
    for k in range(window_count(frames, window, stride)):
        start = k * stride
        tgt = attr[start : start + window]
        samples.append(
            WindowSample(
                audio=audio.data[start : start + window].copy(),
                initial_state=tgt[0].copy(),
                targets=tgt.copy(),
                clip_id=clip_id,
                start_frame=start,
            )
        )
    return samples


def local_context(audio: FeatureTrack, t: int) -> np.ndarray:
    """The 16-frame audio context centered at frame t, edges clamped."""
    if not 0 <= t < audio.frames:
        raise ShapeMismatchError(f"frame {t} outside clip of {audio.frames} frames")
    idx = np.clip(np.arange(t - CONTEXT_BEFORE, t + CONTEXT_AFTER + 1), 0, audio.frames - 1)
    return audio.data[idx].copy()


def local_contexts(audio: np.ndarray) -> np.ndarray:
    """Vectorized local contexts for a whole (frames, dim) array: (frames, 16, dim)."""
    frames = audio.shape[0]
    idx = np.clip(
        np.arange(frames)[:, None] + np.arange(-CONTEXT_BEFORE, CONTEXT_AFTER + 1)[None, :],
        0,
        frames - 1,
    )
    return audio[idx]
