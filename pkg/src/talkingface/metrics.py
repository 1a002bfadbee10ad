"""Evaluation metrics: landmark distance, blink detection and statistics,
and the N-way personalization classifier."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .container import FeatureTrack
from .errors import InsufficientDataError, ShapeMismatchError
from .seeding import derive_seed, seed_all

# Average human blinking band reported alongside blink statistics.
HUMAN_BLINK_RATE_RANGE = (0.28, 0.45)  # blinks/s
HUMAN_INTER_BLINK_DURATION_S = 0.41


def lmd(pred_landmarks: np.ndarray, true_landmarks: np.ndarray) -> float:
    """Mean Euclidean distance over frames and landmarks, (F, L, 2) inputs.

    Callers normalize first: scale by inter-ocular distance and center each
    frame's set on its mouth centroid (see normalize_mouth_landmarks).
    """
    pred = np.asarray(pred_landmarks, dtype=np.float64)
    true = np.asarray(true_landmarks, dtype=np.float64)
    if pred.shape != true.shape or pred.ndim != 3 or pred.shape[2] != 2:
        raise ShapeMismatchError(
            f"landmark arrays must share shape (F, L, 2), got {pred.shape} and {true.shape}"
        )
    return float(np.linalg.norm(pred - true, axis=2).mean())


def normalize_mouth_landmarks(mouth: np.ndarray, interocular: np.ndarray) -> np.ndarray:
    """Scale (F, L, 2) mouth landmarks by per-frame inter-ocular distance and
    center each frame at its own mouth centroid."""
    mouth = np.asarray(mouth, dtype=np.float64)
    scale = np.asarray(interocular, dtype=np.float64).reshape(-1, 1, 1)
    if (scale <= 0).any():
        raise ShapeMismatchError("inter-ocular distances must be positive")
    centered = mouth - mouth.mean(axis=1, keepdims=True)
    return centered / scale


@dataclass
class BlinkEvent:
    onset_frame: int
    offset_frame: int
    duration_s: float


def detect_blinks(au45, fps: float | None = None, hi: float = 0.5, lo: float = 0.3) -> list[BlinkEvent]:
    """Hysteresis blink detector on a normalized AU45 signal.

    An event opens when the value rises to >= hi and closes on the last frame
    before it falls to <= lo (or at the clip end). Oscillation between lo and
    hi without reaching hi never opens an event.
    """
    if isinstance(au45, FeatureTrack):
        values = au45.data[:, 0].astype(np.float64)
        fps = au45.fps if fps is None else fps
    else:
        values = np.asarray(au45, dtype=np.float64).ravel()
    if fps is None or fps <= 0:
        raise ShapeMismatchError("detect_blinks needs a positive fps")
    if not 0 <= lo < hi <= 1:
        raise ShapeMismatchError(f"thresholds must satisfy 0 <= lo < hi <= 1, got lo={lo} hi={hi}")

    events = []
    onset = None
    for t, v in enumerate(values):
        if onset is None:
            if v >= hi:
                onset = t
        elif v <= lo:
            offset = t - 1
            events.append(BlinkEvent(onset, offset, (offset - onset + 1) / fps))
            onset = None
    if onset is not None:
        offset = len(values) - 1
        events.append(BlinkEvent(onset, offset, (offset - onset + 1) / fps))
    return events


def blink_stats(
    events: list[BlinkEvent], clip_duration_s: float, hist_bin_s: float = 0.1
) -> dict:
    """Blink rate, mean duration, and a duration histogram.

    mean_duration_s is None (absent, not zero) when there are no events.
    """
    if clip_duration_s <= 0:
        raise ShapeMismatchError("clip duration must be positive")
    durations = [e.duration_s for e in events]
    if durations:
        edges = np.arange(0.0, max(durations) + hist_bin_s, hist_bin_s)
        counts, edges = np.histogram(durations, bins=edges if len(edges) > 1 else 2)
        histogram = {"bin_edges_s": edges.tolist(), "counts": counts.tolist()}
    else:
        histogram = {"bin_edges_s": [], "counts": []}
    return {
        "count": len(events),
        "rate_blinks_per_s": len(events) / clip_duration_s,
        "mean_duration_s": float(np.mean(durations)) if durations else None,
        "histogram": histogram,
        "human_rate_range": list(HUMAN_BLINK_RATE_RANGE),
        "human_inter_blink_duration_s": HUMAN_INTER_BLINK_DURATION_S,
    }


@dataclass
class PersonalizationResult:
    accuracy: float
    n_identities: int
    attribute: str


class _WindowClassifier(nn.Module):
    def __init__(self, dim: int, n_classes: int, hidden: int = 16):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv1d(dim, hidden, 5, stride=2, padding=2),
            nn.LeakyReLU(0.2),
            nn.Conv1d(hidden, 2 * hidden, 5, stride=2, padding=2),
            nn.LeakyReLU(0.2),
        )
        self.head = nn.Linear(2 * hidden, n_classes)

    def forward(self, x):  # (B, T, dim)
        return self.head(self.net(x.transpose(1, 2)).mean(dim=2))


def _track_windows(track: FeatureTrack, window: int, stride: int) -> np.ndarray:
    data = track.data
    if data.shape[0] < window:
        return np.zeros((0, window, data.shape[1]), dtype=np.float32)
    starts = range(0, data.shape[0] - window + 1, stride)
    return np.stack([data[s : s + window] for s in starts])


def personalization_score(
    tracks_by_identity: dict[str, list[FeatureTrack]],
    attribute: str = "pose",
    k_fold: int = 2,
    window: int = 64,
    stride: int = 32,
    epochs: int = 150,
    seed: int = 0,
) -> PersonalizationResult:
    """Held-out accuracy of an N-way classifier on fixed-length attribute windows.

    Clips are cycled through k_fold folds per identity; each fold's clips are
    held out while the rest train a small temporal classifier. Chance level
    is 1/N.
    """
    if attribute not in ("pose", "blink"):
        raise ShapeMismatchError(f"attribute must be 'pose' or 'blink', got {attribute!r}")
    identities = sorted(tracks_by_identity)
    if len(identities) < 2:
        raise InsufficientDataError("need at least 2 identities")
    for name in identities:
        if len(tracks_by_identity[name]) < 2:
            raise InsufficientDataError(f"identity {name!r} needs at least 2 clips")
    dim = tracks_by_identity[identities[0]][0].dim

    fold_of = {
        (name, i): i % k_fold
        for name in identities
        for i in range(len(tracks_by_identity[name]))
    }
    accuracies = []
    for fold in range(k_fold):
        train_x, train_y, test_x, test_y = [], [], [], []
        for label, name in enumerate(identities):
            for i, track in enumerate(tracks_by_identity[name]):
                wins = _track_windows(track, window, stride)
                if wins.shape[0] == 0:
                    raise InsufficientDataError(
                        f"clip {i} of {name!r} is shorter than the {window}-frame window"
                    )
                dest = (test_x, test_y) if fold_of[(name, i)] == fold else (train_x, train_y)
                dest[0].append(wins)
                dest[1].extend([label] * wins.shape[0])
        if not train_x or not test_x:
            continue
        x_tr = torch.from_numpy(np.concatenate(train_x)).float()
        y_tr = torch.tensor(train_y)
        x_te = torch.from_numpy(np.concatenate(test_x)).float()
        y_te = torch.tensor(test_y)

        seed_all(derive_seed(seed, f"personalization-fold{fold}"))
        model = _WindowClassifier(dim, len(identities))
        opt = torch.optim.Adam(model.parameters(), lr=1e-3)
        loss_fn = nn.CrossEntropyLoss()
        prev_threads = torch.get_num_threads()
        torch.set_num_threads(1)
        try:
            for _ in range(epochs):
                opt.zero_grad()
                loss = loss_fn(model(x_tr), y_tr)
                loss.backward()
                opt.step()
            with torch.no_grad():
                pred = model(x_te).argmax(dim=1)
            accuracies.append(float((pred == y_te).float().mean()))
        finally:
            torch.set_num_threads(prev_threads)
    if not accuracies:
        raise InsufficientDataError("no usable folds; add clips or lower k_fold")
    return PersonalizationResult(
        accuracy=float(np.mean(accuracies)),
        n_identities=len(identities),
        attribute=attribute,
    )
