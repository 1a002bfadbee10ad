"""Exception hierarchy. Every error carries a stable ``kind`` slug that the
CLI prints so callers can match on failure class without parsing messages."""


class TalkingFaceError(Exception):
    kind = "error"


class ContainerError(TalkingFaceError):
    kind = "container"


class BadMagicError(ContainerError):
    kind = "bad-magic"


class TruncatedPayloadError(ContainerError):
    kind = "truncated-payload"


class DimMismatchError(ContainerError):
    kind = "dim-mismatch"


class InvalidTrackError(TalkingFaceError):
    kind = "invalid-track"


class TrackIOError(TalkingFaceError):
    kind = "track-io"


class FrameCountMismatchError(TalkingFaceError):
    kind = "frame-count-mismatch"


class ShapeMismatchError(TalkingFaceError):
    kind = "shape-mismatch"


class EmptySelectionError(TalkingFaceError):
    kind = "empty-eye-selection"


class NonUnitNormalError(TalkingFaceError):
    kind = "non-unit-normal"


class DivergenceError(TalkingFaceError):
    kind = "divergence"

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class InsufficientDataError(TalkingFaceError):
    kind = "insufficient-data"


class CheckpointError(TalkingFaceError):
    kind = "checkpoint"


class StageOrderError(TalkingFaceError):
    kind = "stage-order"


class ConfigError(TalkingFaceError):
    kind = "config"
