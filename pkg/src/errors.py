from typing import Any, Dict, Optional


class PatchmixError(Exception):
    """Base class of all errors raised by the package."""


class DimensionError(PatchmixError):
    """Shapes of operands do not fit together."""


class AxisError(PatchmixError):
    """An axis argument is out of range for the tensor it is applied to."""


class GeometryError(PatchmixError):
    """Image or patch geometry is inconsistent."""


class ConfigError(PatchmixError):
    """Configuration is invalid or does not match stored data."""

    def __init__(self, message: str, fields: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.fields = fields if fields is not None else dict()


class MixingError(PatchmixError):
    """A mixing plan can not be built for the given batch."""


class CheckpointError(PatchmixError):
    """Checkpoint file is corrupt or written by an incompatible version."""


class TrainingDivergedError(PatchmixError):
    """Loss became NaN or infinite."""

    def __init__(self, step: int, components: dict) -> None:
        details = ", ".join(f"{k}={v}" for k, v in components.items())
        super().__init__(f"Non-finite loss at step {step}: {details}")
        self.step = step
        self.components = components


class CorpusError(PatchmixError):
    """Corpus files, index or image data are malformed."""
