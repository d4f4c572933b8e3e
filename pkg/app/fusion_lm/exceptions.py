"""Fusion language model exceptions."""

from app.core.exceptions import AppError
from app.fusion_lm import constants


class FusionModelError(AppError):
    """Base class for model failures."""

    exit_code = 5


class ShapeMismatch(FusionModelError):
    """Exception raised when inputs do not fit the model configuration."""

    def __init__(self, detail: str):
        super().__init__(constants.SHAPE_MISMATCH_ERROR.format(detail=detail))


class NonFiniteInput(FusionModelError):
    """Exception raised when parameters or image vectors contain NaN or inf."""

    def __init__(self, what: str):
        super().__init__(constants.NON_FINITE_INPUT_ERROR.format(what=what))


class CorruptCheckpoint(FusionModelError):
    """Exception raised when a checkpoint fails validation."""

    def __init__(self, path: str, reason: str):
        super().__init__(constants.CORRUPT_CHECKPOINT_ERROR.format(path=path, reason=reason))


class ConfigMismatch(FusionModelError):
    """Exception raised when a checkpoint was written for a different configuration."""

    def __init__(self, detail: str):
        super().__init__(constants.CONFIG_MISMATCH_ERROR.format(detail=detail))


class IoFailure(FusionModelError):
    """Exception raised when a checkpoint cannot be read or written."""

    def __init__(self, path: str, reason: str):
        super().__init__(constants.CHECKPOINT_IO_ERROR.format(path=path, reason=reason))
