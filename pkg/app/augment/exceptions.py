"""Augmentation domain exceptions."""

from app.augment import constants
from app.core.exceptions import AppError


class AugmentError(AppError):
    """Base class for retrieval orchestration failures."""

    exit_code = 7


class IndexUnavailable(AugmentError):
    """Exception raised when retrieval is requested without a usable index."""

    def __init__(self, detail: str):
        super().__init__(constants.INDEX_UNAVAILABLE_ERROR.format(detail=detail))


class EncoderMismatch(AugmentError):
    """Exception raised when the encoder width differs from the index or model."""

    def __init__(self, got: int, expected: int, what: str):
        super().__init__(constants.ENCODER_MISMATCH_ERROR.format(got=got, expected=expected, what=what))


class BindingMismatch(AugmentError):
    """Exception raised when a cache was built for different inputs."""

    def __init__(self, path: str, fields: list[str]):
        super().__init__(constants.BINDING_MISMATCH_ERROR.format(path=path, fields=", ".join(fields)))
        self.fields = fields


class CorruptCache(AugmentError):
    """Exception raised when a cache file fails validation."""

    def __init__(self, path: str, reason: str):
        super().__init__(constants.CORRUPT_CACHE_ERROR.format(path=path, reason=reason))


class SpecInfeasible(AugmentError):
    """Exception raised when a grounded corpus cannot be generated."""

    def __init__(self, detail: str):
        super().__init__(constants.SPEC_INFEASIBLE_ERROR.format(detail=detail))


class PositionOutOfRange(AugmentError):
    """Exception raised when a swap targets a position outside the sequence."""

    def __init__(self, position: int, length: int):
        super().__init__(constants.POSITION_OUT_OF_RANGE_ERROR.format(position=position, length=length))


class TooManyReplacements(AugmentError):
    """Exception raised when a swap brings more keys than a position has slots."""

    def __init__(self, got: int, slots: int):
        super().__init__(constants.TOO_MANY_REPLACEMENTS_ERROR.format(got=got, slots=slots))
