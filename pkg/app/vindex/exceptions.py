"""Vector index exceptions."""

from app.core.exceptions import AppError
from app.vindex import constants


class VectorIndexError(AppError):
    """Base class for index failures."""

    exit_code = 4


class InsufficientSamples(VectorIndexError):
    """Exception raised when training data has fewer vectors than centroids."""

    def __init__(self, needed: int, got: int):
        super().__init__(constants.INSUFFICIENT_SAMPLES_ERROR.format(needed=needed, got=got))


class DimMismatch(VectorIndexError):
    """Exception raised when a vector's dimension differs from the index."""

    def __init__(self, expected: int | str, got: int | str):
        super().__init__(constants.DIM_MISMATCH_ERROR.format(expected=expected, got=got))


class DuplicateId(VectorIndexError):
    """Exception raised when an id is added twice."""

    def __init__(self, image_id: int):
        super().__init__(constants.DUPLICATE_ID_ERROR.format(image_id=image_id))


class NotTrained(VectorIndexError):
    """Exception raised when an untrained index is used."""

    def __init__(self):
        super().__init__(constants.NOT_TRAINED_ERROR)


class CorruptIndex(VectorIndexError):
    """Exception raised when an index file fails validation."""

    def __init__(self, path: str, reason: str):
        super().__init__(constants.CORRUPT_INDEX_ERROR.format(path=path, reason=reason))


class IoFailure(VectorIndexError):
    """Exception raised when an index file cannot be read or written."""

    def __init__(self, path: str, reason: str):
        super().__init__(constants.IO_FAILURE_ERROR.format(path=path, reason=reason))


class InvalidSearch(VectorIndexError):
    """Exception raised when k or nprobe is outside its range."""

    def __init__(self, detail: str):
        super().__init__(constants.INVALID_SEARCH_ERROR.format(detail=detail))


class NonFiniteSample(VectorIndexError):
    """Exception raised when training vectors contain NaN or infinity."""

    def __init__(self):
        super().__init__(constants.NON_FINITE_SAMPLE_ERROR)
