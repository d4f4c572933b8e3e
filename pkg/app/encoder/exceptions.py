"""Encoder domain exceptions."""

from app.core.exceptions import AppError
from app.encoder import constants


class EncoderError(AppError):
    """Base class for encoder failures."""

    exit_code = 3


class ChunkTooLong(EncoderError):
    """Exception raised when a chunk exceeds the encoder's input limit."""

    def __init__(self, length: int, limit: int):
        super().__init__(constants.CHUNK_TOO_LONG_ERROR.format(length=length, limit=limit))


class UnknownEmbedding(EncoderError):
    """Exception raised when a precomputed encoder has no vector for an input."""

    def __init__(self, what: str):
        super().__init__(constants.UNKNOWN_EMBEDDING_ERROR.format(what=what))


class CorruptEmbeddings(EncoderError):
    """Exception raised when an embedding file cannot be parsed."""

    def __init__(self, path: str, reason: str):
        super().__init__(constants.CORRUPT_EMBEDDINGS_ERROR.format(path=path, reason=reason))


class InvalidEncoderSetup(EncoderError):
    """Exception raised when a tokenizer, encoder or embedding store is built from inconsistent inputs."""

    def __init__(self, detail: str):
        super().__init__(constants.INVALID_ENCODER_SETUP_ERROR.format(detail=detail))
