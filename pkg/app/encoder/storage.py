"""Precomputed embedding files.

Layout (little-endian)::

    magic "VALMEMB\\0" | version u32 | dim u32 | count u64
    count x (id u64, dim x f32)
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from app.common.binio import BinaryReader, BinaryWriter, Truncated
from app.common.files import write_bytes_atomic
from app.encoder import constants
from app.encoder.exceptions import CorruptEmbeddings, InvalidEncoderSetup, UnknownEmbedding

logger = logging.getLogger(__name__)


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([("id", "<u8"), ("vec", "<f4", (dim,))])


@dataclass(frozen=True, eq=False)
class EmbeddingStore:
    """Id-addressed vectors: the raw image keys behind the index."""

    ids: np.ndarray
    vectors: np.ndarray
    _rows: dict[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.vectors.ndim != 2 or len(self.ids) != len(self.vectors):
            raise InvalidEncoderSetup("ids and vectors must align")
        rows = {int(i): row for row, i in enumerate(self.ids)}
        if len(rows) != len(self.ids):
            raise InvalidEncoderSetup("embedding ids must be unique")
        object.__setattr__(self, "_rows", rows)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, image_id: int) -> bool:
        return int(image_id) in self._rows

    def get(self, image_id: int) -> np.ndarray:
        try:
            return self.vectors[self._rows[int(image_id)]]
        except KeyError:
            raise UnknownEmbedding(f"id {image_id}") from None

    def take(self, image_ids: np.ndarray) -> np.ndarray:
        """Vectors for a batch of ids, in order."""
        try:
            rows = [self._rows[int(i)] for i in image_ids]
        except KeyError as exc:
            raise UnknownEmbedding(f"id {exc.args[0]}") from None
        return self.vectors[rows] if rows else np.zeros((0, self.dim))

    def entries(self) -> list[tuple[int, np.ndarray]]:
        return [(int(i), v) for i, v in zip(self.ids, self.vectors, strict=True)]


def dump_embeddings(ids: np.ndarray, vectors: np.ndarray) -> bytes:
    """Serialize ids and vectors into the embedding file format."""
    vectors = np.asarray(vectors)
    count, dim = vectors.shape
    writer = BinaryWriter()
    writer.raw(constants.EMBEDDING_MAGIC)
    writer.u32(constants.EMBEDDING_VERSION)
    writer.u32(dim)
    writer.u64(count)
    records = np.empty(count, dtype=_record_dtype(dim))
    records["id"] = np.asarray(ids, dtype=np.uint64)
    records["vec"] = vectors
    writer.raw(records.tobytes())
    return writer.getvalue()


def save_embeddings(path: str | Path, ids: np.ndarray, vectors: np.ndarray) -> None:
    write_bytes_atomic(path, dump_embeddings(ids, vectors))
    logger.info(f"Wrote {len(ids)} embeddings to {path}")


def load_embeddings(path: str | Path) -> EmbeddingStore:
    """Read an embedding file; vectors are widened to float64."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CorruptEmbeddings(str(path), str(exc)) from exc
    reader = BinaryReader(data)
    try:
        if reader.raw(len(constants.EMBEDDING_MAGIC)) != constants.EMBEDDING_MAGIC:
            raise CorruptEmbeddings(str(path), "bad magic")
        version = reader.u32()
        if version != constants.EMBEDDING_VERSION:
            raise CorruptEmbeddings(str(path), f"unsupported version {version}")
        dim = reader.u32()
        count = reader.u64()
        dtype = _record_dtype(dim)
        records = np.frombuffer(reader.raw(dtype.itemsize * count), dtype=dtype)
    except Truncated as exc:
        raise CorruptEmbeddings(str(path), "truncated") from exc
    if not reader.exhausted:
        raise CorruptEmbeddings(str(path), "trailing bytes")
    ids = records["id"].astype(np.int64)
    vectors = records["vec"].astype(np.float64)
    return EmbeddingStore(ids=ids, vectors=vectors)
