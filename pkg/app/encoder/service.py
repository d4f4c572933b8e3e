"""Context chunking and joint text/image encoders."""

import hashlib
import zlib
from collections.abc import Iterable, Mapping
from typing import Protocol

import numpy as np

from app.encoder import constants
from app.encoder.exceptions import ChunkTooLong, InvalidEncoderSetup, UnknownEmbedding
from app.encoder.schemas import ContextChunk, ImageRecord
from app.encoder.storage import EmbeddingStore


class JointEncoder(Protocol):
    """Frozen text and image encoders sharing one embedding space."""

    id: str
    dim: int
    max_tokens: int

    def encode_text(self, tokens: np.ndarray) -> np.ndarray: ...

    def encode_image(self, record: ImageRecord) -> np.ndarray: ...

    def null_query(self) -> np.ndarray: ...


def chunk_starts(seq: np.ndarray, chunk_cap: int, stop_set: Iterable[int]) -> np.ndarray:
    """
    Chunk start for every query position ``0..len(seq)``.

    Position ``i`` covers tokens ``[start[i], i)``: from just after the closest
    stop token before ``i``, or the last ``chunk_cap`` tokens, whichever is shorter.
    """
    seq = np.asarray(seq)
    n = len(seq)
    stops = np.isin(seq, np.fromiter(stop_set, dtype=np.int64))
    last_stop = np.maximum.accumulate(np.where(stops, np.arange(n), -1))
    after_stop = np.zeros(n + 1, dtype=np.int64)
    after_stop[1:] = last_stop + 1
    positions = np.arange(n + 1)
    starts = np.where(positions - after_stop < chunk_cap, after_stop, positions - chunk_cap)
    starts[0] = 0
    return starts


def build_context_chunk(
    seq: np.ndarray,
    i: int,
    chunk_cap: int = constants.DEFAULT_CHUNK_CAP,
    stop_set: Iterable[int] = frozenset(),
) -> ContextChunk:
    """Left context of position ``i`` bounded by the closest stop token and ``chunk_cap``."""
    seq = np.asarray(seq, dtype=np.int64)
    if i <= 0:
        return ContextChunk(tokens=seq[:0], source_range=(0, 0))
    start = int(chunk_starts(seq[:i], chunk_cap, stop_set)[i])
    return ContextChunk(tokens=seq[start:i], source_range=(start, i))


def encode_text_query(enc: JointEncoder, chunk: ContextChunk) -> np.ndarray:
    """Query vector of a context chunk; the empty chunk maps to the null query."""
    if len(chunk) > enc.max_tokens:
        raise ChunkTooLong(len(chunk), enc.max_tokens)
    if chunk.is_empty:
        return enc.null_query()
    return enc.encode_text(chunk.tokens)


def encode_image_key(enc: JointEncoder, img: ImageRecord) -> np.ndarray:
    """Image key of a knowledge-base record."""
    return enc.encode_image(img)


def _unit(vector: np.ndarray) -> np.ndarray:
    return vector / np.linalg.norm(vector)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array, dtype=np.float64)
    array.setflags(write=False)
    return array


class SyntheticEncoder:
    """
    Deterministic stand-in for a contrastive text/image encoder pair.

    Attributes live on an orthonormal basis; each object gets a random unit
    direction orthogonal to that basis. An image of ``(o, a)`` is
    ``OBJECT_WEIGHT * u_o + ATTRIBUTE_WEIGHT * w_a`` plus a small per-record
    perturbation, normalized. A text chunk is anchored on its most recent
    object token and encodes that object together with its table attribute,
    so it lands next to the images of ``(o, attribute_table[o])``. Chunks
    without an object token hash to an unrelated random direction.
    """

    def __init__(
        self,
        dim: int,
        seed: int,
        attribute_table: Mapping[int, int],
        n_attributes: int | None = None,
        max_tokens: int = constants.DEFAULT_CHUNK_CAP,
    ):
        table = {int(k): int(v) for k, v in sorted(attribute_table.items())}
        if n_attributes is None:
            n_attributes = max(table.values(), default=0) + 1
        if not 0 < n_attributes < dim:
            raise InvalidEncoderSetup(f"need 0 < n_attributes < dim, got {n_attributes} and {dim}")
        if any(not 0 <= a < n_attributes for a in table.values()):
            raise InvalidEncoderSetup("attribute ids must lie in [0, n_attributes)")
        self.dim = dim
        self.seed = seed
        self.max_tokens = max_tokens
        self.n_attributes = n_attributes
        self.attribute_table = table
        basis, _ = np.linalg.qr(np.random.default_rng([seed, 0]).standard_normal((dim, n_attributes)))
        self._attributes = _frozen(basis.T)
        self._null = _frozen(_unit(np.random.default_rng([seed, 2]).standard_normal(dim)))
        table_crc = zlib.crc32(np.array(list(table.items()), dtype="<i8").tobytes())
        self.id = f"synthetic-d{dim}-s{seed}-a{n_attributes}-{table_crc:08x}"

    def attribute_direction(self, attribute_id: int) -> np.ndarray:
        return self._attributes[attribute_id]

    def object_direction(self, object_token: int) -> np.ndarray:
        raw = np.random.default_rng([self.seed, 1, int(object_token)]).standard_normal(self.dim)
        raw -= self._attributes.T @ (self._attributes @ raw)
        return _unit(raw)

    def _anchor(self, object_token: int, attribute_id: int) -> np.ndarray:
        return (
            constants.OBJECT_WEIGHT * self.object_direction(object_token)
            + constants.ATTRIBUTE_WEIGHT * self.attribute_direction(attribute_id)
        )

    def _hashed(self, *entropy: int) -> np.ndarray:
        return _unit(np.random.default_rng([self.seed, *entropy]).standard_normal(self.dim))

    def encode_text(self, tokens: np.ndarray) -> np.ndarray:
        for token in reversed(np.asarray(tokens).tolist()):
            if token in self.attribute_table:
                return _unit(self._anchor(token, self.attribute_table[token]))
        return self._hashed(4, *np.asarray(tokens).tolist())

    def encode_image(self, record: ImageRecord) -> np.ndarray:
        if record.object_token is None or record.attribute_id is None:
            return self._hashed(5, record.image_id)
        noise = np.random.default_rng(
            [self.seed, 3, record.object_token, record.attribute_id, record.variant]
        ).standard_normal(self.dim)
        noise *= constants.IMAGE_NOISE / np.linalg.norm(noise)
        return _unit(self._anchor(record.object_token, record.attribute_id) + noise)

    def null_query(self) -> np.ndarray:
        return self._null.copy()

    def state_bytes(self) -> bytes:
        """Serialized encoder parameters."""
        table = np.array(list(self.attribute_table.items()), dtype="<i8").tobytes()
        return self._attributes.tobytes() + self._null.tobytes() + table + self.id.encode()


def chunk_key(tokens: np.ndarray) -> int:
    """63-bit key of a token sequence, used to look up exported text embeddings."""
    digest = hashlib.blake2b(np.asarray(tokens, dtype="<i8").tobytes(), digest_size=8).digest()
    return int.from_bytes(digest, "little") & ((1 << 63) - 1)


class PrecomputedEncoder:
    """Embeddings exported from an external encoder, looked up by id or chunk key."""

    def __init__(
        self,
        images: EmbeddingStore,
        texts: EmbeddingStore | None = None,
        max_tokens: int = constants.DEFAULT_CHUNK_CAP,
    ):
        if texts is not None and texts.dim != images.dim:
            raise InvalidEncoderSetup("text and image embeddings must share one dimension")
        self.images = images
        self.texts = texts
        self.dim = images.dim
        self.max_tokens = max_tokens
        crc = zlib.crc32(images.ids.astype("<i8").tobytes())
        self.id = f"precomputed-d{self.dim}-{crc:08x}"
        null = np.zeros(self.dim)
        null[0] = 1.0
        self._null = _frozen(null)

    def encode_text(self, tokens: np.ndarray) -> np.ndarray:
        if self.texts is None:
            raise UnknownEmbedding("text chunks (no text embedding file loaded)")
        key = chunk_key(tokens)
        if key not in self.texts:
            raise UnknownEmbedding(f"chunk key {key}")
        return self.texts.get(key).copy()

    def encode_image(self, record: ImageRecord) -> np.ndarray:
        return self.images.get(record.image_id).copy()

    def null_query(self) -> np.ndarray:
        return self._null.copy()

    def state_bytes(self) -> bytes:
        texts = self.texts.vectors.tobytes() if self.texts is not None else b""
        return self.images.vectors.tobytes() + texts
