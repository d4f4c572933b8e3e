"""Per-position retrieval of image keys."""

import logging
import zlib
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from app.augment.exceptions import EncoderMismatch, IndexUnavailable, PositionOutOfRange, TooManyReplacements
from app.augment.schemas import AugmentationPlan, RetrievalMode
from app.common.binio import checksum
from app.encoder import ContextChunk, EmbeddingStore, JointEncoder, encode_text_query, load_embeddings
from app.encoder.service import chunk_starts
from app.fusion_lm.schemas import RetrievedImageSet
from app.vindex import IvfPqIndex, index_checksum, load_index, search
from app.vindex.exceptions import VectorIndexError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class KnowledgeBase:
    """Image keys: the searchable index plus the raw vectors it was built from."""

    keys: EmbeddingStore
    index: IvfPqIndex | None = None

    @property
    def dim(self) -> int:
        return self.keys.dim

    @property
    def checksum(self) -> int:
        if self.index is not None:
            return index_checksum(self.index)
        return checksum(self.keys.ids.astype("<i8").tobytes() + self.keys.vectors.astype("<f8").tobytes())

    @classmethod
    def load(cls, keys_path: str | Path, index_path: str | Path | None = None) -> "KnowledgeBase":
        keys = load_embeddings(keys_path)
        index = None
        if index_path is not None:
            try:
                index = load_index(index_path)
            except VectorIndexError as exc:
                raise IndexUnavailable(exc.detail) from exc
        return cls(keys=keys, index=index)


class ImageSource(Protocol):
    """Retrieved image sets for whole documents of a corpus."""

    def images_for_document(self, doc_id: int, seq: np.ndarray) -> RetrievedImageSet: ...


class Retriever:
    """
    Live retrieval for one plan.

    Identical context chunks share one search; document results are memoized
    by document id.
    """

    def __init__(
        self,
        plan: AugmentationPlan,
        enc: JointEncoder,
        kb: KnowledgeBase | None,
        stop_set: Iterable[int] = frozenset(),
        model_dim: int | None = None,
    ):
        if plan.mode == RetrievalMode.RETRIEVE and plan.k > 0 and (kb is None or kb.index is None):
            raise IndexUnavailable("no index loaded")
        if plan.mode == RetrievalMode.RANDOM and plan.k > 0 and (kb is None or len(kb.keys) == 0):
            raise IndexUnavailable("random retrieval needs a non-empty key store")
        if kb is not None and enc.dim != kb.dim:
            raise EncoderMismatch(enc.dim, kb.dim, "image keys")
        if model_dim is not None and enc.dim != model_dim:
            raise EncoderMismatch(enc.dim, model_dim, "model width")
        self.plan = plan
        self.enc = enc
        self.kb = kb
        self.stop_set = frozenset(int(t) for t in stop_set)
        self._chunks: dict[bytes, tuple[np.ndarray, np.ndarray]] = {}
        self._documents: dict[int, RetrievedImageSet] = {}

    def _query_positions(self, seq: np.ndarray) -> np.ndarray:
        """Positions ``i >= 1`` on the stride grid whose context chunk is non-empty."""
        starts = chunk_starts(seq, self.plan.chunk_cap, self.stop_set)
        positions = np.arange(1, len(seq))
        positions = positions[(positions - 1) % self.plan.stride == 0]
        return positions[starts[positions] < positions]

    def _search_chunk(self, chunk: ContextChunk) -> tuple[np.ndarray, np.ndarray]:
        key = np.ascontiguousarray(chunk.tokens, dtype="<i8").tobytes()
        if key not in self._chunks:
            query = encode_text_query(self.enc, chunk)
            result = search(self.kb.index, query, self.plan.k, self.plan.nprobe)
            self._chunks[key] = (result.ids, result.scores)
        return self._chunks[key]

    def augment(self, seq: np.ndarray) -> RetrievedImageSet:
        seq = np.asarray(seq, dtype=np.int64)
        n_pos, k = len(seq), self.plan.k
        if not self.plan.active:
            return RetrievedImageSet.empty(n_pos, 0, self.enc.dim)

        ids = np.full((n_pos, k), -1, dtype=np.int64)
        scores = np.zeros((n_pos, k))
        counts = np.zeros(n_pos, dtype=np.int64)
        positions = self._query_positions(seq)
        if self.plan.mode == RetrievalMode.RANDOM:
            rng = np.random.default_rng([self.plan.seed, zlib.crc32(seq.astype("<i8").tobytes())])
            drawn = rng.integers(0, len(self.kb.keys), size=(len(positions), k))
            ids[positions] = self.kb.keys.ids[drawn]
            counts[positions] = k
        else:
            starts = chunk_starts(seq, self.plan.chunk_cap, self.stop_set)
            for i in positions:
                chunk = ContextChunk(tokens=seq[starts[i] : i], source_range=(int(starts[i]), int(i)))
                found_ids, found_scores = self._search_chunk(chunk)
                n = len(found_ids)
                ids[i, :n] = found_ids
                scores[i, :n] = found_scores
                counts[i] = n

        vectors = np.zeros((n_pos, k, self.enc.dim))
        occupied = ids >= 0
        vectors[occupied] = self.kb.keys.take(ids[occupied])
        logger.debug(f"Augmented {len(positions)} of {n_pos} positions in {self.plan.mode} mode")
        return RetrievedImageSet(vectors=vectors, ids=ids, scores=scores, counts=counts)

    def images_for_document(self, doc_id: int, seq: np.ndarray) -> RetrievedImageSet:
        if doc_id not in self._documents:
            self._documents[doc_id] = self.augment(seq)
        return self._documents[doc_id]


def augment_positions(
    seq: np.ndarray,
    plan: AugmentationPlan,
    enc: JointEncoder,
    kb: KnowledgeBase | None,
    stop_set: Iterable[int] = frozenset(),
) -> RetrievedImageSet:
    """
    Image slots for every position of ``seq``.

    Retrieve mode searches the index with the query of each position's context
    chunk; random mode draws ``K`` seeded ids from the key store instead;
    disabled mode leaves every position empty. Position 0 and positions with an
    empty chunk never receive slots.
    """
    return Retriever(plan, enc, kb, stop_set).augment(seq)


def counterfactual_swap(
    images: RetrievedImageSet,
    position: int,
    vectors: np.ndarray,
    ids: np.ndarray | None = None,
    scores: np.ndarray | None = None,
) -> RetrievedImageSet:
    """Copy of ``images`` whose slots at ``position`` hold the replacement keys."""
    if not 0 <= position < images.n_positions:
        raise PositionOutOfRange(position, images.n_positions)
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    n = len(vectors)
    if n > images.k:
        raise TooManyReplacements(n, images.k)
    new_vectors = images.vectors.copy()
    new_ids = images.ids.copy()
    new_scores = images.scores.copy()
    new_counts = images.counts.copy()
    new_vectors[position] = 0.0
    new_vectors[position, :n] = vectors
    new_ids[position] = -1
    new_ids[position, :n] = ids if ids is not None else -1
    new_scores[position] = 0.0
    new_scores[position, :n] = scores if scores is not None else 0.0
    new_counts[position] = n
    return RetrievedImageSet(vectors=new_vectors, ids=new_ids, scores=new_scores, counts=new_counts)
