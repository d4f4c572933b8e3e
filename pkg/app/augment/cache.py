"""Precomputed retrieval results for a whole corpus.

Layout (little-endian)::

    magic "VALMRC\\0\\0" | version u32 | checksum u32 (CRC-32 of the body)
    body: corpus hash (32 bytes) | encoder id | index checksum u32 | K u32 | nprobe u32
          | mode | seed u64 | stride u32 | chunk cap u32 | document count u32
          per document, in document order:
              n u32 | counts n x u32 | ids n x K x i64 | scores n x K x f64

Strings are u32-length-prefixed UTF-8. Rows are stored for every position, so
records are sorted by (document, position).
"""

import logging
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.augment import constants
from app.augment.exceptions import BindingMismatch, CorruptCache
from app.augment.schemas import AugmentationPlan, CacheBinding
from app.augment.service import KnowledgeBase, Retriever
from app.common.binio import BinaryReader, BinaryWriter, Truncated, checksum
from app.common.corpus import CorpusStore
from app.common.files import write_bytes_atomic
from app.encoder import EmbeddingStore, JointEncoder
from app.fusion_lm.schemas import RetrievedImageSet

logger = logging.getLogger(__name__)


def make_binding(corpus: CorpusStore, plan: AugmentationPlan, enc: JointEncoder, kb: KnowledgeBase | None) -> CacheBinding:
    return CacheBinding(
        corpus_hash=corpus.digest(),
        encoder_id=enc.id,
        index_checksum=kb.checksum if kb is not None else 0,
        k=plan.k,
        nprobe=plan.nprobe,
        mode=str(plan.mode),
        seed=plan.seed if plan.seed is not None else 0,
        stride=plan.stride,
        chunk_cap=plan.chunk_cap,
    )


@dataclass(eq=False)
class RetrievalCache:
    """Per-document ``(counts, ids, scores)`` rows bound to the inputs that produced them."""

    binding: CacheBinding
    documents: list[tuple[np.ndarray, np.ndarray, np.ndarray]]

    def lookup(self, doc_id: int, position: int) -> list[tuple[int, float]]:
        """Retrieved ``(image id, score)`` pairs of one position."""
        counts, ids, scores = self.documents[doc_id]
        n = int(counts[position])
        return [(int(i), float(s)) for i, s in zip(ids[position, :n], scores[position, :n], strict=True)]

    def images(self, doc_id: int, keys: EmbeddingStore) -> RetrievedImageSet:
        counts, ids, scores = self.documents[doc_id]
        vectors = np.zeros((*ids.shape, keys.dim))
        occupied = ids >= 0
        vectors[occupied] = keys.take(ids[occupied])
        return RetrievedImageSet(vectors=vectors, ids=ids.copy(), scores=scores.copy(), counts=counts.astype(np.int64))

    def check(self, expected: CacheBinding, source: str = "<cache>") -> None:
        differing = self.binding.differences(expected)
        if differing:
            raise BindingMismatch(source, differing)


class CachedImageSource:
    """Serves training-time image slots from a retrieval cache."""

    def __init__(self, cache: RetrievalCache, keys: EmbeddingStore):
        self.cache = cache
        self.keys = keys

    def images_for_document(self, doc_id: int, seq: np.ndarray) -> RetrievedImageSet:
        return self.cache.images(doc_id, self.keys)


def dump_cache(cache: RetrievalCache) -> bytes:
    binding = cache.binding
    body = BinaryWriter()
    body.raw(binding.corpus_hash)
    body.text(binding.encoder_id)
    body.u32(binding.index_checksum)
    body.u32(binding.k)
    body.u32(binding.nprobe)
    body.text(binding.mode)
    body.u64(binding.seed)
    body.u32(binding.stride)
    body.u32(binding.chunk_cap)
    body.u32(len(cache.documents))
    for counts, ids, scores in cache.documents:
        body.u32(len(counts))
        body.array(counts, "<u4")
        body.array(ids, "<i8")
        body.array(scores, "<f8")
    payload = body.getvalue()

    writer = BinaryWriter()
    writer.raw(constants.CACHE_MAGIC)
    writer.u32(constants.CACHE_VERSION)
    writer.u32(checksum(payload))
    writer.raw(payload)
    return writer.getvalue()


def parse_cache(data: bytes, source: str = "<bytes>") -> RetrievalCache:
    reader = BinaryReader(data)
    try:
        if reader.raw(len(constants.CACHE_MAGIC)) != constants.CACHE_MAGIC:
            raise CorruptCache(source, "bad magic")
        version = reader.u32()
        if version != constants.CACHE_VERSION:
            raise CorruptCache(source, f"unsupported version {version}")
        expected = reader.u32()
        if checksum(data[reader.offset :]) != expected:
            raise CorruptCache(source, "checksum mismatch")
        binding = CacheBinding(
            corpus_hash=reader.raw(32),
            encoder_id=reader.text(),
            index_checksum=reader.u32(),
            k=reader.u32(),
            nprobe=reader.u32(),
            mode=reader.text(),
            seed=reader.u64(),
            stride=reader.u32(),
            chunk_cap=reader.u32(),
        )
        documents = []
        for _ in range(reader.u32()):
            n = reader.u32()
            counts = reader.array("<u4", n).astype(np.int64)
            ids = reader.array("<i8", n * binding.k).reshape(n, binding.k)
            scores = reader.array("<f8", n * binding.k).reshape(n, binding.k)
            documents.append((counts, ids, scores))
    except Truncated as exc:
        raise CorruptCache(source, "truncated") from exc
    if not reader.exhausted:
        raise CorruptCache(source, "trailing bytes")
    return RetrievalCache(binding=binding, documents=documents)


def load_cache(path: str | Path, expected: CacheBinding | None = None) -> RetrievalCache:
    """Read a cache and, when ``expected`` is given, verify its binding."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CorruptCache(str(path), str(exc)) from exc
    cache = parse_cache(data, str(path))
    if expected is not None:
        cache.check(expected, str(path))
    return cache


def build_cache(
    corpus: CorpusStore,
    plan: AugmentationPlan,
    enc: JointEncoder,
    kb: KnowledgeBase | None,
    path: str | Path | None = None,
    stop_set: Iterable[int] = frozenset(),
) -> RetrievalCache:
    """
    Retrieve for every position of every document and optionally write the cache.

    The file is written once, atomically.
    """
    retriever = Retriever(plan, enc, kb, stop_set)
    documents = []
    for doc_id, seq in enumerate(corpus.documents):
        images = retriever.augment(seq)
        ids = images.ids if images.k == plan.k else np.full((images.n_positions, plan.k), -1, dtype=np.int64)
        scores = images.scores if images.k == plan.k else np.zeros((images.n_positions, plan.k))
        documents.append((images.counts.copy(), ids.copy(), scores.copy()))
        if (doc_id + 1) % 100 == 0:
            logger.info(f"Retrieved for {doc_id + 1}/{len(corpus)} documents")
    cache = RetrievalCache(binding=make_binding(corpus, plan, enc, kb), documents=documents)
    if path is not None:
        write_bytes_atomic(path, dump_cache(cache))
        logger.info(f"Wrote retrieval cache for {len(corpus)} documents to {path}")
    return cache
