"""Index snapshots.

Layout (little-endian)::

    magic "VALMIVF\\0" | version u32 | flags u32 | E u32 | C u32 | M u32
    | count u64 | metric u32 | checksum u32 (CRC-32 of the body)
    body: centroids C x E f32
          codebooks M x 256 x (E/M) f32        (absent in exact mode)
          C x (n u64, ids n x u64, codes n x M u8 | n x E f64)
"""

import logging
from pathlib import Path

import numpy as np

from app.common.binio import BinaryReader, BinaryWriter, Truncated, checksum
from app.common.files import write_bytes_atomic
from app.vindex import constants
from app.vindex.exceptions import CorruptIndex, IoFailure, NotTrained
from app.vindex.models import IvfPqIndex

logger = logging.getLogger(__name__)


def _body(index: IvfPqIndex) -> bytes:
    writer = BinaryWriter()
    writer.array(index.centroids, "<f4")
    if not index.exact:
        writer.array(index.codebooks, "<f4")
    for ids, codes in zip(index.list_ids, index.list_codes, strict=True):
        writer.u64(len(ids))
        writer.array(ids, "<u8")
        writer.array(codes, "<f8" if index.exact else "u1")
    return writer.getvalue()


def dump_index(index: IvfPqIndex) -> bytes:
    """Serialize a trained index."""
    if not index.trained:
        raise NotTrained()
    body = _body(index)
    writer = BinaryWriter()
    writer.raw(constants.INDEX_MAGIC)
    writer.u32(constants.INDEX_VERSION)
    writer.u32(constants.FLAG_EXACT if index.exact else 0)
    writer.u32(index.dim)
    writer.u32(index.n_centroids)
    writer.u32(index.n_subquantizers)
    writer.u64(index.count)
    writer.u32(constants.METRIC_INNER_PRODUCT)
    writer.u32(checksum(body))
    writer.raw(body)
    return writer.getvalue()


def index_checksum(index: IvfPqIndex) -> int:
    """Checksum stored in the snapshot header; binds caches to an index."""
    return checksum(_body(index))


def save_index(index: IvfPqIndex, path: str | Path) -> None:
    data = dump_index(index)
    try:
        write_bytes_atomic(path, data)
    except OSError as exc:
        raise IoFailure(str(path), str(exc)) from exc
    logger.info(f"Saved index with {index.count} keys to {path} ({len(data)} bytes)")


def parse_index(data: bytes, source: str = "<bytes>") -> IvfPqIndex:
    """Rebuild an index from snapshot bytes."""
    reader = BinaryReader(data)
    try:
        if reader.raw(len(constants.INDEX_MAGIC)) != constants.INDEX_MAGIC:
            raise CorruptIndex(source, "bad magic")
        version = reader.u32()
        if version != constants.INDEX_VERSION:
            raise CorruptIndex(source, f"unsupported version {version}")
        flags = reader.u32()
        dim, n_centroids, n_sub = reader.u32(), reader.u32(), reader.u32()
        count = reader.u64()
        if reader.u32() != constants.METRIC_INNER_PRODUCT:
            raise CorruptIndex(source, "unsupported metric")
        expected = reader.u32()
        body = data[reader.offset :]
        if checksum(body) != expected:
            raise CorruptIndex(source, "checksum mismatch")
        if n_sub == 0 or dim % n_sub:
            raise CorruptIndex(source, "inconsistent dimensions")

        exact = bool(flags & constants.FLAG_EXACT)
        index = IvfPqIndex(dim=dim, n_centroids=n_centroids, n_subquantizers=n_sub, exact=exact)
        index.centroids = reader.array("<f4", n_centroids * dim).reshape(n_centroids, dim)
        if not exact:
            sub = dim // n_sub
            index.codebooks = reader.array("<f4", n_sub * constants.CODEBOOK_SIZE * sub).reshape(
                n_sub, constants.CODEBOOK_SIZE, sub
            )
        for c in range(n_centroids):
            n = reader.u64()
            index.list_ids[c] = reader.array("<u8", n).astype(np.int64)
            if exact:
                index.list_codes[c] = reader.array("<f8", n * dim).reshape(n, dim)
            else:
                index.list_codes[c] = reader.array("u1", n * n_sub).reshape(n, n_sub)
    except Truncated as exc:
        raise CorruptIndex(source, "truncated") from exc
    if not reader.exhausted:
        raise CorruptIndex(source, "trailing bytes")
    if index.count != count:
        raise CorruptIndex(source, f"header says {count} keys, lists hold {index.count}")
    return index


def load_index(path: str | Path) -> IvfPqIndex:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(str(path), str(exc)) from exc
    index = parse_index(data, str(path))
    logger.info(f"Loaded index with {index.count} keys from {path}")
    return index
