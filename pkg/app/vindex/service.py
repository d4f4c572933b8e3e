"""Index training, insertion and search."""

import logging
from collections.abc import Sequence

import numpy as np

from app.common.sorting import top_k_by_score
from app.vindex import constants
from app.vindex.exceptions import DimMismatch, DuplicateId, InsufficientSamples, InvalidSearch, NonFiniteSample, NotTrained
from app.vindex.kmeans import lloyd_kmeans, nearest
from app.vindex.models import IvfPqIndex
from app.vindex.schemas import SearchResult

logger = logging.getLogger(__name__)

Entries = Sequence[tuple[int, np.ndarray]]


def _as_matrix(vectors, dim: int | None = None) -> np.ndarray:
    matrix = np.asarray(vectors, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[None, :]
    if matrix.ndim != 2 or (dim is not None and matrix.shape[1] != dim):
        raise DimMismatch(dim if dim is not None else "a 2-D array", matrix.shape[-1])
    return matrix


def train_index(
    sample,
    n_centroids: int = constants.DEFAULT_CENTROIDS,
    n_subquantizers: int = constants.DEFAULT_SUBQUANTIZERS,
    iters: int = constants.DEFAULT_KMEANS_ITERS,
    seed: int = 0,
    exact: bool = False,
) -> IvfPqIndex:
    """
    Learn coarse centroids and PQ codebooks from a sample.

    Args:
        sample: Training vectors, shape ``(N, E)``
        n_centroids: Number of posting lists ``C``
        n_subquantizers: Subspaces ``M``; ``E`` must be divisible by it
        iters: Lloyd iterations for every k-means run
        seed: Seed of all k-means initialisations
        exact: Keep raw vectors instead of PQ codes

    Returns:
        Trained, empty index
    """
    x = _as_matrix(sample)
    n, dim = x.shape
    if n < n_centroids:
        raise InsufficientSamples(n_centroids, n)
    if n_subquantizers < 1 or dim % n_subquantizers:
        raise DimMismatch(f"a multiple of {n_subquantizers}", dim)
    if not np.isfinite(x).all():
        raise NonFiniteSample()

    index = IvfPqIndex(dim=dim, n_centroids=n_centroids, n_subquantizers=n_subquantizers, exact=exact)
    logger.info(f"Training {n_centroids} coarse centroids on {n} vectors of dim {dim}")
    centroids = lloyd_kmeans(x, n_centroids, iters, np.random.default_rng([seed, 0]))
    if not exact:
        sub = dim // n_subquantizers
        codebooks = np.empty((n_subquantizers, constants.CODEBOOK_SIZE, sub), dtype=np.float32)
        for m in range(n_subquantizers):
            rng = np.random.default_rng([seed, 1, m])
            codebooks[m] = lloyd_kmeans(x[:, m * sub : (m + 1) * sub], constants.CODEBOOK_SIZE, iters, rng)
        index.codebooks = codebooks
        logger.info(f"Trained {n_subquantizers} PQ codebooks of {constants.CODEBOOK_SIZE} codewords")
    index.centroids = centroids.astype(np.float32)
    return index


def encode(index: IvfPqIndex, vectors: np.ndarray) -> np.ndarray:
    """PQ codes (or raw vectors in exact mode) for a batch of vectors."""
    if index.exact:
        return np.asarray(vectors, dtype=np.float64).copy()
    sub = index.sub_dim
    codes = np.empty((len(vectors), index.n_subquantizers), dtype=np.uint8)
    for m in range(index.n_subquantizers):
        codebook = index.codebooks[m].astype(np.float64)
        codes[:, m] = nearest(vectors[:, m * sub : (m + 1) * sub], codebook)
    return codes


def assign_lists(index: IvfPqIndex, vectors: np.ndarray) -> np.ndarray:
    """Posting list of each vector: the centroid with the largest inner product."""
    return (vectors @ index.centroids.astype(np.float64).T).argmax(axis=1)


def add_keys(index: IvfPqIndex, entries: Entries) -> int:
    """
    Encode and append ``(id, vector)`` entries.

    Returns:
        Number of vectors stored after the insertion
    """
    if not index.trained:
        raise NotTrained()
    if len(entries) == 0:
        return index.count
    ids = np.array([int(image_id) for image_id, _ in entries], dtype=np.int64)
    vectors = _as_matrix([vector for _, vector in entries], index.dim)

    existing = set(index.stored_ids().tolist())
    seen: set[int] = set()
    for image_id in ids.tolist():
        if image_id in existing or image_id in seen:
            raise DuplicateId(image_id)
        seen.add(image_id)

    lists = assign_lists(index, vectors)
    codes = encode(index, vectors)
    for c in np.unique(lists):
        members = np.flatnonzero(lists == c)
        index.list_ids[c] = np.concatenate([index.list_ids[c], ids[members]])
        index.list_codes[c] = np.concatenate([index.list_codes[c], codes[members]])
    logger.debug(f"Added {len(ids)} keys, index now holds {index.count}")
    return index.count


def adc_table(index: IvfPqIndex, query: np.ndarray) -> np.ndarray:
    """Per-subspace table of query-subvector . codeword, shape ``(M, 256)``."""
    sub = index.sub_dim
    parts = query.reshape(index.n_subquantizers, sub)
    return np.einsum("mcs,ms->mc", index.codebooks.astype(np.float64), parts)


def adc_scores(index: IvfPqIndex, query: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Approximate dot products of ``query`` with coded vectors."""
    if index.exact:
        return codes @ query
    table = adc_table(index, query)
    return table[np.arange(index.n_subquantizers)[None, :], codes.astype(np.intp)].sum(axis=1)


def probe_lists(index: IvfPqIndex, query: np.ndarray, nprobe: int) -> np.ndarray:
    """The ``nprobe`` lists whose centroids score highest against the query."""
    coarse = index.centroids.astype(np.float64) @ query
    return np.lexsort((np.arange(index.n_centroids), -coarse))[:nprobe]


def search(index: IvfPqIndex, query: np.ndarray, k: int, nprobe: int = constants.DEFAULT_NPROBE) -> SearchResult:
    """
    Approximate maximum-inner-product search.

    Scans the ``nprobe`` best lists and ranks their entries by asymmetric
    distance computation; ties go to the smaller id.
    """
    if not index.trained:
        raise NotTrained()
    if k < 1 or not 1 <= nprobe <= index.n_centroids:
        raise InvalidSearch(f"need k >= 1 and 1 <= nprobe <= {index.n_centroids}, got k={k}, nprobe={nprobe}")
    query = _as_matrix(query, index.dim)[0]
    probed = probe_lists(index, query, nprobe)
    ids = [index.list_ids[c] for c in probed if len(index.list_ids[c])]
    if not ids:
        return SearchResult.empty()
    codes = np.concatenate([index.list_codes[c] for c in probed if len(index.list_ids[c])])
    top_ids, top_scores = top_k_by_score(np.concatenate(ids), adc_scores(index, query, codes), k)
    return SearchResult(ids=top_ids, scores=top_scores)


def brute_force_search(store: Entries, query: np.ndarray, k: int) -> SearchResult:
    """Exact top-k by dot product over every stored vector, ties by ascending id."""
    if k < 1:
        raise InvalidSearch(f"k must be at least 1, got {k}")
    if len(store) == 0:
        return SearchResult.empty()
    ids = np.array([int(image_id) for image_id, _ in store], dtype=np.int64)
    vectors = _as_matrix([vector for _, vector in store])
    query = _as_matrix(query, vectors.shape[1])[0]
    top_ids, top_scores = top_k_by_score(ids, vectors @ query, k)
    return SearchResult(ids=top_ids, scores=top_scores)


def recall_at_k(approx: SearchResult, exact: SearchResult, k: int) -> float:
    """Fraction of the exact top-k recovered in the approximate top-k."""
    truth = set(exact.ids[:k].tolist())
    if not truth:
        return 1.0
    return len(truth & set(approx.ids[:k].tolist())) / len(truth)
