"""Seeded Lloyd k-means."""

import logging

import numpy as np

logger = logging.getLogger(__name__)


def squared_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, shape ``(len(x), len(centroids))``."""
    return (
        (x * x).sum(axis=1)[:, None]
        - 2.0 * (x @ centroids.T)
        + (centroids * centroids).sum(axis=1)[None, :]
    )


def initial_centroids(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """
    Pick ``k`` distinct rows of ``x`` in seeded order.

    When ``x`` has fewer than ``k`` distinct rows, the rest are seeded repeats.
    """
    distinct = np.unique(x, axis=0)
    order = rng.permutation(len(distinct))
    if len(distinct) >= k:
        return distinct[order[:k]].copy()
    extra = rng.integers(0, len(distinct), size=k - len(distinct))
    return np.concatenate([distinct[order], distinct[extra]])


def lloyd_kmeans(x: np.ndarray, k: int, iters: int, rng: np.random.Generator) -> np.ndarray:
    """
    Cluster ``x`` into ``k`` centroids.

    Empty clusters keep their previous centroid; distance ties go to the
    lowest centroid index. Stops early once assignments stop changing.
    """
    x = np.asarray(x, dtype=np.float64)
    centroids = initial_centroids(x, k, rng)
    assignment = None
    for step in range(iters):
        new_assignment = squared_distances(x, centroids).argmin(axis=1)
        if assignment is not None and np.array_equal(new_assignment, assignment):
            logger.debug(f"k-means converged after {step} iterations")
            break
        assignment = new_assignment
        counts = np.bincount(assignment, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, assignment, x)
        filled = counts > 0
        centroids[filled] = sums[filled] / counts[filled, None]
    return centroids


def nearest(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Index of the nearest centroid for each row."""
    return squared_distances(np.asarray(x, dtype=np.float64), centroids).argmin(axis=1)
