"""Deterministic ranking utilities."""

from collections.abc import Sequence

import numpy as np


def top_k_by_score(ids: np.ndarray, scores: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Select the ``k`` highest scores, ties broken by ascending id.

    Args:
        ids: Integer ids, one per candidate
        scores: Candidate scores
        k: Number of results to keep

    Returns:
        Tuple of (ids, scores), scores non-increasing
    """
    if len(ids) == 0:
        return ids[:0].astype(np.int64), scores[:0].astype(np.float64)
    order = np.lexsort((ids, -scores))[:k]
    return ids[order].astype(np.int64), scores[order].astype(np.float64)


def rank_by_score(names: Sequence[str], scores: Sequence[float]) -> list[tuple[str, float]]:
    """Order ``(name, score)`` pairs by descending score, ties by name."""
    return sorted(zip(names, scores, strict=True), key=lambda pair: (-pair[1], pair[0]))
