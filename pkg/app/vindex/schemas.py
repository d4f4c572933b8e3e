"""Vector index schemas."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SearchResult:
    """Top-k ids with non-increasing scores."""

    ids: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def empty(cls) -> "SearchResult":
        return cls(ids=np.zeros(0, dtype=np.int64), scores=np.zeros(0, dtype=np.float64))

    def same_as(self, other: "SearchResult") -> bool:
        """Identical ids and bit-identical scores."""
        return np.array_equal(self.ids, other.ids) and np.array_equal(self.scores, other.scores)
