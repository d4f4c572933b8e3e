"""Inverted-file index with product-quantized codes."""

from dataclasses import dataclass, field

import numpy as np

from app.vindex import constants


@dataclass(eq=False)
class IvfPqIndex:
    """
    Coarse centroids routing vectors to posting lists of compact codes.

    In the default mode each stored vector is kept as ``n_subquantizers`` bytes,
    one codeword index per subspace. With ``exact=True`` the posting lists hold
    the raw float64 vectors instead, which turns scoring into exact dot products.
    """

    dim: int
    n_centroids: int
    n_subquantizers: int
    exact: bool = False
    centroids: np.ndarray | None = None
    codebooks: np.ndarray | None = None
    list_ids: list[np.ndarray] = field(default_factory=list)
    list_codes: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.list_ids:
            self.list_ids = [np.zeros(0, dtype=np.int64) for _ in range(self.n_centroids)]
            self.list_codes = [self.empty_codes() for _ in range(self.n_centroids)]

    @property
    def trained(self) -> bool:
        return self.centroids is not None

    @property
    def sub_dim(self) -> int:
        return self.dim // self.n_subquantizers

    @property
    def code_size(self) -> int:
        """Bytes per stored vector."""
        return self.dim * 8 if self.exact else self.n_subquantizers

    @property
    def count(self) -> int:
        return sum(len(ids) for ids in self.list_ids)

    def empty_codes(self) -> np.ndarray:
        if self.exact:
            return np.zeros((0, self.dim), dtype=np.float64)
        return np.zeros((0, self.n_subquantizers), dtype=np.uint8)

    def stored_ids(self) -> np.ndarray:
        if not self.list_ids:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self.list_ids)

    def decode(self, codes: np.ndarray) -> np.ndarray:
        """Reconstruct vectors of dimension ``dim`` from codes."""
        if self.exact:
            return np.asarray(codes, dtype=np.float64)
        parts = [self.codebooks[m, codes[:, m]] for m in range(self.n_subquantizers)]
        return np.concatenate(parts, axis=1).astype(np.float64)

    def describe(self) -> dict[str, int | bool]:
        return {
            "dim": self.dim,
            "n_centroids": self.n_centroids,
            "n_subquantizers": self.n_subquantizers,
            "codebook_size": constants.CODEBOOK_SIZE,
            "exact": self.exact,
            "count": self.count,
        }
