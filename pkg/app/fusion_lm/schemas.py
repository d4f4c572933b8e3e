"""Fusion language model schemas."""

from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.fusion_lm import constants
from app.fusion_lm.exceptions import ShapeMismatch


class ProjMode(StrEnum):
    """Which projection parameters the image slots of the fusion layer use."""

    SHARED_WEIGHTS_IMAGE_BIAS = "shared_weights_image_bias"
    IMAGE_SPECIFIC_WEIGHTS_AND_BIAS = "image_specific_weights_and_bias"
    SHARED_ALL = "shared_all"


class ModelConfig(BaseModel):
    """Decoder shape and fusion layer placement."""

    model_config = ConfigDict(frozen=True)

    n_layers: int = Field(default=2, ge=1)
    n_heads: int = Field(default=2, ge=1)
    d_model: int = Field(default=64, ge=1)
    vocab_size: int = Field(default=256, ge=2)
    max_seq: int = Field(default=64, ge=2)
    fusion_layer_index: int = Field(default=0, description="Defaults to the second-to-last layer")
    num_images: int = Field(default=4, ge=0)
    proj_mode: ProjMode = ProjMode.SHARED_WEIGHTS_IMAGE_BIAS
    ln_img_eps: float = Field(default=constants.LN_EPS, gt=0)
    dropout: float = Field(default=0.1, ge=0, lt=1)
    dtype: str = Field(default="float64", pattern="^float(32|64)$")

    @model_validator(mode="before")
    @classmethod
    def default_fusion_layer(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("fusion_layer_index") is None:
            data = {**data, "fusion_layer_index": max(int(data.get("n_layers", 2)) - 2, 0)}
        return data

    @model_validator(mode="after")
    def check_shapes(self) -> "ModelConfig":
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} is not divisible by n_heads {self.n_heads}")
        if not 0 <= self.fusion_layer_index < self.n_layers:
            raise ValueError(f"fusion_layer_index must lie in [0, {self.n_layers})")
        return self

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)


@dataclass(frozen=True, eq=False)
class RetrievedImageSet:
    """
    Up to ``K`` retrieved image keys for every position of one sequence.

    Slots ``k >= counts[i]`` of position ``i`` are padding: zero vectors with
    id ``-1``. They are masked out of the fusion layer and never contribute.
    """

    vectors: np.ndarray  # (T, K, E)
    ids: np.ndarray  # (T, K)
    scores: np.ndarray  # (T, K)
    counts: np.ndarray  # (T,)

    def __post_init__(self):
        t, k = self.ids.shape
        if self.vectors.shape[:2] != (t, k) or self.scores.shape != (t, k) or self.counts.shape != (t,):
            raise ShapeMismatch("retrieved image arrays are not aligned")
        if (self.counts < 0).any() or (self.counts > k).any():
            raise ShapeMismatch("slot counts must lie in [0, K]")

    @classmethod
    def empty(cls, n_positions: int, k: int = 0, dim: int = 0) -> "RetrievedImageSet":
        """No retrieval at any position."""
        return cls(
            vectors=np.zeros((n_positions, k, dim)),
            ids=np.full((n_positions, k), -1, dtype=np.int64),
            scores=np.zeros((n_positions, k)),
            counts=np.zeros(n_positions, dtype=np.int64),
        )

    @property
    def n_positions(self) -> int:
        return self.ids.shape[0]

    @property
    def k(self) -> int:
        return self.ids.shape[1]

    @property
    def dim(self) -> int:
        return self.vectors.shape[2]

    def mask(self) -> np.ndarray:
        """Boolean ``(T, K)`` mask of occupied slots."""
        return np.arange(self.k)[None, :] < self.counts[:, None]

    def slots(self, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Occupied ``(vectors, ids, scores)`` of position ``i``."""
        n = int(self.counts[i])
        return self.vectors[i, :n], self.ids[i, :n], self.scores[i, :n]

    def window(self, start: int, end: int) -> "RetrievedImageSet":
        return RetrievedImageSet(
            vectors=self.vectors[start:end],
            ids=self.ids[start:end],
            scores=self.scores[start:end],
            counts=self.counts[start:end],
        )

    def same_as(self, other: "RetrievedImageSet") -> bool:
        return all(
            np.array_equal(a, b)
            for a, b in (
                (self.vectors, other.vectors),
                (self.ids, other.ids),
                (self.scores, other.scores),
                (self.counts, other.counts),
            )
        )


def stack_images(
    sets: Sequence[RetrievedImageSet | None], n_positions: int, dim: int
) -> tuple[np.ndarray, np.ndarray] | None:
    """
    Batch per-sequence image sets into ``(B, T, K, E)`` vectors and a ``(B, T, K)`` mask.

    Returns ``None`` when no sequence has any occupied slot.
    """
    present = [s for s in sets if s is not None]
    k = max((s.k for s in present), default=0)
    if k == 0 or not any(s.counts.any() for s in present):
        return None
    vectors = np.zeros((len(sets), n_positions, k, dim))
    mask = np.zeros((len(sets), n_positions, k), dtype=bool)
    for b, image_set in enumerate(sets):
        if image_set is None or image_set.k == 0:
            continue
        vectors[b, :, : image_set.k] = image_set.vectors
        mask[b, :, : image_set.k] = image_set.mask()
    return vectors, mask


@dataclass
class LayerActivations:
    """
    Forward trace of one sequence.

    ``hidden[0]`` is the embedding output and ``hidden[l + 1]`` the output of
    layer ``l``. Attention weights are per head, before dropout; image weights
    exist only for the fusion layer.
    """

    hidden: list[np.ndarray] = field(default_factory=list)
    text_weights: list[np.ndarray] = field(default_factory=list)  # per layer (H, T, T)
    image_weights: np.ndarray | None = None  # (H, T, K)
    fusion_layer_index: int = 0
