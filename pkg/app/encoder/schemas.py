"""Encoder schemas."""

from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class ImageRecord(BaseModel):
    """An entry of the image knowledge base, before encoding."""

    model_config = ConfigDict(frozen=True)

    image_id: int = Field(ge=0)
    object_token: int | None = None
    attribute_id: int | None = None
    variant: int = Field(default=0, ge=0)


@dataclass(frozen=True)
class ContextChunk:
    """Left context used as the retrieval query of one position."""

    tokens: np.ndarray
    source_range: tuple[int, int]

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def is_empty(self) -> bool:
        return len(self.tokens) == 0
