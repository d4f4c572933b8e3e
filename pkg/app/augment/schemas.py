"""Augmentation schemas."""

from dataclasses import dataclass, field, fields
from enum import StrEnum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.augment import constants
from app.encoder.constants import DEFAULT_CHUNK_CAP
from app.encoder.schemas import ImageRecord
from app.vindex.constants import DEFAULT_NPROBE


class RetrievalMode(StrEnum):
    RETRIEVE = "retrieve"
    DISABLED = "disabled"
    RANDOM = "random"


class AugmentationPlan(BaseModel):
    """How image slots are filled for every position of a sequence."""

    model_config = ConfigDict(frozen=True)

    mode: RetrievalMode = RetrievalMode.RETRIEVE
    k: int = Field(default=4, ge=0)
    nprobe: int = Field(default=DEFAULT_NPROBE, ge=1)
    stride: int = Field(default=1, ge=1, description="Retrieve at every stride-th position")
    chunk_cap: int = Field(default=DEFAULT_CHUNK_CAP, ge=1)
    seed: int | None = Field(default=None, ge=0, description="Seed of random-mode draws")
    encoder_id: str | None = None
    index_path: str | None = None
    cache_path: str | None = None

    @model_validator(mode="before")
    @classmethod
    def disabled_means_no_slots(cls, data: Any) -> Any:
        if isinstance(data, dict) and str(data.get("mode", "")).lower() == RetrievalMode.DISABLED:
            data = {**data, "k": 0}
        return data

    @model_validator(mode="after")
    def random_needs_seed(self) -> "AugmentationPlan":
        if self.mode == RetrievalMode.RANDOM and self.seed is None:
            raise ValueError("random retrieval requires a seed")
        return self

    @property
    def active(self) -> bool:
        """Whether any position can receive image slots."""
        return self.mode != RetrievalMode.DISABLED and self.k > 0


@dataclass(frozen=True)
class CacheBinding:
    """Inputs a retrieval cache was computed from."""

    corpus_hash: bytes
    encoder_id: str
    index_checksum: int
    k: int
    nprobe: int
    mode: str
    seed: int
    stride: int
    chunk_cap: int

    def differences(self, other: "CacheBinding") -> list[str]:
        return [f.name for f in fields(self) if getattr(self, f.name) != getattr(other, f.name)]


class GroundedCorpusSpec(BaseModel):
    """Synthetic object/attribute world used for desk-scale grounding experiments."""

    n_objects: int = 100
    n_attributes: int = 8
    n_sentences: int = 10000
    split: float = Field(default=0.5, description="Fraction of objects held out of the training text")
    keys_per_pair: int = 4
    seed: int = 0
    templates: tuple[str, ...] = constants.TRAIN_TEMPLATES
    prompt_templates: tuple[str, ...] = constants.PROMPT_TEMPLATES
    sentences_per_passage: int = Field(default=constants.SENTENCES_PER_PASSAGE, ge=1)


@dataclass
class GroundedCorpus:
    """Everything ``generate_grounded_corpus`` produces."""

    objects: list[str]
    attribute_names: list[str]
    attributes: dict[str, int]
    train_objects: list[str]
    test_objects: list[str]
    train_text: str
    vocab: list[str]
    images: list[ImageRecord]
    prompts: list[dict] = field(default_factory=list)
    test_items: list[dict] = field(default_factory=list)
    train_items: list[dict] = field(default_factory=list)

    def attribute_table(self, token_id) -> dict[int, int]:
        """Object token id to attribute id, for the synthetic encoder."""
        return {token_id(obj): attr for obj, attr in self.attributes.items()}
