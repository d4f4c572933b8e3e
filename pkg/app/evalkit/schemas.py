"""Evaluation schemas."""

import re
from typing import Any

from pydantic import BaseModel, Field, field_validator, model_validator

from app.evalkit import constants
from app.evalkit.exceptions import MissingSlot

TASK_SLOTS: dict[str, tuple[str, ...]] = {
    "object_color": ("ITEM",),
    "object_shape": ("ITEM",),
    "object_size": ("ITEMA", "ITEMB"),
    "sst2": ("SENTENCE",),
    "mpqa": ("SENTENCE",),
    "dbpedia": ("SENTENCE",),
    "agnews": ("SENTENCE",),
    "grounded_color": ("ITEM",),
}


class PromptSpec(BaseModel):
    """A zero-shot template and its closed label set."""

    task: str
    template: str = Field(min_length=1)
    labels: list[str]

    @field_validator("labels")
    @classmethod
    def labels_distinct(cls, v: list[str]) -> list[str]:
        if not v:
            raise ValueError("label set must not be empty")
        if len(set(v)) != len(v):
            raise ValueError("labels must be distinct")
        return v

    @model_validator(mode="after")
    def required_slots(self) -> "PromptSpec":
        missing = [slot for slot in TASK_SLOTS.get(self.task, ()) if slot not in self.slots]
        if missing:
            raise ValueError(f"template for {self.task} lacks slots {missing}")
        return self

    @property
    def slots(self) -> set[str]:
        return set(re.findall(constants.SLOT_PATTERN, self.template))

    def fill(self, values: dict[str, Any]) -> str:
        """Substitute slot values; optional slots without a value are dropped."""

        def substitute(match: re.Match) -> str:
            name = match.group(1)
            if name in values:
                return str(values[name])
            if name in constants.OPTIONAL_SLOTS:
                return ""
            raise MissingSlot(name)

        return " ".join(re.sub(constants.SLOT_PATTERN, substitute, self.template).split())


class ItemPrediction(BaseModel):
    item: dict[str, str]
    gold: str
    predictions: list[str]

    @property
    def correct(self) -> list[bool]:
        return [p == self.gold for p in self.predictions]


class EvalReport(BaseModel):
    """Accuracies per prompt and averaged, plus optional perplexity and probe fields."""

    task: str
    mode: str | None = None
    per_prompt: dict[str, float] = Field(default_factory=dict)
    accuracy: float | None = None
    predictions: list[ItemPrediction] = Field(default_factory=list)
    prediction_columns: list[str] = Field(default_factory=list, description="CSV headers of the prediction columns")
    perplexity: float | None = None
    last_word_acc: float | None = None
    n_tokens: int | None = None
    metrics: dict[str, float] = Field(default_factory=dict)
    settings: dict[str, Any] | None = None
    settings_digest: str | None = None

    @model_validator(mode="after")
    def accuracies_in_range(self) -> "EvalReport":
        values = [*self.per_prompt.values(), self.accuracy, self.last_word_acc]
        if any(v is not None and not 0.0 <= v <= 1.0 for v in values):
            raise ValueError("accuracies must lie in [0, 1]")
        return self


class PerplexityResult(BaseModel):
    perplexity: float
    n_tokens: int
    last_word_acc: float | None = None


class BenchReport(BaseModel):
    """Throughput with and without retrieval; no pass/fail threshold."""

    n_tokens: int
    baseline_seconds: float
    retrieval_seconds: float
    baseline_tokens_per_sec: float
    retrieval_tokens_per_sec: float
    ratio: float
