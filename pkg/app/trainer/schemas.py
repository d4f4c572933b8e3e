"""Trainer schemas."""

from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.trainer import constants


class TrainConfig(BaseModel):
    """Optimization hyperparameters."""

    model_config = ConfigDict(frozen=True)

    lr: float = Field(default=3e-3, ge=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.98, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    warmup_steps: int = Field(default=100, ge=0)
    total_steps: int = Field(default=2000, ge=0)
    batch_size: int = Field(default=16, ge=1)
    seq_len: int = Field(default=32, ge=2)
    dropout: float = Field(default=0.1, ge=0, lt=1)
    grad_clip: float | None = Field(default=1.0, gt=0)
    seed: int = 0
    checkpoint_every: int = Field(default=0, ge=0, description="0 disables periodic checkpoints")
    prefetch: int = Field(default=2, ge=0, description="Batches assembled ahead of the optimizer")

    @model_validator(mode="after")
    def warmup_within_run(self) -> "TrainConfig":
        if self.warmup_steps > self.total_steps:
            raise ValueError("warmup_steps must not exceed total_steps")
        return self


@dataclass(frozen=True)
class BlockRef:
    """A training block: ``seq_len`` tokens of one document starting at ``start``."""

    doc_id: int
    start: int


@dataclass(eq=False)
class Batch:
    tokens: np.ndarray  # (B, seq_len)
    refs: list[BlockRef]
    epoch: int


@dataclass
class LossPoint:
    step: int
    lr: float
    nll: float


@dataclass
class LossCurve:
    points: list[LossPoint] = field(default_factory=list)

    def append(self, step: int, lr: float, nll: float) -> None:
        self.points.append(LossPoint(step=step, lr=lr, nll=nll))

    @property
    def nll(self) -> list[float]:
        return [p.nll for p in self.points]

    def to_csv(self) -> str:
        rows = [",".join(constants.LOSS_CSV_HEADER)]
        rows += [f"{p.step},{p.lr!r},{p.nll!r}" for p in self.points]
        return "\n".join(rows) + "\n"
