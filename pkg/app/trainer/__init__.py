"""Language-model training over augmented batches."""

from app.trainer.optim import Adam, clip_gradients, learning_rate
from app.trainer.schemas import Batch, BlockRef, LossCurve, TrainConfig
from app.trainer.service import Prefetcher, block_refs, make_batches, train

__all__ = [
    "Adam",
    "Batch",
    "BlockRef",
    "LossCurve",
    "Prefetcher",
    "TrainConfig",
    "block_refs",
    "clip_gradients",
    "learning_rate",
    "make_batches",
    "train",
]
