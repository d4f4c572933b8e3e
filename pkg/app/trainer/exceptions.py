"""Trainer exceptions."""

from app.core.exceptions import AppError
from app.trainer import constants


class TrainerError(AppError):
    """Base class for training failures."""

    exit_code = 6


class EmptyCorpus(TrainerError):
    """Exception raised when a corpus yields no complete block."""

    def __init__(self, seq_len: int):
        super().__init__(constants.EMPTY_CORPUS_ERROR.format(seq_len=seq_len))


class NonFiniteLoss(TrainerError):
    """Exception raised when the loss or its gradients stop being finite."""

    def __init__(self, step: int):
        super().__init__(constants.NON_FINITE_LOSS_ERROR.format(step=step))
        self.step = step
