"""Evaluation exceptions."""

from app.core.exceptions import AppError
from app.evalkit import constants


class EvalError(AppError):
    """Base class for evaluation failures."""

    exit_code = 8


class EmptyLabelSet(EvalError):
    """Exception raised when a prompt offers no labels to rank."""

    def __init__(self, task: str):
        super().__init__(constants.EMPTY_LABEL_SET_ERROR.format(task=task))


class GoldLabelMissing(EvalError):
    """Exception raised when an item's gold label is outside the label set."""

    def __init__(self, gold: str, item: dict, labels: list[str]):
        super().__init__(constants.GOLD_LABEL_MISSING_ERROR.format(gold=gold, item=item, labels=labels))


class EmptySolution(EvalError):
    """Exception raised when a PIQA solution has no text."""

    def __init__(self, index: int):
        super().__init__(constants.EMPTY_SOLUTION_ERROR.format(index=index))


class EmptyCorpus(EvalError):
    """Exception raised when perplexity has nothing to score."""

    def __init__(self):
        super().__init__(constants.EMPTY_CORPUS_ERROR)


class EmptyTask(EvalError):
    """Exception raised when a task has nothing to evaluate."""

    def __init__(self, task: str, detail: str):
        super().__init__(constants.EMPTY_TASK_ERROR.format(task=task, detail=detail))


class EmptyLabel(EvalError):
    """Exception raised when a label encodes to no tokens."""

    def __init__(self, label: str):
        super().__init__(constants.EMPTY_LABEL_ERROR.format(label=label))


class ImagesRequired(EvalError):
    """Exception raised when the counterfactual probe runs without image slots."""

    def __init__(self):
        super().__init__(constants.IMAGES_REQUIRED_ERROR)


class MissingSlot(EvalError):
    """Exception raised when a template slot has no value."""

    def __init__(self, name: str):
        super().__init__(constants.MISSING_SLOT_ERROR.format(name=name))
