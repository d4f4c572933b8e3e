"""Zero-shot prompt registry and JSON-lines loaders."""

import json
import logging
from pathlib import Path

from pydantic import ValidationError

from app.core.exceptions import ConfigError
from app.evalkit import constants
from app.evalkit.schemas import PromptSpec

logger = logging.getLogger(__name__)

_COLOR_TEMPLATES = (
    "Q: What is the color of [DESCRIPTOR] [ITEM]? A: It is",
    "Q: What is the colour of [DESCRIPTOR] [ITEM] ? A: It is",
    "What is the color of [DESCRIPTOR] [ITEM]? It is",
    "What is the colour of [DESCRIPTOR] [ITEM]?",
    "The color of [DESCRIPTOR] [ITEM] is",
    "The usual color of [DESCRIPTOR] [ITEM] is",
    "[DESCRIPTOR] [ITEM] usually has the color of",
    "What is the usual color of [DESCRIPTOR] [ITEM]?",
    "What is the typical color of [DESCRIPTOR] [ITEM]?",
)
_SHAPE_TEMPLATES = (
    "[ITEM] can be shape",
    "[ITEM] has shape",
    "[ITEM] is of shape",
    "The shape of [ITEM] can be",
    "The shape of the [ITEM] is",
)
_SIZE_TEMPLATES = (
    "Is [ITEMA] larger than [ITEMB]?",
    "Is [ITEMA] taller than [ITEMB]?",
    "Is [ITEMA] higher than [ITEMB]?",
    "[ITEMA] is larger than [ITEMB], is it true?",
    "[ITEMA] is taller than [ITEMB], is it true?",
)
_SENTIMENT_TEMPLATE = "Review: [SENTENCE] Sentiment:"
_TOPIC_TEMPLATE = "input: [SENTENCE] type:"


def _specs(task: str, templates: tuple[str, ...], labels: tuple[str, ...]) -> list[PromptSpec]:
    return [PromptSpec(task=task, template=template, labels=list(labels)) for template in templates]


PROMPT_REGISTRY: dict[str, list[PromptSpec]] = {
    "object_color": _specs("object_color", _COLOR_TEMPLATES, constants.COLOR_LABELS),
    "object_shape": _specs("object_shape", _SHAPE_TEMPLATES, constants.SHAPE_LABELS),
    "object_size": _specs("object_size", _SIZE_TEMPLATES, constants.SIZE_LABELS),
    "sst2": _specs("sst2", (_SENTIMENT_TEMPLATE,), constants.SENTIMENT_LABELS),
    "mpqa": _specs("mpqa", (_SENTIMENT_TEMPLATE,), constants.SENTIMENT_LABELS),
    "dbpedia": _specs("dbpedia", (_TOPIC_TEMPLATE,), constants.DBPEDIA_LABELS),
    "agnews": _specs("agnews", (_TOPIC_TEMPLATE,), constants.AGNEWS_LABELS),
}


def _read_jsonl(path: str | Path) -> list[tuple[int, dict]]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"Cannot read {path}: {exc}") from exc
    rows = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rows.append((number, json.loads(line)))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{number}: invalid JSON ({exc.msg})") from exc
    return rows


def load_prompts(path: str | Path) -> list[PromptSpec]:
    """Prompts file: one ``{task, template, labels}`` object per line."""
    prompts = []
    for number, row in _read_jsonl(path):
        try:
            prompts.append(PromptSpec.model_validate(row))
        except ValidationError as exc:
            raise ConfigError(f"{path}:{number}: invalid prompt ({exc.errors()[0]['msg']})") from exc
    logger.debug(f"Loaded {len(prompts)} prompts from {path}")
    return prompts


def load_items(path: str | Path) -> list[dict]:
    """Items file: slot values plus a ``gold`` label per line."""
    items = []
    for number, row in _read_jsonl(path):
        if not isinstance(row, dict):
            raise ConfigError(f"{path}:{number}: item must be a JSON object")
        items.append({key: str(value) for key, value in row.items()})
    return items


def load_piqa(path: str | Path) -> list[dict]:
    """PIQA-style file: ``{goal, sol1, sol2, label}`` per line."""
    items = []
    for number, row in _read_jsonl(path):
        missing = {"goal", "sol1", "sol2", "label"} - set(row)
        if missing:
            raise ConfigError(f"{path}:{number}: missing fields {sorted(missing)}")
        items.append(row)
    return items
