"""Synthetic grounded corpus: objects with one visual attribute each."""

import json
import logging
from pathlib import Path

import numpy as np

from app.augment import constants
from app.augment.exceptions import SpecInfeasible
from app.augment.schemas import GroundedCorpus, GroundedCorpusSpec
from app.common.files import write_text_atomic
from app.encoder.schemas import ImageRecord
from app.encoder.tokenizer import UNKNOWN_TOKEN

logger = logging.getLogger(__name__)


def attribute_names(n_attributes: int) -> list[str]:
    if n_attributes <= len(constants.ATTRIBUTE_NAMES):
        return list(constants.ATTRIBUTE_NAMES[:n_attributes])
    return [f"attr{j:02d}" for j in range(n_attributes)]


def image_id(object_index: int, attribute_id: int, variant: int, n_attributes: int, keys_per_pair: int) -> int:
    return (object_index * n_attributes + attribute_id) * keys_per_pair + variant


def _check(spec: GroundedCorpusSpec) -> tuple[int, int]:
    if spec.n_objects < constants.MIN_OBJECTS:
        raise SpecInfeasible(f"need at least {constants.MIN_OBJECTS} objects, got {spec.n_objects}")
    if spec.n_attributes < constants.MIN_ATTRIBUTES:
        raise SpecInfeasible(f"need at least {constants.MIN_ATTRIBUTES} attributes, got {spec.n_attributes}")
    if not 0.0 < spec.split < 1.0:
        raise SpecInfeasible(f"split must lie strictly between 0 and 1, got {spec.split}")
    if spec.keys_per_pair < 1 or spec.n_sentences < 1:
        raise SpecInfeasible("keys_per_pair and n_sentences must be positive")
    n_test = round(spec.split * spec.n_objects)
    n_train = spec.n_objects - n_test
    if n_test < 1 or n_train < spec.n_attributes:
        raise SpecInfeasible(
            f"{n_train} training objects cannot cover {spec.n_attributes} attributes with {n_test} held out"
        )
    for template in spec.templates:
        if "{obj}" not in template or "{attr}" not in template:
            raise SpecInfeasible(f"template {template!r} needs both {{obj}} and {{attr}}")
    for template in spec.prompt_templates:
        if "[ITEM]" not in template:
            raise SpecInfeasible(f"prompt template {template!r} has no [ITEM] slot")
    return n_train, n_test


def generate_grounded_corpus(spec: GroundedCorpusSpec) -> GroundedCorpus:
    """
    Build training text, held-out prompts and the image knowledge base.

    Objects are split into training and held-out sets first; attributes are
    then dealt round-robin within each set, so both sets are balanced. Every
    training sentence draws its attribute uniformly and then one training
    object carrying it, which keeps attribute marginals uniform. Held-out
    object names never occur in the training text.
    """
    n_train, n_test = _check(spec)
    rng = np.random.default_rng(spec.seed)
    objects = [constants.OBJECT_NAME.format(index=o) for o in range(spec.n_objects)]
    names = attribute_names(spec.n_attributes)

    order = rng.permutation(spec.n_objects)
    test_idx = sorted(order[:n_test].tolist())
    train_idx = sorted(order[n_test:].tolist())
    attributes: dict[str, int] = {}
    for group in (train_idx, test_idx):
        for j, o in enumerate(rng.permutation(group).tolist()):
            attributes[objects[o]] = j % spec.n_attributes
    attributes = dict(sorted(attributes.items()))

    by_attribute = [[objects[o] for o in train_idx if attributes[objects[o]] == a] for a in range(spec.n_attributes)]
    sentences = []
    for _ in range(spec.n_sentences):
        a = int(rng.integers(spec.n_attributes))
        obj = by_attribute[a][int(rng.integers(len(by_attribute[a])))]
        template = spec.templates[int(rng.integers(len(spec.templates)))]
        sentences.append(template.format(obj=obj, attr=names[a]))
    passages = [
        " ".join(sentences[i : i + spec.sentences_per_passage])
        for i in range(0, len(sentences), spec.sentences_per_passage)
    ]
    train_text = "\n\n".join(passages) + "\n"

    words = set()
    for text in (*spec.templates, *spec.prompt_templates):
        words.update(w for w in text.split() if not w.startswith(("{", "[")))
    vocab = [UNKNOWN_TOKEN, *sorted(words - {UNKNOWN_TOKEN}), *objects, *names]
    if len(set(vocab)) != len(vocab):
        raise SpecInfeasible("template words collide with object or attribute names")
    token_of = {word: i for i, word in enumerate(vocab)}

    images = [
        ImageRecord(
            image_id=image_id(o, a, v, spec.n_attributes, spec.keys_per_pair),
            object_token=token_of[objects[o]],
            attribute_id=a,
            variant=v,
        )
        for o in range(spec.n_objects)
        for a in range(spec.n_attributes)
        for v in range(spec.keys_per_pair)
    ]
    prompts = [
        {"task": constants.CORPUS_TASK, "template": template, "labels": names} for template in spec.prompt_templates
    ]

    def items(indices: list[int]) -> list[dict]:
        return [{"ITEM": objects[o], "gold": names[attributes[objects[o]]]} for o in indices]

    corpus = GroundedCorpus(
        objects=objects,
        attribute_names=names,
        attributes=attributes,
        train_objects=[objects[o] for o in train_idx],
        test_objects=[objects[o] for o in test_idx],
        train_text=train_text,
        vocab=vocab,
        images=images,
        prompts=prompts,
        test_items=items(test_idx),
        train_items=items(train_idx),
    )
    logger.info(
        f"Generated {spec.n_sentences} sentences over {n_train} training objects, "
        f"{n_test} held out, {len(images)} image records"
    )
    return corpus


def _jsonl(rows: list[dict]) -> str:
    return "".join(json.dumps(row, sort_keys=True) + "\n" for row in rows)


def write_grounded_corpus(corpus: GroundedCorpus, directory: str | Path) -> list[Path]:
    """Write every artifact of a generated corpus; returns the written paths."""
    directory = Path(directory)
    files = {
        "train.txt": corpus.train_text,
        "vocab.json": json.dumps(corpus.vocab, indent=0),
        "attributes.json": json.dumps({"names": corpus.attribute_names, "objects": corpus.attributes}, indent=2),
        "items.jsonl": _jsonl(corpus.test_items),
        "items_train.jsonl": _jsonl(corpus.train_items),
        "prompts.jsonl": _jsonl(corpus.prompts),
        "images.jsonl": _jsonl([record.model_dump() for record in corpus.images]),
    }
    written = []
    for name, content in files.items():
        write_text_atomic(directory / name, content)
        written.append(directory / name)
    logger.info(f"Wrote grounded corpus to {directory}")
    return written


def load_attribute_table(directory: str | Path, token_id) -> tuple[dict[int, int], int]:
    """Object token id to attribute id from ``attributes.json``, plus the attribute count."""
    payload = json.loads((Path(directory) / "attributes.json").read_text(encoding="utf-8"))
    table = {token_id(obj): int(attr) for obj, attr in payload["objects"].items()}
    return table, len(payload["names"])


def load_image_records(directory: str | Path) -> list[ImageRecord]:
    lines = (Path(directory) / "images.jsonl").read_text(encoding="utf-8").splitlines()
    return [ImageRecord.model_validate_json(line) for line in lines if line.strip()]
