"""Zero-shot evaluation: label ranking, PIQA scoring, perplexity and probes."""

import logging
from collections.abc import Callable, Sequence
from functools import partial
from time import perf_counter

import numpy as np

from app.augment.service import Retriever, counterfactual_swap
from app.common.corpus import CorpusStore
from app.common.pagination import PaginationParams, paginate
from app.common.sorting import rank_by_score
from app.encoder import EmbeddingStore, ImageRecord
from app.encoder.tokenizer import Tokenizer, WordTokenizer
from app.evalkit.exceptions import (
    EmptyCorpus,
    EmptyLabel,
    EmptyLabelSet,
    EmptySolution,
    EmptyTask,
    GoldLabelMissing,
    ImagesRequired,
)
from app.evalkit.schemas import BenchReport, EvalReport, ItemPrediction, PerplexityResult, PromptSpec
from app.fusion_lm import ModelState, forward, token_logprobs
from app.fusion_lm.exceptions import ShapeMismatch
from app.fusion_lm.schemas import RetrievedImageSet

logger = logging.getLogger(__name__)

Augmenter = Callable[[np.ndarray], RetrievedImageSet | None]


def make_augmenter(retriever: Retriever | None) -> Augmenter:
    """Image slots for an evaluation sequence; ``None`` evaluates the plain decoder."""
    if retriever is None:
        return lambda tokens: None
    return retriever.augment


def _fit(model: ModelState, tokens: np.ndarray, keep: int) -> np.ndarray:
    """Left-truncate to ``max_seq`` while keeping the last ``keep`` tokens."""
    max_seq = model.config.max_seq
    if keep >= max_seq:
        raise ShapeMismatch(f"continuation of {keep} tokens does not fit max_seq {max_seq}")
    return tokens[-max_seq:]


def _continuation_logprob(
    model: ModelState, tokenizer: Tokenizer, prompt: str, continuation: str, images_for: Augmenter
) -> float:
    n_prompt = len(tokenizer.encode(prompt))
    full = tokenizer.encode(tokenizer.join(prompt, continuation))
    span = len(full) - n_prompt
    if span <= 0:
        raise EmptyLabel(continuation)
    full = _fit(model, full, span)
    logp = token_logprobs(model, full, images_for(full))
    return float(logp[-span:].sum())


def rank_labels(
    model: ModelState,
    augmenter: Augmenter,
    tokenizer: Tokenizer,
    prompt: str,
    labels: Sequence[str],
    task: str = "prompt",
) -> list[tuple[str, float]]:
    """
    Order candidate labels by how likely the model continues ``prompt`` with them.

    A label's score is the summed log-probability of its tokens appended to the
    prompt. Retrieval runs over the prompt plus label, so label tokens see only
    image slots retrieved from their left context.

    Returns:
        ``(label, score)`` pairs, best first, ties by label
    """
    if not labels:
        raise EmptyLabelSet(task)
    scores = [_continuation_logprob(model, tokenizer, prompt, label, augmenter) for label in labels]
    return rank_by_score(list(labels), scores)


def _slots(item: dict) -> dict[str, str]:
    return {key: value for key, value in item.items() if key != "gold"}


def eval_object_task(
    model: ModelState,
    augmenter: Augmenter,
    tokenizer: Tokenizer,
    prompts: Sequence[PromptSpec],
    items: Sequence[dict],
    mode: str | None = None,
) -> EvalReport:
    """
    Top-1 accuracy of every prompt over the items, and their mean.

    Every item's ``gold`` label must belong to every prompt's label set.
    """
    if not prompts or not items:
        raise EmptyTask("object", "at least one prompt and one item")
    for prompt in prompts:
        for item in items:
            if item["gold"] not in prompt.labels:
                raise GoldLabelMissing(item["gold"], _slots(item), prompt.labels)

    per_prompt: dict[str, float] = {}
    predicted: list[list[str]] = [[] for _ in items]
    for p, prompt in enumerate(prompts):
        correct = 0
        for i, item in enumerate(items):
            ranking = rank_labels(model, augmenter, tokenizer, prompt.fill(_slots(item)), prompt.labels, prompt.task)
            predicted[i].append(ranking[0][0])
            correct += ranking[0][0] == item["gold"]
        per_prompt[f"{p}:{prompt.template}"] = correct / len(items)
        logger.info(f"Prompt {prompt.template!r}: accuracy {per_prompt[f'{p}:{prompt.template}']:.4f}")

    return EvalReport(
        task=prompts[0].task,
        mode=mode,
        per_prompt=per_prompt,
        accuracy=float(np.mean(list(per_prompt.values()))),
        predictions=[
            ItemPrediction(item=_slots(item), gold=item["gold"], predictions=preds)
            for item, preds in zip(items, predicted, strict=True)
        ],
    )


def score_solutions_piqa(
    model: ModelState,
    augmenter: Augmenter,
    tokenizer: Tokenizer,
    goal: str,
    solutions: Sequence[str],
) -> tuple[int, list[float]]:
    """
    Pick the solution whose ``goal + solution`` text has the lower mean token cross-entropy.

    Ties go to the first solution.
    """
    scores = []
    for j, solution in enumerate(solutions):
        if not solution.strip():
            raise EmptySolution(j)
        tokens = _fit(model, tokenizer.encode(tokenizer.join(goal, solution)), 0)
        scores.append(float(-token_logprobs(model, tokens, augmenter(tokens)).mean()))
    return int(np.argmin(scores)), scores


def eval_piqa(
    model: ModelState, augmenter: Augmenter, tokenizer: Tokenizer, items: Sequence[dict], mode: str | None = None
) -> EvalReport:
    """Accuracy over ``{goal, sol1, sol2, label}`` items."""
    if not items:
        raise EmptyTask("piqa", "at least one item")
    predictions = []
    correct = 0
    for item in items:
        choice, _ = score_solutions_piqa(model, augmenter, tokenizer, item["goal"], [item["sol1"], item["sol2"]])
        correct += choice == int(item["label"])
        predictions.append(
            ItemPrediction(item={"goal": item["goal"]}, gold=str(item["label"]), predictions=[str(choice)])
        )
    accuracy = correct / len(items)
    return EvalReport(task="piqa", mode=mode, per_prompt={"piqa": accuracy}, accuracy=accuracy, predictions=predictions)


def _last_word_hit(model: ModelState, augmenter: Augmenter, tokenizer: Tokenizer, text: str) -> bool | None:
    words = text.split()
    candidates = [i for i, word in enumerate(words) if any(ch.isalnum() for ch in word)]
    if not candidates or candidates[-1] == 0:
        return None
    last = candidates[-1]
    prefix = " ".join(words[:last])
    full = tokenizer.encode(tokenizer.join(prefix, words[last]))
    span = len(full) - len(tokenizer.encode(prefix))
    if span <= 0 or span >= model.config.max_seq:
        return None
    full = full[-model.config.max_seq :]
    logits, _ = forward(model, full, augmenter(full))
    guesses = logits[-span - 1 : -1].argmax(axis=-1)
    return bool(np.array_equal(guesses, full[-span:]))


def perplexity(
    model: ModelState, augmenter: Augmenter, corpus: CorpusStore, tokenizer: Tokenizer | None = None
) -> PerplexityResult:
    """
    Perplexity over non-overlapping ``max_seq`` windows of every document.

    Image slots are retrieved once per full document and windowed. With a
    tokenizer and passage texts, also reports greedy final-word accuracy.
    """
    window = PaginationParams(page_size=model.config.max_seq)
    total, count = 0.0, 0
    for doc in corpus.documents:
        if len(doc) < 2:
            continue
        images = augmenter(doc)
        for start, tokens in paginate(doc, window):
            if len(tokens) < 2:
                continue
            page_images = images.window(start, start + len(tokens)) if images is not None else None
            logp = token_logprobs(model, tokens, page_images)
            total -= float(logp.sum())
            count += len(logp)
    if count == 0:
        raise EmptyCorpus()

    last_word_acc = None
    if tokenizer is not None and corpus.texts:
        hits = [_last_word_hit(model, augmenter, tokenizer, text) for text in corpus.texts]
        scored = [hit for hit in hits if hit is not None]
        if scored:
            last_word_acc = sum(scored) / len(scored)
    ppl = float(np.exp(total / count))
    logger.info(f"Perplexity {ppl:.4f} over {count} tokens")
    return PerplexityResult(perplexity=ppl, n_tokens=count, last_word_acc=last_word_acc)


def bench_retrieval_overhead(
    model: ModelState,
    baseline: Augmenter,
    candidate: Augmenter,
    documents: Sequence[np.ndarray],
) -> BenchReport:
    """
    Wall-clock scoring throughput of two augmenters over the same sample.

    Each document contributes its first ``max_seq`` tokens. ``ratio`` is the
    candidate's time over the baseline's.
    """
    windows = [np.asarray(doc[: model.config.max_seq]) for doc in documents if len(doc) >= 2]
    n_tokens = sum(len(w) for w in windows)

    def timed(augmenter: Augmenter) -> float:
        start = perf_counter()
        for tokens in windows:
            token_logprobs(model, tokens, augmenter(tokens))
        return perf_counter() - start

    base_s = timed(baseline)
    cand_s = timed(candidate)
    report = BenchReport(
        n_tokens=n_tokens,
        baseline_seconds=base_s,
        retrieval_seconds=cand_s,
        baseline_tokens_per_sec=n_tokens / base_s if base_s > 0 else 0.0,
        retrieval_tokens_per_sec=n_tokens / cand_s if cand_s > 0 else 0.0,
        ratio=cand_s / base_s if base_s > 0 else 1.0,
    )
    logger.info(f"Retrieval overhead ratio {report.ratio:.2f} over {n_tokens} tokens")
    return report


def probe_counterfactual(
    model: ModelState,
    augmenter: Augmenter,
    tokenizer: WordTokenizer,
    prompt: PromptSpec,
    items: Sequence[dict],
    records: Sequence[ImageRecord],
    keys: EmbeddingStore,
) -> EvalReport:
    """
    Swap each item's retrieved keys for keys of another attribute and watch the prediction.

    For an item whose gold label is attribute ``a``, every position after the
    object mention gets the keys of the same object paired with attribute
    ``(a + 1) % n``. Reports the flip rate towards that attribute and the mean
    change of its probability under a softmax over label scores.
    """
    if not items:
        raise EmptyTask("probe", "at least one item")
    labels = prompt.labels
    pairs: dict[tuple[int, int], list[ImageRecord]] = {}
    for record in records:
        pairs.setdefault((record.object_token, record.attribute_id), []).append(record)

    predictions = []
    flips, shifts, correct = 0, [], 0
    for item in items:
        obj, gold = item["ITEM"], item["gold"]
        if gold not in labels:
            raise GoldLabelMissing(gold, _slots(item), labels)
        target = (labels.index(gold) + 1) % len(labels)
        text = prompt.fill(_slots(item))
        mention_end = len(tokenizer.encode(text[: text.rindex(obj) + len(obj)]))
        replacements = sorted(pairs.get((tokenizer.token_id(obj), target), []), key=lambda r: r.variant)
        longest = max(len(tokenizer.encode(tokenizer.join(text, label))) for label in labels)
        if longest > model.config.max_seq:
            raise ShapeMismatch(f"probe prompt of {longest} tokens exceeds max_seq {model.config.max_seq}")
        ids = np.array([r.image_id for r in replacements], dtype=np.int64)
        swap = partial(_swap_after_mention, augmenter, keys, ids, mention_end)

        original = [_continuation_logprob(model, tokenizer, text, label, augmenter) for label in labels]
        changed = [_continuation_logprob(model, tokenizer, text, label, swap) for label in labels]
        before = rank_by_score(labels, original)[0][0]
        after = rank_by_score(labels, changed)[0][0]
        correct += before == gold
        flips += after == labels[target]
        shifts.append(_softmax(changed)[target] - _softmax(original)[target])
        predictions.append(ItemPrediction(item=_slots(item), gold=gold, predictions=[before, after]))

    accuracy = correct / len(items)
    flip_rate = flips / len(items)
    logger.info(f"Counterfactual probe: flip rate {flip_rate:.4f} over {len(items)} items")
    return EvalReport(
        task="probe",
        per_prompt={f"0:{prompt.template}": accuracy},
        accuracy=accuracy,
        predictions=predictions,
        prediction_columns=["before", "after"],
        metrics={"flip_rate": flip_rate, "mean_shift": float(np.mean(shifts))},
    )


def _swap_after_mention(
    augmenter: Augmenter,
    keys: EmbeddingStore,
    ids: np.ndarray,
    mention_end: int,
    tokens: np.ndarray,
) -> RetrievedImageSet:
    images = augmenter(tokens)
    if images is None or images.k == 0:
        raise ImagesRequired()
    chosen = ids[: images.k]
    vectors = keys.take(chosen)
    for position in range(min(mention_end, len(tokens)), images.n_positions):
        images = counterfactual_swap(images, position, vectors, chosen)
    return images


def _softmax(scores: Sequence[float]) -> np.ndarray:
    z = np.asarray(scores, dtype=np.float64)
    z = np.exp(z - z.max())
    return z / z.sum()
