"""Tests for the zero-shot evaluation harness."""

import json

import numpy as np
import pytest
from pydantic import ValidationError

from app.augment import Retriever
from app.common import CorpusStore
from app.core.exceptions import ConfigError
from app.encoder import WordTokenizer
from app.evalkit import (
    PROMPT_REGISTRY,
    EvalReport,
    PromptSpec,
    ablation_csv,
    bench_retrieval_overhead,
    eval_object_task,
    eval_piqa,
    load_items,
    load_piqa,
    load_prompts,
    make_augmenter,
    perplexity,
    probe_counterfactual,
    rank_labels,
    score_solutions_piqa,
    write_report,
)
from app.evalkit.exceptions import (
    EmptyCorpus,
    EmptyLabel,
    EmptyLabelSet,
    EmptySolution,
    EmptyTask,
    GoldLabelMissing,
    ImagesRequired,
    MissingSlot,
)
from tests.factories import AugmentationPlanFactory, PromptSpecFactory

WORDS = ["the", "color", "of", "is", "sky", "grass", "red", "blue", "how", "to", "open", "a", "jar", "twist", "lid", "."]


@pytest.fixture
def words() -> WordTokenizer:
    return WordTokenizer(WORDS)


@pytest.fixture
def plain():
    return make_augmenter(None)


@pytest.fixture
def uniform(tiny_model):
    """A model whose next-token distribution is uniform everywhere."""
    tiny_model.params["head.w"][:] = 0.0
    tiny_model.params["head.b"][:] = 0.0
    return tiny_model


@pytest.fixture
def likes_blue(uniform, words):
    """A model that always predicts the word ``blue``."""
    uniform.params["head.b"][words.token_id("blue")] = 5.0
    return uniform


@pytest.fixture
def retrieval(encoder, kb, tokenizer):
    return make_augmenter(Retriever(AugmentationPlanFactory(), encoder, kb, tokenizer.stop_set(), model_dim=16))


class TestPromptSpec:
    """Test prompt templates."""

    def test_fill_drops_optional_slot(self):
        """Test that a missing descriptor leaves no double space."""
        prompt = PromptSpecFactory()

        assert prompt.fill({"ITEM": "sky"}) == "The color of sky is"
        assert prompt.fill({"ITEM": "sky", "DESCRIPTOR": "a clear"}) == "The color of a clear sky is"

    def test_fill_needs_required_slot(self):
        """Test that required slots must have a value."""
        with pytest.raises(MissingSlot):
            PromptSpecFactory().fill({})

    @pytest.mark.parametrize(
        "overrides",
        [{"labels": []}, {"labels": ["red", "red"]}, {"task": "object_size", "template": "Is [ITEMA] big?"}],
    )
    def test_invalid(self, overrides):
        """Test empty or repeated labels and templates lacking task slots."""
        with pytest.raises(ValidationError):
            PromptSpecFactory(**overrides)

    def test_registry(self):
        """Test the built-in prompt sets."""
        assert len(PROMPT_REGISTRY["object_color"]) == 9
        assert len(PROMPT_REGISTRY["object_shape"]) == 5
        assert len(PROMPT_REGISTRY["object_size"]) == 5
        assert len(PROMPT_REGISTRY["object_color"][0].labels) == 11
        assert PROMPT_REGISTRY["object_size"][0].labels == ["Yes", "No"]


class TestLoaders:
    """Test JSON-lines inputs."""

    def test_prompts_and_items(self, tmp_path):
        """Test well-formed prompt and item files."""
        (tmp_path / "prompts.jsonl").write_text(
            json.dumps({"task": "object_color", "template": "[ITEM] is", "labels": ["red", "blue"]}) + "\n\n"
        )
        (tmp_path / "items.jsonl").write_text(json.dumps({"ITEM": "sky", "gold": "blue", "rank": 3}) + "\n")

        assert load_prompts(tmp_path / "prompts.jsonl")[0].labels == ["red", "blue"]
        assert load_items(tmp_path / "items.jsonl") == [{"ITEM": "sky", "gold": "blue", "rank": "3"}]

    def test_bad_files(self, tmp_path):
        """Test that broken inputs become configuration errors."""
        (tmp_path / "bad.jsonl").write_text("{not json\n")
        (tmp_path / "invalid.jsonl").write_text(json.dumps({"task": "x", "template": "", "labels": ["a"]}) + "\n")
        (tmp_path / "piqa.jsonl").write_text(json.dumps({"goal": "g", "sol1": "a"}) + "\n")

        with pytest.raises(ConfigError):
            load_prompts(tmp_path / "bad.jsonl")
        with pytest.raises(ConfigError):
            load_prompts(tmp_path / "invalid.jsonl")
        with pytest.raises(ConfigError):
            load_piqa(tmp_path / "piqa.jsonl")
        with pytest.raises(ConfigError):
            load_items(tmp_path / "missing.jsonl")


class TestRankLabels:
    """Test label ranking."""

    def test_empty_label_set(self, tiny_model, plain, words):
        """Test that ranking nothing is an error."""
        with pytest.raises(EmptyLabelSet):
            rank_labels(tiny_model, plain, words, "the sky is", [])

    def test_blank_label(self, tiny_model, plain, words):
        """Test that a label without tokens is an evaluation error."""
        with pytest.raises(EmptyLabel):
            rank_labels(tiny_model, plain, words, "the sky is", ["red", " "])

    def test_ties_by_label(self, tiny_model, plain, words):
        """Test that labels with identical tokens tie and sort by name."""
        ranking = rank_labels(tiny_model, plain, words, "the sky is", ["zzz", "yyy"])

        assert [label for label, _ in ranking] == ["yyy", "zzz"]
        assert ranking[0][1] == ranking[1][1]

    def test_prefers_likely_label(self, likes_blue, plain, words):
        """Test that the more probable continuation ranks first."""
        ranking = rank_labels(likes_blue, plain, words, "the color of grass is", ["red", "blue"])

        assert ranking[0][0] == "blue"
        assert ranking[0][1] > ranking[1][1]


class TestObjectTask:
    """Test zero-shot object-property evaluation."""

    def test_accuracy_is_mean_of_prompts(self, likes_blue, plain, words):
        """Test per-prompt accuracies and their average."""
        prompts = [PromptSpecFactory(), PromptSpecFactory(template="[ITEM] is")]
        items = [{"ITEM": "sky", "gold": "blue"}, {"ITEM": "grass", "gold": "red"}]

        report = eval_object_task(likes_blue, plain, words, prompts, items, mode="disabled")

        assert report.per_prompt == {"0:The color of [DESCRIPTOR] [ITEM] is": 0.5, "1:[ITEM] is": 0.5}
        assert report.accuracy == 0.5
        assert [p.predictions for p in report.predictions] == [["blue", "blue"], ["blue", "blue"]]
        assert report.predictions[0].correct == [True, True]

    def test_gold_outside_labels(self, tiny_model, plain, words):
        """Test that every gold label must be rankable."""
        with pytest.raises(GoldLabelMissing):
            eval_object_task(tiny_model, plain, words, [PromptSpecFactory()], [{"ITEM": "sky", "gold": "green"}])

    def test_needs_prompts_and_items(self, tiny_model, plain, words):
        """Test that an empty evaluation is rejected."""
        with pytest.raises(EmptyTask) as exc:
            eval_object_task(tiny_model, plain, words, [], [{"ITEM": "sky", "gold": "red"}])
        assert exc.value.exit_code == 8


class TestPiqa:
    """Test two-choice solution scoring."""

    def test_tie_picks_first(self, uniform, plain, words):
        """Test that equal cross-entropies choose the first solution."""
        choice, scores = score_solutions_piqa(uniform, plain, words, "how to open a jar", ["twist the lid", "open a lid"])

        assert choice == 0
        assert scores[0] == pytest.approx(scores[1])

    def test_order_swap_mirrors_scores(self, tiny_model, plain, words):
        """Test that swapping the solutions swaps their scores."""
        goal, a, b = "how to open a jar", "twist the lid", "open the jar"

        _, forward_scores = score_solutions_piqa(tiny_model, plain, words, goal, [a, b])
        _, swapped = score_solutions_piqa(tiny_model, plain, words, goal, [b, a])

        assert forward_scores == swapped[::-1]

    def test_empty_solution(self, tiny_model, plain, words):
        """Test that blank solutions are rejected."""
        with pytest.raises(EmptySolution):
            score_solutions_piqa(tiny_model, plain, words, "how to open a jar", ["twist", "  "])

    def test_eval_needs_items(self, tiny_model, plain, words):
        """Test that an empty item list is an evaluation error."""
        with pytest.raises(EmptyTask):
            eval_piqa(tiny_model, plain, words, [])

    def test_eval(self, uniform, plain, words):
        """Test accuracy over items."""
        items = [
            {"goal": "how to open a jar", "sol1": "twist the lid", "sol2": "open a lid", "label": 0},
            {"goal": "how to open a jar", "sol1": "twist the lid", "sol2": "open a lid", "label": 1},
        ]

        report = eval_piqa(uniform, plain, words, items, mode="disabled")

        assert report.accuracy == 0.5
        assert report.per_prompt == {"piqa": 0.5}


class TestPerplexity:
    """Test corpus perplexity."""

    def test_uniform_model(self, uniform, plain):
        """Test that a uniform model has perplexity equal to the vocabulary size."""
        corpus = CorpusStore(documents=(np.arange(40) % 32, np.arange(5)))

        result = perplexity(uniform, plain, corpus)

        assert result.perplexity == pytest.approx(32.0)
        assert result.n_tokens == 31 + 7 + 4
        assert result.last_word_acc is None

    def test_nothing_to_score(self, tiny_model, plain):
        """Test that single-token documents leave nothing to score."""
        with pytest.raises(EmptyCorpus):
            perplexity(tiny_model, plain, CorpusStore(documents=(np.array([1]), np.array([2]))))

    def test_with_retrieval(self, model, retrieval, corpus, tokenizer):
        """Test perplexity and final-word accuracy with retrieved image slots."""
        result = perplexity(model, retrieval, corpus, tokenizer)

        expected = sum(max(len(doc[s : s + 32]) - 1, 0) for doc in corpus.documents for s in range(0, len(doc), 32))
        assert result.n_tokens == expected
        assert np.isfinite(result.perplexity)
        assert 0.0 <= result.last_word_acc <= 1.0


class TestBench:
    """Test the retrieval overhead benchmark."""

    def test_ratio(self, tiny_model, plain, mocker):
        """Test the timing ratio with a mocked clock."""
        mocker.patch("app.evalkit.service.perf_counter", side_effect=[0.0, 1.0, 1.0, 3.0])

        report = bench_retrieval_overhead(tiny_model, plain, plain, [np.arange(10), np.arange(40) % 32, np.arange(1)])

        assert report.n_tokens == 10 + 32
        assert report.baseline_seconds == 1.0
        assert report.retrieval_seconds == 2.0
        assert report.ratio == 2.0
        assert report.baseline_tokens_per_sec == 42.0


class TestProbe:
    """Test the counterfactual key swap probe."""

    def test_metrics(self, model, retrieval, grounded, tokenizer, keys):
        """Test that probe metrics are well formed."""
        prompt = PromptSpec.model_validate(grounded.prompts[0])

        report = probe_counterfactual(model, retrieval, tokenizer, prompt, grounded.test_items, grounded.images, keys)

        assert 0.0 <= report.metrics["flip_rate"] <= 1.0
        assert -1.0 <= report.metrics["mean_shift"] <= 1.0
        assert len(report.predictions) == len(grounded.test_items)
        assert all(len(p.predictions) == 2 for p in report.predictions)

    def test_needs_images(self, model, grounded, tokenizer, keys):
        """Test that the probe refuses to run without retrieval."""
        prompt = PromptSpec.model_validate(grounded.prompts[0])

        with pytest.raises(ImagesRequired):
            probe_counterfactual(
                model, make_augmenter(None), tokenizer, prompt, grounded.test_items, grounded.images, keys
            )


class TestReports:
    """Test report files."""

    def test_write_report(self, tmp_path, likes_blue, plain, words):
        """Test the JSON summary and prediction CSV."""
        report = eval_object_task(
            likes_blue, plain, words, [PromptSpecFactory()], [{"ITEM": "sky", "gold": "blue"}], mode="retrieve"
        )

        written = write_report(report, tmp_path, "object-retrieve")

        assert [p.name for p in written] == ["object-retrieve.json", "object-retrieve.csv"]
        assert EvalReport.model_validate_json(written[0].read_text()).accuracy == 1.0
        assert written[1].read_text().splitlines() == [
            "ITEM,gold,0:The color of [DESCRIPTOR] [ITEM] is",
            "sky,blue,blue",
        ]

    def test_ablation_table(self):
        """Test one row per retrieval mode."""
        reports = [
            EvalReport(task="object_color", mode=mode, per_prompt={"0:t": acc}, accuracy=acc)
            for mode, acc in (("retrieve", 0.75), ("disabled", 0.5))
        ]

        assert ablation_csv(reports).splitlines() == [
            "mode,accuracy,0:t",
            "retrieve,0.750000,0.750000",
            "disabled,0.500000,0.500000",
        ]

    def test_accuracy_range(self):
        """Test that accuracies outside [0, 1] are rejected."""
        with pytest.raises(ValidationError):
            EvalReport(task="x", accuracy=1.5)
