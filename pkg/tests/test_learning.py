"""Slow checks that training learns, and learns to use image slots."""

import math
from pathlib import Path

import numpy as np
import pytest
from typer.testing import CliRunner

from app.augment import KnowledgeBase, Retriever, generate_grounded_corpus
from app.common import CorpusStore
from app.encoder import EmbeddingStore, SyntheticEncoder, WordTokenizer, encode_image_key
from app.evalkit import EvalReport, make_augmenter, perplexity
from app.fusion_lm import init_model
from app.trainer import train
from app.vindex import add_keys, train_index
from cli import app
from tests.factories import AugmentationPlanFactory, GroundedCorpusSpecFactory, ModelConfigFactory, TrainConfigFactory

EXAMPLE_CONFIG = Path(__file__).resolve().parents[1] / "config.example.env"
N_ATTRIBUTES = 8

runner = CliRunner()


def _report(path: Path) -> EvalReport:
    return EvalReport.model_validate_json(path.read_text())


@pytest.mark.slow
class TestLearning:
    """Test optimization end to end."""

    def test_overfits_one_document(self):
        """Test that a repeated sequence is memorized."""
        corpus = CorpusStore(documents=(np.tile(np.arange(1, 9), 8),))
        model = init_model(ModelConfigFactory(), seed=0)

        _, curve = train(model, corpus, None, TrainConfigFactory(lr=1e-2, warmup_steps=10, total_steps=200))

        assert np.mean(curve.nll[-10:]) < 0.25 * np.mean(curve.nll[:10])

    def test_model_relies_on_retrieved_keys(self, tokenizer, corpus, encoder, kb):
        """Test that a model trained with retrieval scores its corpus better with its image slots than without."""
        retriever = Retriever(AugmentationPlanFactory(), encoder, kb, tokenizer.stop_set(), model_dim=16)
        model = init_model(ModelConfigFactory(vocab_size=tokenizer.vocab_size), seed=0)
        cfg = TrainConfigFactory(lr=1e-2, warmup_steps=20, total_steps=300, batch_size=4, seq_len=16)

        trained, _ = train(model, corpus, retriever, cfg)

        with_images = perplexity(trained, make_augmenter(retriever), corpus)
        without = perplexity(trained, make_augmenter(None), corpus)
        assert with_images.perplexity < without.perplexity

    def test_memorizes_fifty_sentences(self):
        """Test that a 2-layer, 64-wide model with two image slots memorizes a 50-sentence corpus in 500 steps."""
        grounded = generate_grounded_corpus(GroundedCorpusSpecFactory(n_sentences=50, sentences_per_passage=50))
        tokenizer = WordTokenizer(grounded.vocab)
        (doc,) = CorpusStore.from_text(grounded.train_text, tokenizer).documents
        corpus = CorpusStore(documents=(doc[: len(doc) // 32 * 32],))
        encoder = SyntheticEncoder(64, 0, grounded.attribute_table(tokenizer.token_id), n_attributes=2)
        keys = EmbeddingStore(
            ids=np.array([record.image_id for record in grounded.images], dtype=np.int64),
            vectors=np.stack([encode_image_key(encoder, record) for record in grounded.images]),
        )
        index = train_index(keys.vectors, 4, 2, 10, seed=0, exact=True)
        add_keys(index, keys.entries())
        retriever = Retriever(
            AugmentationPlanFactory(k=2), encoder, KnowledgeBase(keys=keys, index=index), tokenizer.stop_set(), 64
        )
        model = init_model(ModelConfigFactory(vocab_size=tokenizer.vocab_size, d_model=64, max_seq=32), seed=0)
        cfg = TrainConfigFactory(lr=1e-2, warmup_steps=50, total_steps=500, batch_size=16, seq_len=32)

        trained, curve = train(model, corpus, retriever, cfg)

        assert curve.nll[-1] < 0.1
        assert curve.nll[-1] < curve.nll[0]
        assert perplexity(trained, make_augmenter(retriever), corpus).perplexity < 1.2


@pytest.mark.slow
@pytest.mark.integration
class TestGroundedPipeline:
    """Test the documented configuration from corpus generation to the retrieval ablation."""

    @pytest.fixture(scope="class")
    def reports(self, tmp_path_factory):
        """Run every pipeline command once with the example settings, writing into a scratch directory."""
        root = tmp_path_factory.mktemp("grounded")
        env = {
            "LOG_LEVEL": "WARNING",
            "CORPUS_DIR": str(root / "corpus"),
            "INDEX_PATH": str(root / "index.valmivf"),
            "KEYS_PATH": str(root / "keys.valmemb"),
            "CACHE_PATH": str(root / "train.valmrc"),
            "CHECKPOINT_PATH": str(root / "model.valmckpt"),
            "CHECKPOINT_DIR": str(root / "checkpoints"),
            "LOSS_CSV_PATH": str(root / "loss.csv"),
            "REPORT_DIR": str(root / "reports"),
        }
        for command in (
            ["gen-corpus"],
            ["build-index"],
            ["build-cache"],
            ["train"],
            ["ablate"],
            ["eval", "--task", "probe"],
        ):
            result = runner.invoke(app, [*command, "--config", str(EXAMPLE_CONFIG)], env=env)
            assert result.exit_code == 0, result.output
        n_items = sum(1 for line in (root / "corpus" / "items.jsonl").read_text().splitlines() if line.strip())
        return root / "reports", n_items

    def test_retrieval_ablation(self, reports):
        """Test that retrieval beats disabled slots by 30 points, disabled sits at chance and random trails retrieval."""
        directory, n_items = reports
        accuracy = {
            mode: _report(directory / f"object-{mode}.json").accuracy for mode in ("retrieve", "disabled", "random")
        }
        chance = 1 / N_ATTRIBUTES

        assert accuracy["retrieve"] - accuracy["disabled"] >= 0.30
        assert abs(accuracy["disabled"] - chance) <= 3 * math.sqrt(chance * (1 - chance) / n_items)
        assert accuracy["random"] < accuracy["retrieve"]

    def test_swapped_keys_flip_predictions(self, reports):
        """Test that swapping the retrieved keys for another attribute's keys flips at least 90% of predictions."""
        directory, _ = reports
        report = _report(directory / "probe-retrieve.json")

        assert report.mode == "retrieve"
        assert report.metrics["flip_rate"] >= 0.9
