"""Tests for batching, the optimizer and the training loop."""

import logging
import math

import numpy as np
import pytest

from app.augment import Retriever
from app.common import CorpusStore
from app.encoder import encode_image_key, save_embeddings
from app.fusion_lm import loss_and_grads
from app.trainer import Adam, Prefetcher, block_refs, clip_gradients, learning_rate, make_batches, train
from app.trainer.exceptions import EmptyCorpus, NonFiniteLoss
from app.vindex import index_checksum
from tests.factories import AugmentationPlanFactory, TrainConfigFactory


@pytest.fixture
def docs() -> CorpusStore:
    return CorpusStore(documents=(np.arange(10), np.arange(3), np.arange(16)))


class TestSchedule:
    """Test the learning-rate schedule."""

    def test_warmup_then_decay(self):
        """Test the linear warmup and the inverse square-root decay."""
        cfg = TrainConfigFactory(lr=1e-2, warmup_steps=2, total_steps=8)

        assert learning_rate(1, cfg) == pytest.approx(5e-3)
        assert learning_rate(2, cfg) == pytest.approx(1e-2)
        assert learning_rate(8, cfg) == pytest.approx(5e-3)

    def test_no_warmup(self):
        """Test pure inverse square-root decay."""
        cfg = TrainConfigFactory(lr=1e-2, warmup_steps=0)

        assert learning_rate(1, cfg) == pytest.approx(1e-2)
        assert learning_rate(4, cfg) == pytest.approx(5e-3)

    def test_warmup_longer_than_run(self):
        """Test that warmup may not exceed the run."""
        with pytest.raises(ValueError):
            TrainConfigFactory(warmup_steps=5, total_steps=4)


class TestOptimizer:
    """Test clipping and Adam."""

    def test_clip(self):
        """Test that gradients are scaled to the maximum global norm."""
        grads = {"a": np.array([3.0]), "b": np.array([4.0])}

        norm = clip_gradients(grads, 1.0)

        assert norm == pytest.approx(5.0)
        assert grads["a"][0] == pytest.approx(0.6)
        assert grads["b"][0] == pytest.approx(0.8)

    def test_no_clip(self):
        """Test that small or unclipped gradients stay untouched."""
        grads = {"a": np.array([0.3, 0.4])}

        clip_gradients(grads, 1.0)
        clip_gradients(grads, None)

        assert grads["a"].tolist() == [0.3, 0.4]

    def test_first_adam_step_is_signed_lr(self):
        """Test that the bias-corrected first step moves every weight by about lr."""
        params = {"w": np.zeros(3)}
        adam = Adam(params, TrainConfigFactory())

        adam.step(params, {"w": np.array([2.0, -0.5, 1e-3])}, 0.1)

        assert np.allclose(params["w"], [-0.1, 0.1, -0.1], atol=1e-5)
        assert adam.t == 1


class TestBatching:
    """Test block extraction and batch order."""

    def test_block_refs_drop_partial_tails(self, docs, caplog):
        """Test that only complete blocks are used and the dropped tail tokens are logged."""
        with caplog.at_level(logging.WARNING, logger="app.trainer.service"):
            refs = block_refs(docs, 4)

        assert [(r.doc_id, r.start) for r in refs] == [(0, 0), (0, 4), (2, 0), (2, 4), (2, 8), (2, 12)]
        assert "Dropping 5 tail tokens that do not fill a 4-token block" in caplog.text

    def test_empty_corpus(self):
        """Test that a corpus without a complete block fails immediately."""
        with pytest.raises(EmptyCorpus):
            make_batches(CorpusStore(documents=(np.arange(3),)), 8, 2, 0)

    def test_epoch_visits_every_block(self, docs):
        """Test that one epoch covers every block exactly once."""
        batches = make_batches(docs, 4, 1, seed=0)

        first_epoch = [next(batches) for _ in range(6)]

        assert sorted((b.refs[0].doc_id, b.refs[0].start) for b in first_epoch) == [
            (0, 0),
            (0, 4),
            (2, 0),
            (2, 4),
            (2, 8),
            (2, 12),
        ]
        assert {b.epoch for b in first_epoch} == {0}
        assert next(batches).epoch == 1

    def test_seeded_order(self, docs):
        """Test that batches depend only on the seed."""

        def take(seed):
            stream = make_batches(docs, 4, 2, seed)
            return [next(stream).tokens for _ in range(5)]

        assert all(np.array_equal(a, b) for a, b in zip(take(3), take(3), strict=True))
        assert next(make_batches(docs, 4, 2, 0)).tokens.shape == (2, 4)


class TestPrefetcher:
    """Test the background batch worker."""

    def test_keeps_order(self):
        """Test that items arrive in source order and the stream ends."""
        prefetcher = Prefetcher(iter(range(20)), 3)

        assert list(prefetcher) == list(range(20))
        prefetcher.close()

    def test_forwards_errors(self):
        """Test that a failure in the worker surfaces on the consumer side."""

        def source():
            yield 1
            raise RuntimeError("boom")

        prefetcher = Prefetcher(source(), 2)

        assert next(prefetcher) == 1
        with pytest.raises(RuntimeError, match="boom"):
            next(prefetcher)
        prefetcher.close()


class TestTrain:
    """Test the training loop."""

    def test_zero_lr_leaves_model(self, model, corpus):
        """Test that a zero learning rate changes nothing."""
        trained, curve = train(model, corpus, None, TrainConfigFactory(lr=0.0, warmup_steps=0))

        assert trained.equals(model)
        assert len(curve.points) == 4

    def test_zero_steps(self, model, corpus):
        """Test that a run without steps returns the initial model."""
        trained, curve = train(model, corpus, None, TrainConfigFactory(total_steps=0, warmup_steps=0))

        assert trained.equals(model)
        assert curve.points == []

    def test_input_model_untouched(self, model, corpus):
        """Test that training works on a copy."""
        before = model.copy()

        trained, _ = train(model, corpus, None, TrainConfigFactory())

        assert model.equals(before)
        assert not trained.equals(model)

    def test_deterministic_with_prefetch(self, model, corpus):
        """Test that runs repeat exactly, with or without the prefetch worker."""
        a, curve_a = train(model, corpus, None, TrainConfigFactory(dropout=0.1))
        b, curve_b = train(model, corpus, None, TrainConfigFactory(dropout=0.1, prefetch=2))

        assert a.params.keys() == b.params.keys()
        assert all(np.array_equal(a[name], b[name]) for name in a.params)
        assert curve_a.nll == curve_b.nll

    def test_outputs(self, model, corpus, tmp_path):
        """Test the loss curve file and periodic checkpoints."""
        cfg = TrainConfigFactory(checkpoint_every=2)

        _, curve = train(model, corpus, None, cfg, checkpoint_dir=tmp_path, loss_csv=tmp_path / "loss.csv")

        lines = (tmp_path / "loss.csv").read_text().splitlines()
        assert lines[0] == "step,lr,nll"
        assert len(lines) == 5
        assert all(math.isfinite(v) for v in curve.nll)
        assert sorted(p.name for p in tmp_path.glob("*.valmckpt")) == ["step000002.valmckpt", "step000004.valmckpt"]

    def test_non_finite_loss(self, model, corpus, mocker):
        """Test that a NaN loss stops training."""
        _, grads = loss_and_grads(model, corpus.documents[0][:8])
        mocker.patch("app.trainer.service.loss_and_grads", return_value=(float("nan"), grads))

        with pytest.raises(NonFiniteLoss) as exc:
            train(model, corpus, None, TrainConfigFactory())

        assert exc.value.step == 1

    def test_with_retrieval(self, model, corpus, encoder, kb, tokenizer):
        """Test that training with live retrieval updates the image projections."""
        retriever = Retriever(AugmentationPlanFactory(), encoder, kb, tokenizer.stop_set(), model_dim=16)

        trained, curve = train(model, corpus, retriever, TrainConfigFactory())

        assert len(curve.points) == 4
        assert not np.array_equal(trained["fusion.bk_img"], model["fusion.bk_img"])

    def test_encoder_stays_frozen(self, model, corpus, grounded, encoder, kb, tokenizer, tmp_path):
        """Test that the serialized encoder outputs, key store and index are byte-identical after training."""
        ids = np.array([record.image_id for record in grounded.images], dtype=np.int64)

        def snapshot(name):
            path = tmp_path / f"{name}.valmemb"
            save_embeddings(path, ids, np.stack([encode_image_key(encoder, record) for record in grounded.images]))
            return encoder.id.encode() + path.read_bytes() + kb.keys.vectors.tobytes(), index_checksum(kb.index)

        before = snapshot("before")
        retriever = Retriever(AugmentationPlanFactory(), encoder, kb, tokenizer.stop_set(), model_dim=16)

        train(model, corpus, retriever, TrainConfigFactory(total_steps=8))

        assert snapshot("after") == before
