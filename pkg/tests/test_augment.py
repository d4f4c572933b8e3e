"""Tests for retrieval, the retrieval cache and the grounded corpus."""

import json

import numpy as np
import pytest
from pydantic import ValidationError

from app.augment import (
    CachedImageSource,
    KnowledgeBase,
    Retriever,
    augment_positions,
    build_cache,
    counterfactual_swap,
    generate_grounded_corpus,
    load_cache,
    make_binding,
    write_grounded_corpus,
)
from app.augment.corpus import load_attribute_table, load_image_records
from app.augment.exceptions import (
    BindingMismatch,
    CorruptCache,
    EncoderMismatch,
    IndexUnavailable,
    PositionOutOfRange,
    SpecInfeasible,
    TooManyReplacements,
)
from app.encoder import SyntheticEncoder, save_embeddings
from app.vindex import save_index
from tests.factories import AugmentationPlanFactory, GroundedCorpusSpecFactory


def _object_position(seq, object_tokens) -> int:
    """First position whose previous token names an object."""
    return next(i for i in range(1, len(seq)) if int(seq[i - 1]) in object_tokens)


def _object_pairs(grounded, tokenizer, corpus, plan, encoder, kb) -> np.ndarray:
    """(mentioned object, object of the retrieved key) for every slot filled right after an object mention."""
    object_tokens = {tokenizer.token_id(obj) for obj in grounded.objects}
    object_of = {record.image_id: record.object_token for record in grounded.images}
    pairs = []
    for seq in corpus.documents:
        images = augment_positions(seq, plan, encoder, kb, tokenizer.stop_set())
        for i in range(1, len(seq)):
            if int(seq[i - 1]) in object_tokens:
                pairs.extend((int(seq[i - 1]), object_of[int(key)]) for key in images.ids[i, : images.counts[i]])
    return np.array(pairs)


def _permutation_p_value(pairs: np.ndarray, rng: np.random.Generator, rounds: int = 999) -> float:
    """Two-sided p-value of the object match rate against shuffled pairings."""
    observed = np.mean(pairs[:, 0] == pairs[:, 1])
    shuffled = np.array([np.mean(pairs[:, 0] == rng.permutation(pairs[:, 1])) for _ in range(rounds)])
    centre = shuffled.mean()
    return (1 + np.sum(np.abs(shuffled - centre) >= abs(observed - centre))) / (rounds + 1)


class TestPlan:
    """Test plan validation."""

    def test_disabled_has_no_slots(self):
        """Test that disabled mode forces k to zero."""
        plan = AugmentationPlanFactory(mode="disabled", k=4)

        assert plan.k == 0
        assert not plan.active

    def test_random_needs_seed(self):
        """Test that random mode needs a seed."""
        with pytest.raises(ValidationError):
            AugmentationPlanFactory(mode="random", seed=None)

    def test_bad_mode(self):
        """Test that unknown modes are rejected."""
        with pytest.raises(ValidationError):
            AugmentationPlanFactory(mode="sometimes")


class TestRetrieval:
    """Test per-position retrieval."""

    def test_disabled(self, corpus, encoder, kb):
        """Test that disabled retrieval yields no slots at all."""
        images = augment_positions(corpus.documents[0], AugmentationPlanFactory(mode="disabled"), encoder, kb)

        assert images.k == 0
        assert images.n_positions == len(corpus.documents[0])
        assert not images.counts.any()

    def test_retrieves_matching_pair(self, grounded, tokenizer, corpus, encoder, kb):
        """Test that right after an object mention the keys of that object and its attribute come back."""
        object_tokens = {tokenizer.token_id(obj): obj for obj in grounded.objects}
        seq = corpus.documents[0]
        i = _object_position(seq, object_tokens)
        obj = object_tokens[int(seq[i - 1])]
        expected = {
            r.image_id
            for r in grounded.images
            if r.object_token == int(seq[i - 1]) and r.attribute_id == grounded.attributes[obj]
        }

        images = augment_positions(seq, AugmentationPlanFactory(), encoder, kb, tokenizer.stop_set())

        assert images.counts[i] == 2
        assert set(images.ids[i].tolist()) == expected
        assert images.scores[i, 0] >= images.scores[i, 1]
        assert np.array_equal(images.vectors[i], kb.keys.take(images.ids[i]))

    def test_positions_without_context(self, tokenizer, corpus, encoder, kb):
        """Test that position 0 and positions right after a stop token stay empty."""
        seq = corpus.documents[0]
        stop = tokenizer.token_id(".")

        images = augment_positions(seq, AugmentationPlanFactory(), encoder, kb, tokenizer.stop_set())

        assert images.counts[0] == 0
        after_stop = [i for i in range(1, len(seq)) if seq[i - 1] == stop]
        assert after_stop
        assert not images.counts[after_stop].any()
        assert np.all(images.ids[images.counts == 0] == -1)

    def test_stride(self, tokenizer, corpus, encoder, kb):
        """Test that only positions on the stride grid are queried."""
        seq = corpus.documents[0]

        images = augment_positions(seq, AugmentationPlanFactory(stride=3), encoder, kb, tokenizer.stop_set())

        off_grid = [i for i in range(1, len(seq)) if (i - 1) % 3]
        assert not images.counts[off_grid].any()
        assert images.counts.any()

    def test_random_mode(self, tokenizer, corpus, encoder, kb):
        """Test seeded random draws from the key store."""
        seq = corpus.documents[0]
        plan = AugmentationPlanFactory(mode="random", seed=4)

        first = augment_positions(seq, plan, encoder, kb, tokenizer.stop_set())
        second = augment_positions(seq, plan, encoder, kb, tokenizer.stop_set())
        other = augment_positions(seq, AugmentationPlanFactory(mode="random", seed=5), encoder, kb, tokenizer.stop_set())

        assert first.same_as(second)
        assert not np.array_equal(first.ids, other.ids)
        assert set(first.ids[first.ids >= 0].tolist()) <= set(kb.keys.ids.tolist())
        assert not first.scores.any()
        assert first.counts[0] == 0

    def test_random_mode_ignores_context(self, grounded, tokenizer, corpus, encoder, kb, rng):
        """Test that random draws are independent of the mentioned object while retrieval is not."""
        random_plan = AugmentationPlanFactory(mode="random", seed=4)
        random_pairs = _object_pairs(grounded, tokenizer, corpus, random_plan, encoder, kb)
        retrieved_pairs = _object_pairs(grounded, tokenizer, corpus, AugmentationPlanFactory(), encoder, kb)

        assert len(random_pairs) >= 100
        assert _permutation_p_value(random_pairs, rng) >= 0.01
        assert _permutation_p_value(retrieved_pairs, rng) < 0.01

    def test_stop_token_resets_context(self, grounded, tokenizer, encoder, kb):
        """Test that the position right after a stop token has no query while the stop position keeps its chunk."""
        seq = tokenizer.encode(f"the color of {grounded.objects[0]} is red . the")

        images = augment_positions(seq, AugmentationPlanFactory(), encoder, kb, tokenizer.stop_set())

        assert images.counts.tolist() == [0, 2, 2, 2, 2, 2, 2, 0]

    def test_needs_index(self, encoder, keys):
        """Test that retrieve mode without an index fails."""
        with pytest.raises(IndexUnavailable):
            Retriever(AugmentationPlanFactory(), encoder, KnowledgeBase(keys=keys))
        with pytest.raises(IndexUnavailable):
            Retriever(AugmentationPlanFactory(), encoder, None)

    def test_dimension_checks(self, grounded, tokenizer, kb, encoder):
        """Test encoder, key and model width agreement."""
        wide = SyntheticEncoder(32, 0, grounded.attribute_table(tokenizer.token_id), n_attributes=2)

        with pytest.raises(EncoderMismatch):
            Retriever(AugmentationPlanFactory(), wide, kb)
        with pytest.raises(EncoderMismatch):
            Retriever(AugmentationPlanFactory(), encoder, kb, model_dim=32)

    def test_document_memo(self, tokenizer, corpus, encoder, kb):
        """Test that documents are retrieved once per retriever."""
        retriever = Retriever(AugmentationPlanFactory(), encoder, kb, tokenizer.stop_set())

        first = retriever.images_for_document(1, corpus.documents[1])

        assert retriever.images_for_document(1, corpus.documents[1]) is first

    def test_load_knowledge_base(self, tmp_path, keys, kb):
        """Test loading keys and index from disk, and a broken index."""
        save_embeddings(tmp_path / "keys.valmemb", keys.ids, keys.vectors)
        save_index(kb.index, tmp_path / "index.valmivf")

        loaded = KnowledgeBase.load(tmp_path / "keys.valmemb", tmp_path / "index.valmivf")

        assert loaded.checksum == kb.checksum
        (tmp_path / "index.valmivf").write_bytes(b"nope")
        with pytest.raises(IndexUnavailable):
            KnowledgeBase.load(tmp_path / "keys.valmemb", tmp_path / "index.valmivf")


class TestCounterfactualSwap:
    """Test replacing the slots of one position."""

    def test_swap(self, tokenizer, corpus, encoder, kb, rng):
        """Test that only the chosen position changes."""
        seq = corpus.documents[0]
        images = augment_positions(seq, AugmentationPlanFactory(), encoder, kb, tokenizer.stop_set())
        replacement = rng.standard_normal((1, 16))

        swapped = counterfactual_swap(images, 3, replacement, ids=np.array([7]))

        assert swapped.counts[3] == 1
        assert swapped.ids[3].tolist() == [7, -1]
        assert np.array_equal(swapped.vectors[3, 0], replacement[0])
        assert not swapped.vectors[3, 1].any()
        keep = np.arange(len(seq)) != 3
        assert np.array_equal(swapped.ids[keep], images.ids[keep])
        assert not images.same_as(swapped)

    def test_errors(self, tokenizer, corpus, encoder, kb):
        """Test out-of-range positions and too many keys."""
        seq = corpus.documents[0]
        images = augment_positions(seq, AugmentationPlanFactory(), encoder, kb, tokenizer.stop_set())

        with pytest.raises(PositionOutOfRange):
            counterfactual_swap(images, len(seq), np.ones((1, 16)))
        with pytest.raises(TooManyReplacements) as exc:
            counterfactual_swap(images, 1, np.ones((3, 16)))
        assert exc.value.exit_code == 7


class TestRetrievalCache:
    """Test the precomputed retrieval cache."""

    def test_matches_live_retrieval(self, tmp_path, tokenizer, corpus, encoder, kb):
        """Test that cached slots equal live retrieval for every document."""
        plan = AugmentationPlanFactory()
        path = tmp_path / "retrieval.valmrc"
        build_cache(corpus, plan, encoder, kb, path, tokenizer.stop_set())

        cache = load_cache(path, make_binding(corpus, plan, encoder, kb))
        source = CachedImageSource(cache, kb.keys)
        live = Retriever(plan, encoder, kb, tokenizer.stop_set())

        for doc_id, seq in enumerate(corpus.documents):
            assert source.images_for_document(doc_id, seq).same_as(live.augment(seq))
        i = int(np.flatnonzero(cache.documents[0][0])[0])
        assert [image_id for image_id, _ in cache.lookup(0, i)] == live.augment(corpus.documents[0]).ids[i].tolist()

    def test_rebuild_is_byte_identical(self, tmp_path, tokenizer, corpus, encoder, kb):
        """Test that the cache file is deterministic."""
        plan = AugmentationPlanFactory(mode="random", seed=2)
        build_cache(corpus, plan, encoder, kb, tmp_path / "a.valmrc", tokenizer.stop_set())
        build_cache(corpus, plan, encoder, kb, tmp_path / "b.valmrc", tokenizer.stop_set())

        assert (tmp_path / "a.valmrc").read_bytes() == (tmp_path / "b.valmrc").read_bytes()

    def test_stale_binding(self, tmp_path, corpus, encoder, kb):
        """Test that a cache built for other settings is refused."""
        path = tmp_path / "retrieval.valmrc"
        build_cache(corpus, AugmentationPlanFactory(), encoder, kb, path)

        with pytest.raises(BindingMismatch) as exc:
            load_cache(path, make_binding(corpus, AugmentationPlanFactory(k=1), encoder, kb))

        assert exc.value.fields == ["k"]

    def test_corrupt(self, tmp_path, corpus, encoder, kb):
        """Test that damaged cache files are detected."""
        path = tmp_path / "retrieval.valmrc"
        build_cache(corpus, AugmentationPlanFactory(), encoder, kb, path)
        data = bytearray(path.read_bytes())
        data[-1] ^= 0xFF
        path.write_bytes(bytes(data))

        with pytest.raises(CorruptCache):
            load_cache(path)

    def test_disabled_plan(self, corpus, encoder):
        """Test that a disabled plan caches empty rows."""
        cache = build_cache(corpus, AugmentationPlanFactory(mode="disabled"), encoder, None)

        assert cache.binding.k == 0
        assert all(not counts.any() for counts, _, _ in cache.documents)


class TestGroundedCorpus:
    """Test the synthetic grounded world."""

    def test_held_out_objects_absent(self, grounded):
        """Test that held-out object names never occur in the training text."""
        words = set(grounded.train_text.split())

        assert set(grounded.test_objects).isdisjoint(words)
        assert set(grounded.train_objects) <= words
        assert {item["ITEM"] for item in grounded.test_items} == set(grounded.test_objects)

    def test_balanced_attributes(self, grounded):
        """Test that attributes are dealt evenly within each split."""
        for group in (grounded.train_objects, grounded.test_objects):
            counts = np.bincount([grounded.attributes[obj] for obj in group], minlength=2)
            assert counts.max() - counts.min() <= 1

    def test_vocabulary_covers_text(self, grounded, tokenizer):
        """Test that the training text encodes without unknown words."""
        assert 0 not in tokenizer.encode(grounded.train_text).tolist()

    def test_deterministic(self, grounded):
        """Test that the same spec reproduces the same world."""
        again = generate_grounded_corpus(GroundedCorpusSpecFactory())

        assert again.train_text == grounded.train_text
        assert again.attributes == grounded.attributes

    @pytest.mark.parametrize("overrides", [{"n_objects": 3}, {"split": 0.9}, {"n_attributes": 1}, {"split": 1.0}])
    def test_infeasible(self, overrides):
        """Test specs that cannot produce a balanced world."""
        with pytest.raises(SpecInfeasible):
            generate_grounded_corpus(GroundedCorpusSpecFactory(**overrides))

    def test_write_and_reload(self, tmp_path, grounded, tokenizer):
        """Test the written artifacts."""
        written = write_grounded_corpus(grounded, tmp_path)

        assert {p.name for p in written} >= {"train.txt", "vocab.json", "attributes.json", "images.jsonl"}
        table, n_attributes = load_attribute_table(tmp_path, tokenizer.token_id)
        assert table == grounded.attribute_table(tokenizer.token_id)
        assert n_attributes == 2
        assert load_image_records(tmp_path) == grounded.images
        assert json.loads((tmp_path / "vocab.json").read_text()) == grounded.vocab
