"""Pytest configuration and fixtures."""

import numpy as np
import pytest

from app.augment import GroundedCorpus, KnowledgeBase, generate_grounded_corpus
from app.common import CorpusStore
from app.encoder import EmbeddingStore, SyntheticEncoder, WordTokenizer, encode_image_key
from app.fusion_lm import ModelState, init_model
from app.vindex import add_keys, train_index
from tests.factories import GroundedCorpusSpecFactory, ModelConfigFactory

DIM = 16


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def grounded() -> GroundedCorpus:
    """Eight objects, two attributes, half of the objects held out."""
    return generate_grounded_corpus(GroundedCorpusSpecFactory())


@pytest.fixture(scope="session")
def tokenizer(grounded) -> WordTokenizer:
    return WordTokenizer(grounded.vocab)


@pytest.fixture(scope="session")
def corpus(grounded, tokenizer) -> CorpusStore:
    return CorpusStore.from_text(grounded.train_text, tokenizer)


@pytest.fixture(scope="session")
def encoder(grounded, tokenizer) -> SyntheticEncoder:
    return SyntheticEncoder(DIM, 0, grounded.attribute_table(tokenizer.token_id), n_attributes=2)


@pytest.fixture(scope="session")
def keys(grounded, encoder) -> EmbeddingStore:
    ids = np.array([record.image_id for record in grounded.images], dtype=np.int64)
    vectors = np.stack([encode_image_key(encoder, record) for record in grounded.images])
    return EmbeddingStore(ids=ids, vectors=vectors)


@pytest.fixture(scope="session")
def kb(keys) -> KnowledgeBase:
    """Exact-code index with four lists over every image key."""
    index = train_index(keys.vectors, 4, 2, 10, seed=0, exact=True)
    add_keys(index, keys.entries())
    return KnowledgeBase(keys=keys, index=index)


@pytest.fixture
def model(tokenizer) -> ModelState:
    return init_model(ModelConfigFactory(vocab_size=tokenizer.vocab_size), seed=0)


@pytest.fixture
def tiny_model() -> ModelState:
    """Byte-free tiny model over a 32-token vocabulary."""
    return init_model(ModelConfigFactory(), seed=0, std=0.1)


@pytest.fixture(scope="session")
def palette():
    """
    Keys clustered around 64 unit centers, with per-subspace offsets drawn
    from a four-entry palette so every subspace has at most 256 distinct values.

    Returns:
        Tuple of (ids, vectors, queries)
    """
    rng = np.random.default_rng(7)
    dim, n_sub, n_keys = 64, 8, 10_000
    centers = rng.standard_normal((64, dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    offsets = rng.normal(0.0, 0.05, size=(n_sub, 4, dim // n_sub))
    cluster = np.arange(n_keys) % 64
    choice = rng.integers(0, 4, size=(n_keys, n_sub))
    vectors = centers[cluster] + np.concatenate([offsets[m, choice[:, m]] for m in range(n_sub)], axis=1)
    queries = centers[rng.integers(0, 64, size=100)] + rng.normal(0.0, 0.05, size=(100, dim))
    return np.arange(n_keys, dtype=np.int64) + 1000, vectors, queries


@pytest.fixture(scope="session")
def dense():
    """
    Gaussian keys in 64 dimensions; product quantization is lossy on them.

    Returns:
        Tuple of (ids, vectors, queries)
    """
    rng = np.random.default_rng(8)
    vectors = rng.standard_normal((10_000, 64))
    queries = rng.standard_normal((100, 64))
    return np.arange(10_000, dtype=np.int64) + 5000, vectors, queries
