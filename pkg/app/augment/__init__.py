"""Retrieval orchestration, caching and the grounded corpus generator."""

from app.augment.cache import CachedImageSource, RetrievalCache, build_cache, load_cache, make_binding
from app.augment.corpus import generate_grounded_corpus, write_grounded_corpus
from app.augment.schemas import AugmentationPlan, CacheBinding, GroundedCorpus, GroundedCorpusSpec, RetrievalMode
from app.augment.service import ImageSource, KnowledgeBase, Retriever, augment_positions, counterfactual_swap

__all__ = [
    "AugmentationPlan",
    "CacheBinding",
    "CachedImageSource",
    "GroundedCorpus",
    "GroundedCorpusSpec",
    "ImageSource",
    "KnowledgeBase",
    "RetrievalCache",
    "RetrievalMode",
    "Retriever",
    "augment_positions",
    "build_cache",
    "counterfactual_swap",
    "generate_grounded_corpus",
    "load_cache",
    "make_binding",
    "write_grounded_corpus",
]
