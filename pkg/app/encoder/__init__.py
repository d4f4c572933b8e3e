"""Encoder domain module."""

from app.encoder.schemas import ContextChunk, ImageRecord
from app.encoder.service import (
    JointEncoder,
    PrecomputedEncoder,
    SyntheticEncoder,
    build_context_chunk,
    chunk_starts,
    encode_image_key,
    encode_text_query,
)
from app.encoder.storage import EmbeddingStore, load_embeddings, save_embeddings
from app.encoder.tokenizer import ByteTokenizer, Tokenizer, WordTokenizer, load_tokenizer

__all__ = [
    "ByteTokenizer",
    "ContextChunk",
    "EmbeddingStore",
    "ImageRecord",
    "JointEncoder",
    "PrecomputedEncoder",
    "SyntheticEncoder",
    "Tokenizer",
    "WordTokenizer",
    "build_context_chunk",
    "chunk_starts",
    "encode_image_key",
    "encode_text_query",
    "load_embeddings",
    "load_tokenizer",
    "save_embeddings",
]
