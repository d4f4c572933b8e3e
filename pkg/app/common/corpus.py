"""Tokenized corpus storage."""

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from app.encoder.tokenizer import Tokenizer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CorpusStore:
    """Documents as int64 token arrays, addressed by document index."""

    documents: tuple[np.ndarray, ...]
    texts: tuple[str, ...] = field(default=(), compare=False)

    @classmethod
    def from_text(cls, text: str, tokenizer: "Tokenizer") -> "CorpusStore":
        """One document per blank-line separated passage."""
        passages = [block.strip() for block in text.split("\n\n")]
        passages = [block for block in passages if block]
        documents = tuple(tokenizer.encode(block) for block in passages)
        logger.debug(f"Tokenized {len(documents)} passages, {sum(map(len, documents))} tokens")
        return cls(documents=documents, texts=tuple(passages))

    @classmethod
    def from_file(cls, path: str | Path, tokenizer: "Tokenizer") -> "CorpusStore":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), tokenizer)

    @property
    def n_tokens(self) -> int:
        return sum(len(doc) for doc in self.documents)

    def __len__(self) -> int:
        return len(self.documents)

    def digest(self) -> bytes:
        """SHA-256 over document lengths and token ids."""
        hasher = hashlib.sha256()
        for doc in self.documents:
            hasher.update(len(doc).to_bytes(8, "little"))
            hasher.update(np.ascontiguousarray(doc, dtype="<i8").tobytes())
        return hasher.digest()
