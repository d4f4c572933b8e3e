"""Pluggable tokenizers."""

import json
from pathlib import Path
from typing import Protocol

import numpy as np

from app.encoder import constants
from app.encoder.exceptions import InvalidEncoderSetup

UNKNOWN_TOKEN = "<unk>"


class Tokenizer(Protocol):
    """Text to token ids and back."""

    id: str
    vocab_size: int

    def encode(self, text: str) -> np.ndarray: ...

    def decode(self, tokens: np.ndarray) -> str: ...

    def stop_set(self) -> frozenset[int]: ...

    def join(self, prefix: str, continuation: str) -> str: ...


class ByteTokenizer:
    """UTF-8 bytes as tokens; the default."""

    id = "byte"
    vocab_size = 256

    def encode(self, text: str) -> np.ndarray:
        return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.int64)

    def decode(self, tokens: np.ndarray) -> str:
        return bytes(int(t) for t in tokens).decode("utf-8", errors="replace")

    def stop_set(self) -> frozenset[int]:
        return frozenset(ord(ch) for ch in constants.STOP_CHARACTERS)

    def join(self, prefix: str, continuation: str) -> str:
        return f"{prefix} {continuation}"


class WordTokenizer:
    """Whitespace-separated words over a closed vocabulary."""

    def __init__(self, vocab: list[str]):
        if UNKNOWN_TOKEN not in vocab:
            vocab = [UNKNOWN_TOKEN, *vocab]
        if len(set(vocab)) != len(vocab):
            raise InvalidEncoderSetup("vocabulary entries must be distinct")
        self.vocab = list(vocab)
        self.index = {word: i for i, word in enumerate(self.vocab)}
        self.vocab_size = len(self.vocab)
        self.id = f"word-{self.vocab_size}"

    @classmethod
    def load(cls, path: str | Path) -> "WordTokenizer":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def dumps(self) -> str:
        return json.dumps(self.vocab, indent=0)

    def encode(self, text: str) -> np.ndarray:
        unk = self.index[UNKNOWN_TOKEN]
        return np.array([self.index.get(word, unk) for word in text.split()], dtype=np.int64)

    def decode(self, tokens: np.ndarray) -> str:
        return " ".join(self.vocab[int(t)] for t in tokens)

    def token_id(self, word: str) -> int:
        return self.index[word]

    def stop_set(self) -> frozenset[int]:
        return frozenset(self.index[ch] for ch in constants.STOP_CHARACTERS if ch in self.index)

    def join(self, prefix: str, continuation: str) -> str:
        return f"{prefix} {continuation}"


def load_tokenizer(kind: str, corpus_dir: str | Path | None = None) -> Tokenizer:
    """
    Resolve the tokenizer named in settings.

    ``auto`` picks the corpus vocabulary when one exists next to the corpus,
    otherwise bytes.
    """
    vocab_path = Path(corpus_dir) / "vocab.json" if corpus_dir else None
    if kind == "byte":
        return ByteTokenizer()
    if kind == "word":
        if vocab_path is None or not vocab_path.exists():
            raise InvalidEncoderSetup(f"word tokenizer needs {vocab_path}")
        return WordTokenizer.load(vocab_path)
    if kind == "auto" and vocab_path is not None and vocab_path.exists():
        return WordTokenizer.load(vocab_path)
    if kind == "auto":
        return ByteTokenizer()
    raise InvalidEncoderSetup(f"unknown tokenizer {kind!r}")
