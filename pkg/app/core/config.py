"""Application configuration."""

import hashlib
import json
from pathlib import Path
from typing import Any

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings.

    Every field can be set from the process environment or from a KEY=VALUE
    config file passed to the CLI with ``--config``.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_ignore_empty=True,
        case_sensitive=True,
        extra="ignore",
    )

    # Application
    APP_NAME: str = "Retrieval Fusion LM"
    APP_VERSION: str = "0.1.0"
    SEED: int = 0
    DTYPE: str = "float64"

    # Tokenizer and encoder
    TOKENIZER: str = "auto"
    ENCODER: str = "synthetic"
    ENCODER_DIM: int = 64
    ENCODER_SEED: int = 0
    ENCODER_MAX_TOKENS: int = 75
    CHUNK_CAP: int = 75
    IMAGE_EMBEDDINGS_PATH: str | None = None
    TEXT_EMBEDDINGS_PATH: str | None = None

    # Image index
    INDEX_CENTROIDS: int = 256
    INDEX_SUBQUANTIZERS: int = 8
    INDEX_KMEANS_ITERS: int = 20
    INDEX_TRAIN_SAMPLE: int = 10000
    INDEX_EXACT: bool = False

    # Retrieval
    RETRIEVAL_MODE: str = "retrieve"
    RETRIEVAL_K: int = 4
    RETRIEVAL_NPROBE: int = 32
    RETRIEVAL_STRIDE: int = 1

    # Model
    N_LAYERS: int = 2
    N_HEADS: int = 2
    D_MODEL: int = 64
    MAX_SEQ: int = 64
    FUSION_LAYER: int | None = None
    PROJ_MODE: str = "shared_weights_image_bias"
    LN_IMG_EPS: float = 1e-5
    DROPOUT: float = 0.1
    INIT_STD: float = 0.02

    # Training
    LR: float = 3e-3
    BETA1: float = 0.9
    BETA2: float = 0.98
    WARMUP_STEPS: int = 100
    TOTAL_STEPS: int = 2000
    BATCH_SIZE: int = 16
    SEQ_LEN: int = 32
    GRAD_CLIP: float = 1.0
    CHECKPOINT_EVERY: int = 0
    PREFETCH: int = 2

    # Grounded corpus generator
    CORPUS_OBJECTS: int = 100
    CORPUS_ATTRIBUTES: int = 8
    CORPUS_SENTENCES: int = 10000
    CORPUS_SPLIT: float = 0.5
    CORPUS_KEYS_PER_PAIR: int = 4

    # Evaluation
    EVAL_TASK: str = "object"
    BENCH_SAMPLE: int = 64

    # Paths
    CORPUS_DIR: str = "./data/corpus"
    INDEX_PATH: str = "./data/index.valmivf"
    KEYS_PATH: str = "./data/keys.valmemb"
    CACHE_PATH: str = "./data/train.valmrc"
    CHECKPOINT_PATH: str = "./data/model.valmckpt"
    CHECKPOINT_DIR: str = "./data/checkpoints"
    LOSS_CSV_PATH: str = "./data/loss.csv"
    PROMPTS_PATH: str | None = None
    ITEMS_PATH: str | None = None
    EVAL_CORPUS_PATH: str | None = None
    REPORT_DIR: str = "./reports"

    # Logging
    LOG_LEVEL: str = "INFO"

    @field_validator("RETRIEVAL_MODE", "PROJ_MODE", "TOKENIZER", "ENCODER", "EVAL_TASK", mode="before")
    @classmethod
    def normalize_choice(cls, v: Any) -> Any:
        """Accept choices in any case and with dashes."""
        if isinstance(v, str):
            return v.strip().lower().replace("-", "_")
        return v

    @property
    def corpus_dir(self) -> Path:
        """Corpus directory as a path."""
        return Path(self.CORPUS_DIR)

    @property
    def prompts_path(self) -> Path:
        """Prompts file, defaulting to the one shipped with the corpus."""
        return Path(self.PROMPTS_PATH) if self.PROMPTS_PATH else self.corpus_dir / "prompts.jsonl"

    @property
    def items_path(self) -> Path:
        """Items file, defaulting to the corpus' held-out items."""
        return Path(self.ITEMS_PATH) if self.ITEMS_PATH else self.corpus_dir / "items.jsonl"

    def digest(self) -> str:
        """SHA-256 of the canonical JSON dump, echoed into reports."""
        payload = json.dumps(self.model_dump(), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def load_settings(config_file: str | Path | None = None, **overrides: Any) -> Settings:
    """
    Build settings from defaults, an optional KEY=VALUE file and flag overrides.

    Args:
        config_file: Optional config file in .env syntax
        **overrides: Values given on the command line; ``None`` means "not given"

    Returns:
        Effective settings
    """
    base = Settings(_env_file=config_file) if config_file else Settings()
    given = {key: value for key, value in overrides.items() if value is not None}
    if not given:
        return base
    # Re-validate so that flag values go through the same validators as file values.
    return Settings.model_validate({**base.model_dump(), **given})


settings = Settings()
