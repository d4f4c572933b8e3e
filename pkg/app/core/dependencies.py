"""Domain objects built from settings."""

import logging
from pathlib import Path

from pydantic import ValidationError

from app.augment import AugmentationPlan, GroundedCorpusSpec, KnowledgeBase, Retriever
from app.augment.corpus import load_attribute_table
from app.core.config import Settings
from app.core.exceptions import ConfigError
from app.encoder import JointEncoder, PrecomputedEncoder, SyntheticEncoder, Tokenizer, load_embeddings, load_tokenizer
from app.encoder.exceptions import InvalidEncoderSetup
from app.fusion_lm import ModelConfig
from app.trainer import TrainConfig

logger = logging.getLogger(__name__)


def require_file(path: str | Path | None, what: str) -> Path:
    """Fail before any work starts when an input file is missing."""
    if path is None:
        raise ConfigError(f"No {what} path configured")
    if not Path(path).is_file():
        raise ConfigError(f"{what.capitalize()} not found: {path}")
    return Path(path)


def _validated(factory, **values):
    try:
        return factory(**values)
    except ValidationError as exc:
        raise ConfigError(f"Invalid {factory.__name__}: {exc.errors()[0]['msg']}") from exc


def get_tokenizer(settings: Settings) -> Tokenizer:
    try:
        return load_tokenizer(settings.TOKENIZER, settings.corpus_dir)
    except InvalidEncoderSetup as exc:
        raise ConfigError(exc.detail) from exc
    except ValueError as exc:
        raise ConfigError(f"Unreadable vocabulary: {exc}") from exc


def get_model_config(settings: Settings, tokenizer: Tokenizer) -> ModelConfig:
    return _validated(
        ModelConfig,
        n_layers=settings.N_LAYERS,
        n_heads=settings.N_HEADS,
        d_model=settings.D_MODEL,
        vocab_size=tokenizer.vocab_size,
        max_seq=settings.MAX_SEQ,
        fusion_layer_index=settings.FUSION_LAYER,
        num_images=settings.RETRIEVAL_K,
        proj_mode=settings.PROJ_MODE,
        ln_img_eps=settings.LN_IMG_EPS,
        dropout=settings.DROPOUT,
        dtype=settings.DTYPE,
    )


def get_train_config(settings: Settings, steps: int | None = None) -> TrainConfig:
    total = settings.TOTAL_STEPS if steps is None else steps
    return _validated(
        TrainConfig,
        lr=settings.LR,
        beta1=settings.BETA1,
        beta2=settings.BETA2,
        warmup_steps=min(settings.WARMUP_STEPS, total),
        total_steps=total,
        batch_size=settings.BATCH_SIZE,
        seq_len=settings.SEQ_LEN,
        dropout=settings.DROPOUT,
        grad_clip=settings.GRAD_CLIP,
        seed=settings.SEED,
        checkpoint_every=settings.CHECKPOINT_EVERY,
        prefetch=settings.PREFETCH,
    )


def get_plan(settings: Settings, encoder: JointEncoder | None = None, mode: str | None = None) -> AugmentationPlan:
    return _validated(
        AugmentationPlan,
        mode=mode or settings.RETRIEVAL_MODE,
        k=settings.RETRIEVAL_K,
        nprobe=settings.RETRIEVAL_NPROBE,
        stride=settings.RETRIEVAL_STRIDE,
        chunk_cap=settings.CHUNK_CAP,
        seed=settings.SEED,
        encoder_id=encoder.id if encoder is not None else None,
        index_path=settings.INDEX_PATH,
        cache_path=settings.CACHE_PATH,
    )


def get_corpus_spec(settings: Settings) -> GroundedCorpusSpec:
    return _validated(
        GroundedCorpusSpec,
        n_objects=settings.CORPUS_OBJECTS,
        n_attributes=settings.CORPUS_ATTRIBUTES,
        n_sentences=settings.CORPUS_SENTENCES,
        split=settings.CORPUS_SPLIT,
        keys_per_pair=settings.CORPUS_KEYS_PER_PAIR,
        seed=settings.SEED,
    )


def get_encoder(settings: Settings, tokenizer: Tokenizer) -> JointEncoder:
    """
    The joint encoder named in settings.

    The synthetic encoder reads the object/attribute table of the corpus
    directory when one exists; chunks then anchor on object tokens.
    """
    if settings.ENCODER == "precomputed":
        images = load_embeddings(require_file(settings.IMAGE_EMBEDDINGS_PATH, "image embeddings"))
        texts = None
        if settings.TEXT_EMBEDDINGS_PATH:
            texts = load_embeddings(require_file(settings.TEXT_EMBEDDINGS_PATH, "text embeddings"))
        return PrecomputedEncoder(images, texts, max_tokens=settings.ENCODER_MAX_TOKENS)
    if settings.ENCODER != "synthetic":
        raise ConfigError(f"Unknown encoder {settings.ENCODER!r}")

    table, n_attributes = {}, None
    if (settings.corpus_dir / "attributes.json").is_file():
        if not hasattr(tokenizer, "token_id"):
            raise ConfigError("The synthetic encoder needs the corpus word tokenizer")
        table, n_attributes = load_attribute_table(settings.corpus_dir, tokenizer.token_id)
    try:
        return SyntheticEncoder(
            settings.ENCODER_DIM,
            settings.ENCODER_SEED,
            table,
            n_attributes=n_attributes,
            max_tokens=settings.ENCODER_MAX_TOKENS,
        )
    except InvalidEncoderSetup as exc:
        raise ConfigError(exc.detail) from exc


def get_knowledge_base(settings: Settings, plan: AugmentationPlan) -> KnowledgeBase | None:
    """Key store, plus the index in retrieve mode; ``None`` when the plan retrieves nothing."""
    if not plan.active:
        return None
    keys_path = require_file(settings.KEYS_PATH, "image key store")
    index_path = require_file(settings.INDEX_PATH, "index") if plan.mode == "retrieve" else None
    return KnowledgeBase.load(keys_path, index_path)


def get_retriever(
    settings: Settings, plan: AugmentationPlan, encoder: JointEncoder, tokenizer: Tokenizer, model_dim: int
) -> Retriever | None:
    if not plan.active:
        return None
    kb = get_knowledge_base(settings, plan)
    return Retriever(plan, encoder, kb, tokenizer.stop_set(), model_dim=model_dim)
