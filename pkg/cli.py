#!/usr/bin/env python3
"""CLI for the retrieval fusion language model."""

import json
import logging
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated

import numpy as np
import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from app.augment import (
    CachedImageSource,
    build_cache,
    generate_grounded_corpus,
    load_cache,
    make_binding,
    write_grounded_corpus,
)
from app.augment.corpus import load_image_records
from app.common import CorpusStore, write_text_atomic
from app.core.config import Settings, load_settings
from app.core.dependencies import (
    get_corpus_spec,
    get_encoder,
    get_knowledge_base,
    get_model_config,
    get_plan,
    get_retriever,
    get_tokenizer,
    get_train_config,
    require_file,
)
from app.core.exceptions import AppError, ConfigError
from app.core.logging import setup_logging
from app.encoder import encode_image_key, save_embeddings
from app.evalkit import (
    EvalReport,
    ablation_csv,
    bench_retrieval_overhead,
    eval_object_task,
    eval_piqa,
    load_items,
    load_piqa,
    load_prompts,
    make_augmenter,
    perplexity,
    probe_counterfactual,
    write_report,
)
from app.fusion_lm import init_model, load_checkpoint, save_checkpoint
from app.trainer import train as train_model
from app.vindex import add_keys, save_index, train_index

app = typer.Typer(
    name="valm",
    help="Index, train and evaluate a retrieval-augmented fusion language model",
    add_completion=False,
)
console = Console()
logger = logging.getLogger("cli")

ConfigOption = Annotated[Path | None, typer.Option("--config", help="KEY=VALUE settings file")]
ModeOption = Annotated[str | None, typer.Option("--mode", help="retrieve, disabled or random")]
KOption = Annotated[int | None, typer.Option("--k", help="Images retrieved per position")]
NprobeOption = Annotated[int | None, typer.Option("--nprobe", help="Posting lists probed per query")]
ProjModeOption = Annotated[str | None, typer.Option("--proj-mode", help="Projection variant of image slots")]
SeedOption = Annotated[int | None, typer.Option("--seed", help="Seed of every random draw")]


def _settings(
    config: Path | None,
    mode: str | None = None,
    k: int | None = None,
    nprobe: int | None = None,
    proj_mode: str | None = None,
    seed: int | None = None,
) -> Settings:
    if config is not None and not config.is_file():
        raise ConfigError(f"Config file not found: {config}")
    try:
        settings = load_settings(
            config,
            RETRIEVAL_MODE=mode,
            RETRIEVAL_K=k,
            RETRIEVAL_NPROBE=nprobe,
            PROJ_MODE=proj_mode,
            SEED=seed,
        )
    except ValidationError as exc:
        raise ConfigError(f"Invalid settings: {exc.errors()[0]['msg']}") from exc
    setup_logging(settings.LOG_LEVEL)
    return settings


@contextmanager
def handle_errors() -> Iterator[None]:
    """Map domain errors to their exit codes."""
    try:
        yield
    except AppError as exc:
        console.print(f"Error: {exc.detail}", style="red")
        raise typer.Exit(code=exc.exit_code) from exc


def _provenance(report: EvalReport, settings: Settings) -> EvalReport:
    return report.model_copy(update={"settings": settings.model_dump(mode="json"), "settings_digest": settings.digest()})


def _training_corpus(settings: Settings, tokenizer) -> CorpusStore:
    return CorpusStore.from_file(require_file(settings.corpus_dir / "train.txt", "training corpus"), tokenizer)


@app.command()
def info(config: ConfigOption = None):
    """Display the effective settings."""
    with handle_errors():
        settings = _settings(config)
        table = Table(title=f"{settings.APP_NAME} {settings.APP_VERSION}")
        table.add_column("Setting", style="cyan", no_wrap=True)
        table.add_column("Value", style="magenta")
        for key, value in settings.model_dump().items():
            table.add_row(key, str(value))
        console.print(table)
        console.print(f"Settings digest: {settings.digest()}", style="blue")


@app.command()
def gen_corpus(config: ConfigOption = None, seed: SeedOption = None):
    """Generate the synthetic grounded corpus into CORPUS_DIR."""
    with handle_errors():
        settings = _settings(config, seed=seed)
        corpus = generate_grounded_corpus(get_corpus_spec(settings))
        written = write_grounded_corpus(corpus, settings.corpus_dir)
        console.print(f"✅ Wrote {len(written)} files to {settings.corpus_dir}", style="green")


@app.command()
def build_index(config: ConfigOption = None, seed: SeedOption = None):
    """Encode the image records, then train and fill the index."""
    with handle_errors():
        settings = _settings(config, seed=seed)
        require_file(settings.corpus_dir / "images.jsonl", "image records")
        tokenizer = get_tokenizer(settings)
        encoder = get_encoder(settings, tokenizer)
        records = load_image_records(settings.corpus_dir)
        ids = np.array([record.image_id for record in records], dtype=np.int64)
        vectors = np.stack([encode_image_key(encoder, record) for record in records])

        rng = np.random.default_rng([settings.SEED, 7])
        sample = vectors[np.sort(rng.permutation(len(vectors))[: settings.INDEX_TRAIN_SAMPLE])]
        index = train_index(
            sample,
            settings.INDEX_CENTROIDS,
            settings.INDEX_SUBQUANTIZERS,
            settings.INDEX_KMEANS_ITERS,
            seed=settings.SEED,
            exact=settings.INDEX_EXACT,
        )
        count = add_keys(index, list(zip(ids.tolist(), vectors, strict=True)))
        save_embeddings(settings.KEYS_PATH, ids, vectors)
        save_index(index, settings.INDEX_PATH)
        console.print(f"✅ Indexed {count} image keys into {settings.INDEX_PATH}", style="green")


@app.command(name="build-cache")
def build_cache_command(
    config: ConfigOption = None,
    mode: ModeOption = None,
    k: KOption = None,
    nprobe: NprobeOption = None,
    seed: SeedOption = None,
):
    """Retrieve for every position of the training corpus and store the results."""
    with handle_errors():
        settings = _settings(config, mode=mode, k=k, nprobe=nprobe, seed=seed)
        tokenizer = get_tokenizer(settings)
        corpus = _training_corpus(settings, tokenizer)
        encoder = get_encoder(settings, tokenizer)
        plan = get_plan(settings, encoder)
        kb = get_knowledge_base(settings, plan)
        build_cache(corpus, plan, encoder, kb, settings.CACHE_PATH, tokenizer.stop_set())
        console.print(f"✅ Cached retrieval for {len(corpus)} documents in {settings.CACHE_PATH}", style="green")


@app.command()
def train(
    config: ConfigOption = None,
    steps: Annotated[int | None, typer.Option("--steps", help="Override TOTAL_STEPS")] = None,
    mode: ModeOption = None,
    k: KOption = None,
    nprobe: NprobeOption = None,
    proj_mode: ProjModeOption = None,
    seed: SeedOption = None,
):
    """Train a model; image slots come from the retrieval cache when it matches."""
    with handle_errors():
        settings = _settings(config, mode=mode, k=k, nprobe=nprobe, proj_mode=proj_mode, seed=seed)
        tokenizer = get_tokenizer(settings)
        corpus = _training_corpus(settings, tokenizer)
        encoder = get_encoder(settings, tokenizer)
        model_config = get_model_config(settings, tokenizer)
        cfg = get_train_config(settings, steps)
        plan = get_plan(settings, encoder)

        source = None
        if plan.active:
            kb = get_knowledge_base(settings, plan)
            if Path(settings.CACHE_PATH).is_file():
                cache = load_cache(settings.CACHE_PATH, expected=make_binding(corpus, plan, encoder, kb))
                source = CachedImageSource(cache, kb.keys)
                logger.info(f"Serving image slots from {settings.CACHE_PATH}")
            else:
                source = get_retriever(settings, plan, encoder, tokenizer, model_config.d_model)
                logger.info("No retrieval cache, retrieving live")

        model = init_model(model_config, seed=settings.SEED, std=settings.INIT_STD)
        state, curve = train_model(
            model, corpus, source, cfg, checkpoint_dir=settings.CHECKPOINT_DIR, loss_csv=settings.LOSS_CSV_PATH
        )
        save_checkpoint(state, settings.CHECKPOINT_PATH)
        final = f", final nll {curve.nll[-1]:.4f}" if curve.points else ""
        console.print(f"✅ Saved checkpoint to {settings.CHECKPOINT_PATH}{final}", style="green")


def _evaluate(settings: Settings, task: str, mode: str | None = None) -> EvalReport:
    tokenizer = get_tokenizer(settings)
    model = load_checkpoint(require_file(settings.CHECKPOINT_PATH, "checkpoint"))
    encoder = get_encoder(settings, tokenizer)
    plan = get_plan(settings, encoder, mode)
    if task == "probe" and not plan.active:
        raise ConfigError("The counterfactual probe needs retrieve or random mode with K > 0")
    augmenter = make_augmenter(get_retriever(settings, plan, encoder, tokenizer, model.config.d_model))

    if task == "object":
        prompts = load_prompts(require_file(settings.prompts_path, "prompts file"))
        items = load_items(require_file(settings.items_path, "items file"))
        report = eval_object_task(model, augmenter, tokenizer, prompts, items, mode=str(plan.mode))
    elif task == "piqa":
        items = load_piqa(require_file(settings.items_path, "items file"))
        report = eval_piqa(model, augmenter, tokenizer, items, mode=str(plan.mode))
    elif task == "perplexity":
        path = require_file(settings.EVAL_CORPUS_PATH or settings.corpus_dir / "train.txt", "evaluation corpus")
        result = perplexity(model, augmenter, CorpusStore.from_file(path, tokenizer), tokenizer)
        report = EvalReport(
            task="perplexity",
            mode=str(plan.mode),
            perplexity=result.perplexity,
            last_word_acc=result.last_word_acc,
            n_tokens=result.n_tokens,
        )
    elif task == "probe":
        prompts = load_prompts(require_file(settings.prompts_path, "prompts file"))
        items = load_items(require_file(settings.items_path, "items file"))
        records = load_image_records(settings.corpus_dir)
        kb = get_knowledge_base(settings, plan)
        report = probe_counterfactual(model, augmenter, tokenizer, prompts[0], items, records, kb.keys)
        report = report.model_copy(update={"mode": str(plan.mode)})
    else:
        raise ConfigError(f"Unknown evaluation task {task!r}")
    return _provenance(report, settings)


@app.command(name="eval")
def evaluate(
    config: ConfigOption = None,
    task: Annotated[str | None, typer.Option("--task", help="object, piqa, perplexity or probe")] = None,
    mode: ModeOption = None,
    k: KOption = None,
    nprobe: NprobeOption = None,
    seed: SeedOption = None,
):
    """Evaluate a checkpoint and write JSON and CSV reports."""
    with handle_errors():
        settings = _settings(config, mode=mode, k=k, nprobe=nprobe, seed=seed)
        task = (task or settings.EVAL_TASK).lower()
        report = _evaluate(settings, task)
        write_report(report, settings.REPORT_DIR, f"{task}-{report.mode}")
        summary = report.accuracy if report.accuracy is not None else report.perplexity
        console.print(f"✅ {task} ({report.mode}): {summary:.4f}", style="green")


@app.command()
def bench(
    config: ConfigOption = None,
    mode: ModeOption = None,
    k: KOption = None,
    nprobe: NprobeOption = None,
):
    """Time scoring with and without retrieval over a corpus sample."""
    with handle_errors():
        settings = _settings(config, mode=mode, k=k, nprobe=nprobe)
        tokenizer = get_tokenizer(settings)
        model = load_checkpoint(require_file(settings.CHECKPOINT_PATH, "checkpoint"))
        path = require_file(settings.EVAL_CORPUS_PATH or settings.corpus_dir / "train.txt", "evaluation corpus")
        documents = CorpusStore.from_file(path, tokenizer).documents[: settings.BENCH_SAMPLE]
        encoder = get_encoder(settings, tokenizer)
        plan = get_plan(settings, encoder)
        candidate = make_augmenter(get_retriever(settings, plan, encoder, tokenizer, model.config.d_model))
        report = bench_retrieval_overhead(model, make_augmenter(None), candidate, documents)

        payload = report.model_dump(mode="json") | {
            "mode": str(plan.mode),
            "settings": settings.model_dump(mode="json"),
            "settings_digest": settings.digest(),
        }
        target = Path(settings.REPORT_DIR) / f"bench-{plan.mode}.json"
        write_text_atomic(target, json.dumps(payload, indent=2) + "\n")
        table = Table(title="Retrieval overhead")
        table.add_column("Run", style="cyan")
        table.add_column("Tokens/s", style="magenta")
        table.add_row("disabled", f"{report.baseline_tokens_per_sec:.1f}")
        table.add_row(str(plan.mode), f"{report.retrieval_tokens_per_sec:.1f}")
        console.print(table)
        console.print(f"Time ratio: {report.ratio:.2f}x", style="blue")


@app.command()
def ablate(
    config: ConfigOption = None,
    k: KOption = None,
    nprobe: NprobeOption = None,
    seed: SeedOption = None,
):
    """Evaluate the object task under retrieve, disabled and random retrieval."""
    with handle_errors():
        settings = _settings(config, k=k, nprobe=nprobe, seed=seed)
        reports = []
        for mode in ("retrieve", "disabled", "random"):
            report = _evaluate(settings, "object", mode)
            write_report(report, settings.REPORT_DIR, f"object-{mode}")
            reports.append(report)
        write_text_atomic(Path(settings.REPORT_DIR) / "ablation.csv", ablation_csv(reports))

        table = Table(title="Retrieval ablation")
        table.add_column("Mode", style="cyan")
        table.add_column("Accuracy", style="magenta")
        for report in reports:
            table.add_row(report.mode, f"{report.accuracy:.4f}")
        console.print(table)


if __name__ == "__main__":
    app()
