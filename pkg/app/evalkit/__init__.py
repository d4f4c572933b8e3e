"""Zero-shot evaluation harness."""

from app.evalkit.prompts import PROMPT_REGISTRY, load_items, load_piqa, load_prompts
from app.evalkit.reports import ablation_csv, predictions_csv, write_report
from app.evalkit.schemas import BenchReport, EvalReport, ItemPrediction, PerplexityResult, PromptSpec
from app.evalkit.service import (
    Augmenter,
    bench_retrieval_overhead,
    eval_object_task,
    eval_piqa,
    make_augmenter,
    perplexity,
    probe_counterfactual,
    rank_labels,
    score_solutions_piqa,
)

__all__ = [
    "PROMPT_REGISTRY",
    "Augmenter",
    "BenchReport",
    "EvalReport",
    "ItemPrediction",
    "PerplexityResult",
    "PromptSpec",
    "ablation_csv",
    "bench_retrieval_overhead",
    "eval_object_task",
    "eval_piqa",
    "load_items",
    "load_piqa",
    "load_prompts",
    "make_augmenter",
    "perplexity",
    "predictions_csv",
    "probe_counterfactual",
    "rank_labels",
    "score_solutions_piqa",
    "write_report",
]
