"""Report files: JSON summary plus per-item CSV."""

import csv
import io
import logging
from collections.abc import Sequence
from pathlib import Path

from app.common.files import write_text_atomic
from app.evalkit.schemas import EvalReport

logger = logging.getLogger(__name__)


def predictions_csv(report: EvalReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    prompts = report.prediction_columns or list(report.per_prompt) or ["prediction"]
    slot_names = sorted({key for prediction in report.predictions for key in prediction.item})
    writer.writerow([*slot_names, "gold", *prompts])
    for prediction in report.predictions:
        writer.writerow(
            [*(prediction.item.get(name, "") for name in slot_names), prediction.gold, *prediction.predictions]
        )
    return buffer.getvalue()


def write_report(report: EvalReport, directory: str | Path, name: str) -> list[Path]:
    """Write ``<name>.json`` and, when there are item predictions, ``<name>.csv``."""
    directory = Path(directory)
    written = [directory / f"{name}.json"]
    write_text_atomic(written[0], report.model_dump_json(indent=2) + "\n")
    if report.predictions:
        written.append(directory / f"{name}.csv")
        write_text_atomic(written[1], predictions_csv(report))
    logger.info(f"Wrote report {name} to {directory}")
    return written


def ablation_csv(reports: Sequence[EvalReport]) -> str:
    """One row per retrieval mode: averaged accuracy and each prompt's accuracy."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    prompts = list(reports[0].per_prompt) if reports else []
    writer.writerow(["mode", "accuracy", *prompts])
    for report in reports:
        writer.writerow(
            [report.mode, f"{report.accuracy:.6f}", *(f"{report.per_prompt.get(p, 0.0):.6f}" for p in prompts)]
        )
    return buffer.getvalue()
