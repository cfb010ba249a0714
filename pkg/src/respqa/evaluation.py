"""QA dataset loading, token-level F1 / exact match, and batch reports.

Datasets follow the JSONL convention with keys ``id``, ``question``,
``golden_answers``. Scoring normalizes both sides (lowercase, drop the
articles a/an/the, strip punctuation, collapse whitespace), then takes the
best score over the gold answers.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Sequence

from .errors import DatasetError
from .retrieval import strip_punctuation, tokenize

if TYPE_CHECKING:
    from .pipeline import RunTrace

_ARTICLES = re.compile(r"\b(a|an|the)\b")


@dataclass(frozen=True)
class QAExample:
    """One dataset row: a question with at least one gold answer."""

    example_id: str
    question: str
    golden_answers: tuple[str, ...]


def load_dataset(path: str | Path, limit: int | None = None) -> list[QAExample]:
    """First ``limit`` examples (file order) from a JSONL dataset.

    Malformed rows raise DatasetError naming the line number.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    if limit is not None and limit < 0:
        raise ValueError(f"limit must be >= 0, got {limit}")
    examples: list[QAExample] = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if limit is not None and len(examples) >= limit:
                break
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(row, dict):
                raise DatasetError(f"{path}:{lineno}: expected an object")
            missing = [key for key in ("id", "question", "golden_answers") if key not in row]
            if missing:
                raise DatasetError(f"{path}:{lineno}: missing key(s): {', '.join(missing)}")
            question = row["question"]
            golds = row["golden_answers"]
            if not isinstance(question, str) or not question.strip():
                raise DatasetError(f"{path}:{lineno}: 'question' must be non-empty")
            if (
                not isinstance(golds, list)
                or not golds
                or not all(isinstance(g, str) for g in golds)
            ):
                raise DatasetError(
                    f"{path}:{lineno}: 'golden_answers' must be a non-empty list of strings"
                )
            examples.append(
                QAExample(
                    example_id=str(row["id"]),
                    question=question,
                    golden_answers=tuple(golds),
                )
            )
    return examples


def normalize_answer(text: str) -> str:
    """Lowercase, drop whole-word articles, strip punctuation, collapse spaces."""
    text = text.lower()
    text = _ARTICLES.sub(" ", text)
    text = strip_punctuation(text)
    return " ".join(text.split())


def _f1_single(prediction: str, gold: str) -> float:
    pred_tokens = tokenize(normalize_answer(prediction))
    gold_tokens = tokenize(normalize_answer(gold))
    if not pred_tokens and not gold_tokens:
        return 1.0
    overlap = sum((Counter(pred_tokens) & Counter(gold_tokens)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred_tokens)
    recall = overlap / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(prediction: str, golds: Sequence[str]) -> float:
    """Best token-level F1 of the prediction against any gold answer."""
    if not golds:
        raise ValueError("golds must be non-empty")
    return max(_f1_single(prediction, gold) for gold in golds)


def exact_match(prediction: str, golds: Sequence[str]) -> float:
    """1.0 when the normalized prediction equals any normalized gold."""
    if not golds:
        raise ValueError("golds must be non-empty")
    normalized = normalize_answer(prediction)
    return 1.0 if any(normalized == normalize_answer(gold) for gold in golds) else 0.0


@dataclass(frozen=True)
class ExampleResult:
    example_id: str
    question: str
    prediction: str
    f1: float
    em: float
    rounds: int
    stop_reason: str | None
    prompt_tokens: float
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.example_id,
            "question": self.question,
            "prediction": self.prediction,
            "f1": self.f1,
            "em": self.em,
            "rounds": self.rounds,
            "stop_reason": self.stop_reason,
            "generator_prompt_tokens": self.prompt_tokens,
            "error": self.error,
        }


@dataclass(frozen=True)
class EvalReport:
    """Aggregates over a batch; means cover all n examples for f1/em, and
    completed runs only for rounds and prompt size."""

    n: int
    mean_f1: float
    mean_em: float
    mean_rounds: float
    mean_prompt_tokens: float
    stop_reasons: dict[str, int]
    errors: int
    rows: list[ExampleResult]

    def summary_dict(self) -> dict:
        return {
            "n": self.n,
            "mean_f1": self.mean_f1,
            "mean_f1_x100": self.mean_f1 * 100.0,
            "mean_em": self.mean_em,
            "mean_em_x100": self.mean_em * 100.0,
            "mean_rounds": self.mean_rounds,
            "mean_generator_prompt_tokens": self.mean_prompt_tokens,
            "stop_reasons": self.stop_reasons,
            "errors": self.errors,
        }


def evaluate(
    run_fn: Callable[[str], "RunTrace"],
    examples: Sequence[QAExample],
    parallelism: int = 1,
) -> EvalReport:
    """Run the pipeline on every example and score the final answers.

    A failed run scores 0 and is counted in ``errors``; the batch always
    completes. Row order follows dataset order regardless of parallelism,
    so identical inputs produce identical reports.
    """

    def run_one(example: QAExample) -> ExampleResult:
        try:
            trace = run_fn(example.question)
        except Exception as exc:  # per-run failures must not sink the batch
            return ExampleResult(
                example_id=example.example_id,
                question=example.question,
                prediction="",
                f1=0.0,
                em=0.0,
                rounds=0,
                stop_reason=None,
                prompt_tokens=0.0,
                error=str(exc),
            )
        return ExampleResult(
            example_id=example.example_id,
            question=example.question,
            prediction=trace.final_answer,
            f1=token_f1(trace.final_answer, example.golden_answers),
            em=exact_match(trace.final_answer, example.golden_answers),
            rounds=len(trace.iterations),
            stop_reason=trace.stop_reason,
            prompt_tokens=trace.generator_prompt_tokens,
        )

    if parallelism > 1 and len(examples) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(run_one, examples))
    else:
        rows = [run_one(example) for example in examples]

    n = len(rows)
    completed = [row for row in rows if row.error is None]
    stop_reasons: dict[str, int] = {}
    for row in completed:
        assert row.stop_reason is not None
        stop_reasons[row.stop_reason] = stop_reasons.get(row.stop_reason, 0) + 1
    return EvalReport(
        n=n,
        mean_f1=sum(row.f1 for row in rows) / n if n else 0.0,
        mean_em=sum(row.em for row in rows) / n if n else 0.0,
        mean_rounds=sum(row.rounds for row in completed) / len(completed) if completed else 0.0,
        mean_prompt_tokens=(
            sum(row.prompt_tokens for row in completed) / len(completed) if completed else 0.0
        ),
        stop_reasons=stop_reasons,
        errors=n - len(completed),
        rows=rows,
    )


def write_report(report: EvalReport, summary_path: str | Path, rows_path: str | Path) -> None:
    """JSON summary plus per-example JSONL rows."""
    Path(summary_path).write_text(
        json.dumps(report.summary_dict(), indent=2, ensure_ascii=False), encoding="utf-8"
    )
    with Path(rows_path).open("w", encoding="utf-8") as handle:
        for row in report.rows:
            handle.write(json.dumps(row.to_dict(), ensure_ascii=False) + "\n")
