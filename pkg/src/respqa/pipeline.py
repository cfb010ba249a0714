"""The iterative retrieve-summarize-judge-plan loop and the one-shot baseline.

Every run produces a full RunTrace: per-round retrieval hits, summaries,
judgements, planning results, the decision taken, and the final answer. The
loop performs at most ``max_iterations`` retrievals no matter how the
backends behave, and never retrieves the same normalized sub-question twice.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .agents import NO_INFO_SENTINEL, Judgement, LocalAnswer, PipelineAgents, PlanResult
from .errors import BackendError, PipelineError
from .memory import MemoryState
from .retrieval import RetrievedDocument, Retriever

logger = logging.getLogger(__name__)

DECISION_GENERATE = "generate"
DECISION_CONTINUE = "continue"
DECISION_FORCED_GENERATE = "forced_generate"

STOP_JUDGED_SUFFICIENT = "judged_sufficient"
STOP_MAX_ITERATIONS = "max_iterations"
STOP_DUPLICATE_PLAN = "duplicate_plan"
STOP_SINGLE_ROUND = "single_round"  # baseline pipeline only

PIPELINE_RESP = "resp"
PIPELINE_STANDARD = "standard"

ROLE_BINDING_DEFAULT = {"reasoner": "default", "summarizer": "default", "generator": "default"}


@dataclass
class PipelineConfig:
    """Loop parameters and per-role backend routing."""

    top_k: int = 5
    max_iterations: int = 3
    max_input_tokens: int = 12_000
    max_output_tokens: int = 200
    backend_roles: dict[str, str] = field(default_factory=lambda: dict(ROLE_BINDING_DEFAULT))
    retriever: str = "bm25"
    generator_temperature: float = 0.0
    log_prompts: bool = False

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.max_input_tokens < 1 or self.max_output_tokens < 1:
            raise ValueError("token caps must be >= 1")


@dataclass
class IterationRecord:
    """Full audit of one retrieval round."""

    round: int
    sub_question: str
    retrieved: list[RetrievedDocument]
    global_summary: str
    local_answer: LocalAnswer | None
    judgement: Judgement | None
    decision: str
    plan: PlanResult | None = None
    prompts: dict[str, str] | None = None

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "sub_question": self.sub_question,
            "retrieved": [hit.to_dict() for hit in self.retrieved],
            "global_summary": self.global_summary,
            "local_answer": self.local_answer.to_dict() if self.local_answer else None,
            "judgement": self.judgement.to_dict() if self.judgement else None,
            "decision": self.decision,
            "plan": self.plan.to_dict() if self.plan else None,
            "prompts": self.prompts,
        }


@dataclass
class RunTrace:
    """Everything that happened while answering one question."""

    question: str
    pipeline: str
    iterations: list[IterationRecord]
    final_answer: str
    stop_reason: str
    anomalies: list[str]
    generator_prompt_tokens: float
    memory: MemoryState | None = None

    @property
    def sub_questions(self) -> list[str]:
        return [record.sub_question for record in self.iterations]

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "pipeline": self.pipeline,
            "iterations": [record.to_dict() for record in self.iterations],
            "final_answer": self.final_answer,
            "stop_reason": self.stop_reason,
            "anomalies": self.anomalies,
            "generator_prompt_tokens": self.generator_prompt_tokens,
            "memory": self.memory.to_dict() if self.memory else None,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, ensure_ascii=False), encoding="utf-8"
        )


def run_resp(question: str, retriever: Retriever, agents: PipelineAgents, config: PipelineConfig) -> RunTrace:
    """Run the full iterative loop for one question.

    Round 0 retrieves with the question itself and produces no local answer.
    Every round, the newest global summary is pushed before anything reads
    memory; the judge then decides whether to generate or plan. The loop
    ends on a sufficient judgement, on the iteration cap (generation happens
    anyway), or when planning cannot produce a novel sub-question.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    memory = MemoryState()
    iterations: list[IterationRecord] = []
    anomalies: list[str] = []
    sub_question = question
    stop_reason = STOP_MAX_ITERATIONS

    for round_index in range(config.max_iterations):
        prompts: dict[str, str] = {}
        record = prompts if config.log_prompts else None
        hits = retriever.retrieve(sub_question, config.top_k)

        if hits:
            summary = _agent_call(
                lambda: agents.summarize_global(hits, question, record), round_index
            )
        else:
            # Nothing retrievable: the sentinel keeps the evidence queue
            # honest and the loop moving.
            summary = NO_INFO_SENTINEL
        memory.push_global(round_index, summary)

        local_answer: LocalAnswer | None = None
        if round_index >= 1:
            local_answer = _agent_call(
                lambda: agents.answer_local(sub_question, memory, record), round_index
            )
            if local_answer.anomaly:
                anomalies.append(
                    f"round {round_index}: unparseable local answer: {local_answer.raw_text!r}"
                )
            memory.push_local(round_index, sub_question, local_answer.answer, local_answer.answered)

        judgement = _agent_call(lambda: agents.judge(question, memory, record), round_index)
        if judgement.anomaly:
            anomalies.append(f"round {round_index}: unparseable judgement: {judgement.raw_text!r}")

        plan_result: PlanResult | None = None
        if judgement.sufficient:
            decision = DECISION_GENERATE
            stop_reason = STOP_JUDGED_SUFFICIENT
        elif round_index == config.max_iterations - 1:
            # Iteration budget exhausted: proceed straight to generation,
            # without planning a sub-question that would never be retrieved.
            decision = DECISION_FORCED_GENERATE
            stop_reason = STOP_MAX_ITERATIONS
        else:
            forbidden = memory.seen_subquestions(question)
            plan_result = _agent_call(
                lambda: agents.plan(question, memory, forbidden, record), round_index
            )
            if plan_result.forced_termination:
                decision = DECISION_FORCED_GENERATE
                stop_reason = STOP_DUPLICATE_PLAN
            else:
                decision = DECISION_CONTINUE

        iterations.append(
            IterationRecord(
                round=round_index,
                sub_question=sub_question,
                retrieved=hits,
                global_summary=summary,
                local_answer=local_answer,
                judgement=judgement,
                decision=decision,
                plan=plan_result,
                prompts=prompts if config.log_prompts else None,
            )
        )
        if decision != DECISION_CONTINUE:
            break
        sub_question = plan_result.sub_question

    final_round = iterations[-1].round
    generate_prompts: dict[str, str] = {}
    generate_record = generate_prompts if config.log_prompts else None
    prompt = agents.render_generate_prompt(question, memory)
    answer = _agent_call(lambda: agents.generate(question, memory, generate_record), final_round)
    if config.log_prompts and iterations[-1].prompts is not None:
        iterations[-1].prompts.update(generate_prompts)

    return RunTrace(
        question=question,
        pipeline=PIPELINE_RESP,
        iterations=iterations,
        final_answer=answer,
        stop_reason=stop_reason,
        anomalies=anomalies,
        generator_prompt_tokens=agents.estimator(prompt),
        memory=memory,
    )


def run_standard_rag(
    question: str, retriever: Retriever, agents: PipelineAgents, config: PipelineConfig
) -> RunTrace:
    """One retrieval, one generation from the raw documents; no memory."""
    if not question.strip():
        raise ValueError("question must be non-empty")
    prompts: dict[str, str] = {}
    record = prompts if config.log_prompts else None
    hits = retriever.retrieve(question, config.top_k)
    prompt = agents.render_standard_prompt(question, hits)
    answer = _agent_call(lambda: agents.generate_standard(question, hits, record), 0)
    iteration = IterationRecord(
        round=0,
        sub_question=question,
        retrieved=hits,
        global_summary="",
        local_answer=None,
        judgement=None,
        decision=DECISION_GENERATE,
        prompts=prompts if config.log_prompts else None,
    )
    return RunTrace(
        question=question,
        pipeline=PIPELINE_STANDARD,
        iterations=[iteration],
        final_answer=answer,
        stop_reason=STOP_SINGLE_ROUND,
        anomalies=[],
        generator_prompt_tokens=agents.estimator(prompt),
        memory=None,
    )


def _agent_call(call: Callable, round_index: int):
    """Wrap backend failures so the surfaced error names round and role."""
    try:
        return call()
    except BackendError as exc:
        raise PipelineError(
            f"round {round_index}: {exc.role_tag or 'unknown'} backend failed: {exc}",
            round_index=round_index,
            role_tag=exc.role_tag,
        ) from exc


@dataclass(frozen=True)
class SweepRow:
    pipeline: str
    k: int
    mean_f1: float
    mean_prompt_tokens: float
    n: int
    errors: int


def sweep_k(
    examples: Sequence,
    k_values: Sequence[int],
    pipeline: str,
    make_runner: Callable[[int], Callable[[str], RunTrace]],
    parallelism: int = 1,
) -> list[SweepRow]:
    """Metric and generator-prompt-size curves over documents-per-iteration.

    ``make_runner(k)`` must return a ready-to-call runner for that k;
    per-run errors are collected into the row, not raised.
    """
    from .evaluation import evaluate

    rows = []
    for k in k_values:
        report = evaluate(make_runner(k), examples, parallelism=parallelism)
        rows.append(
            SweepRow(
                pipeline=pipeline,
                k=k,
                mean_f1=report.mean_f1,
                mean_prompt_tokens=report.mean_prompt_tokens,
                n=report.n,
                errors=report.errors,
            )
        )
        logger.info(
            "sweep %s k=%d: mean_f1=%.4f mean_prompt_tokens=%.1f errors=%d",
            pipeline,
            k,
            report.mean_f1,
            report.mean_prompt_tokens,
            report.errors,
        )
    return rows
