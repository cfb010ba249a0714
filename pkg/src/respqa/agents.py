"""The three LLM-backed agents: dual-function summarizer, reasoner, generator.

Each agent is prompt assembly over a named-slot template plus strict parsing
of the raw completion surface. The default templates ship as text assets in
``respqa/templates/`` and can be overridden from a directory for prompt
experiments; parsing never raises on arbitrary backend text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import PromptError, PromptTooLargeError
from .llm import LlmRequest, TokenEstimator, whitespace_token_estimate
from .memory import NO_ANSWER_MARKER, MemoryState, normalize_question
from .retrieval import RetrievedDocument

# Slot names used by the shipped templates.
SLOT_OVERARCHING = "Overarching question"
SLOT_SUB_QUESTION = "Sub-question"
SLOT_MEMORY = "Combined memory queues"
SLOT_DOCS = "docs"

DONE_MARKER = "[DONE]"
NO_INFO_SENTINEL = "No relevant information found."

_TEMPLATE_NAMES = ("judge", "plan", "global_evidence", "local_pathway", "generate")
_SLOT = re.compile(r"\{([^{}]+)\}")
_YES_PREFIX = re.compile(r"^yes\b", re.IGNORECASE)
_NO_PREFIX = re.compile(r"^no\b", re.IGNORECASE)
_PLAN_PREFIX = re.compile(r"^(?:thought|question)\s*:\s*", re.IGNORECASE)
_ANSWER_SEPARATORS = " \t\r\n,.:;-"


@dataclass(frozen=True)
class PromptTemplateSet:
    """The five prompt templates, keyed by agent function."""

    judge: str
    plan: str
    global_evidence: str
    local_pathway: str
    generate: str

    @classmethod
    def load_default(cls) -> "PromptTemplateSet":
        texts = {}
        base = resources.files("respqa").joinpath("templates")
        for name in _TEMPLATE_NAMES:
            texts[name] = _strip_final_newline(base.joinpath(f"{name}.txt").read_text("utf-8"))
        return cls(**texts)

    @classmethod
    def load_dir(cls, directory: str | Path) -> "PromptTemplateSet":
        """Defaults overridden by any ``<name>.txt`` present in ``directory``."""
        directory = Path(directory)
        defaults = cls.load_default()
        texts = {}
        for name in _TEMPLATE_NAMES:
            path = directory / f"{name}.txt"
            if path.exists():
                texts[name] = _strip_final_newline(path.read_text("utf-8"))
            else:
                texts[name] = getattr(defaults, name)
        return cls(**texts)


def _strip_final_newline(text: str) -> str:
    return text[:-1] if text.endswith("\n") else text


def referenced_slots(template: str) -> set[str]:
    return {match.group(1) for match in _SLOT.finditer(template)}


def render_template(template: str, bindings: dict[str, str]) -> str:
    """Substitute every ``{slot}`` in one pass; an unbound slot is an error."""

    def _fill(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise PromptError(f"unbound template slot: {name!r}")
        return bindings[name]

    return _SLOT.sub(_fill, template)


def render_docs(hits: list[RetrievedDocument]) -> list[str]:
    """Per-document prompt text: title then passage."""
    return [f"{hit.title}\n{hit.text}" for hit in hits]


def assemble_prompt(
    template: str,
    bindings: dict[str, str],
    *,
    docs: list[str] | None = None,
    doc_slot: str = SLOT_DOCS,
    max_input_tokens: int | None = None,
    estimator: TokenEstimator = whitespace_token_estimate,
) -> str:
    """Byte-deterministic template substitution under the input token cap.

    When ``docs`` is given it fills ``doc_slot`` (documents joined by blank
    lines) and is the only content that may be truncated: whole documents
    are dropped from the lowest rank upward until the estimate fits. All
    other slot content, memory queues included, is never touched; if the
    prompt still exceeds the cap with only the rank-1 document (or with no
    documents at all), PromptTooLargeError reports both sizes.
    """
    if docs is not None and doc_slot in referenced_slots(template):

        def prompt_with(count: int) -> str:
            filled = dict(bindings)
            filled[doc_slot] = "\n\n".join(docs[:count])
            return render_template(template, filled)

        if max_input_tokens is None:
            return prompt_with(len(docs))
        floor = 1 if docs else 0
        floor_estimate = estimator(prompt_with(floor))
        if floor_estimate > max_input_tokens:
            raise PromptTooLargeError(
                f"prompt estimate {floor_estimate:.0f} tokens exceeds cap "
                f"{max_input_tokens} even with {floor} document(s)",
                estimate=floor_estimate,
                cap=max_input_tokens,
            )
        lo, hi = floor, len(docs)
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if estimator(prompt_with(mid)) <= max_input_tokens:
                lo = mid
            else:
                hi = mid - 1
        return prompt_with(lo)

    prompt = render_template(template, bindings)
    if max_input_tokens is not None:
        estimate = estimator(prompt)
        if estimate > max_input_tokens:
            raise PromptTooLargeError(
                f"prompt estimate {estimate:.0f} tokens exceeds cap {max_input_tokens} "
                "and contains no truncatable document content",
                estimate=estimate,
                cap=max_input_tokens,
            )
    return prompt


@dataclass(frozen=True)
class Judgement:
    """Reasoner verdict on whether the memory suffices to answer."""

    sufficient: bool
    raw_text: str
    anomaly: bool = False

    def to_dict(self) -> dict:
        return {"sufficient": self.sufficient, "raw_text": self.raw_text, "anomaly": self.anomaly}


@dataclass(frozen=True)
class LocalAnswer:
    """Summarizer response to the current sub-question."""

    answered: bool
    answer: str
    anomaly: bool = False
    raw_text: str = ""

    def to_dict(self) -> dict:
        return {
            "answered": self.answered,
            "answer": self.answer,
            "anomaly": self.anomaly,
            "raw_text": self.raw_text,
        }


@dataclass(frozen=True)
class PlanResult:
    """Next sub-question from the reasoner, with duplicate-retry bookkeeping."""

    sub_question: str
    attempts: int
    forced_termination: bool
    raw_text: str = ""

    def to_dict(self) -> dict:
        return {
            "sub_question": self.sub_question,
            "attempts": self.attempts,
            "forced_termination": self.forced_termination,
        }


def parse_global_summary(raw: str) -> str:
    """Trimmed summary with a trailing done-marker removed.

    An empty surface (or a bare marker) becomes the no-information sentinel,
    which is always a pushable summary.
    """
    text = raw.strip()
    if text.endswith(DONE_MARKER):
        text = text[: -len(DONE_MARKER)].rstrip()
    return text if text else NO_INFO_SENTINEL


def parse_judgement(raw: str) -> Judgement:
    """Total parse: Yes-prefix is sufficient, No-prefix is not, anything
    else is insufficient with the anomaly flag set (conservative: keep
    iterating)."""
    text = raw.strip()
    if _YES_PREFIX.match(text):
        return Judgement(sufficient=True, raw_text=raw)
    if _NO_PREFIX.match(text):
        return Judgement(sufficient=False, raw_text=raw)
    return Judgement(sufficient=False, raw_text=raw, anomaly=True)


def parse_local_answer(raw: str) -> LocalAnswer:
    """Total parse of the local-pathway surface.

    A Yes-prefix yields the text after the marker (separators trimmed); a
    No-prefix, or anything unparseable, yields the fixed no-answer marker.
    """
    text = raw.strip()
    match = _YES_PREFIX.match(text)
    if match:
        answer = text[match.end() :].lstrip(_ANSWER_SEPARATORS).strip()
        return LocalAnswer(answered=True, answer=answer, raw_text=raw)
    if _NO_PREFIX.match(text):
        return LocalAnswer(answered=False, answer=NO_ANSWER_MARKER, raw_text=raw)
    return LocalAnswer(answered=False, answer=NO_ANSWER_MARKER, anomaly=True, raw_text=raw)


def parse_plan_surface(raw: str) -> str:
    """Strip any leading "Thought:"/"Question:" prefixes from a plan reply."""
    text = raw.strip()
    while True:
        match = _PLAN_PREFIX.match(text)
        if not match:
            return text
        text = text[match.end() :].strip()


class PipelineAgents:
    """Stateless agent frontend: (router, templates, caps) in, parsed results out.

    Safe to share across concurrently running questions; each method makes
    at most two LLM calls (plan retry). The optional ``record`` dict on each
    method captures the exact prompt(s) sent, for trace logging.
    """

    def __init__(
        self,
        router,
        templates: PromptTemplateSet | None = None,
        *,
        max_input_tokens: int = 12_000,
        max_output_tokens: int = 200,
        reasoner_temperature: float = 0.0,
        summarizer_temperature: float = 0.0,
        generator_temperature: float = 0.0,
        estimator: TokenEstimator = whitespace_token_estimate,
    ) -> None:
        self._router = router
        self.templates = templates or PromptTemplateSet.load_default()
        self.max_input_tokens = max_input_tokens
        self.max_output_tokens = max_output_tokens
        self._reasoner_temperature = reasoner_temperature
        self._summarizer_temperature = summarizer_temperature
        self._generator_temperature = generator_temperature
        self.estimator = estimator

    def _complete(self, prompt: str, role_tag: str, temperature: float) -> str:
        request = LlmRequest(
            prompt=prompt,
            max_output_tokens=self.max_output_tokens,
            temperature=temperature,
            role_tag=role_tag,
        )
        return self._router.complete(request).text

    def _assemble(self, template: str, bindings: dict[str, str], docs=None, doc_slot=SLOT_DOCS) -> str:
        return assemble_prompt(
            template,
            bindings,
            docs=docs,
            doc_slot=doc_slot,
            max_input_tokens=self.max_input_tokens,
            estimator=self.estimator,
        )

    def summarize_global(
        self,
        docs: list[RetrievedDocument],
        overarching_question: str,
        record: dict[str, str] | None = None,
    ) -> str:
        """Summary of support for the overarching question found in ``docs``."""
        if not docs:
            raise ValueError("summarize_global requires at least one retrieved document")
        prompt = self._assemble(
            self.templates.global_evidence,
            {SLOT_OVERARCHING: overarching_question},
            docs=render_docs(docs),
        )
        if record is not None:
            record["global_summary"] = prompt
        return parse_global_summary(self._complete(prompt, "summarizer", self._summarizer_temperature))

    def answer_local(
        self,
        sub_question: str,
        memory: MemoryState,
        record: dict[str, str] | None = None,
    ) -> LocalAnswer:
        """Answer the current sub-question from the combined memory queues.

        The caller must have pushed this round's global summary first; the
        retrieved content reaches this prompt only through memory.
        """
        prompt = self._assemble(
            self.templates.local_pathway,
            {SLOT_SUB_QUESTION: sub_question, SLOT_MEMORY: memory.render_combined()},
        )
        if record is not None:
            record["local_answer"] = prompt
        return parse_local_answer(self._complete(prompt, "summarizer", self._summarizer_temperature))

    def judge(
        self,
        overarching_question: str,
        memory: MemoryState,
        record: dict[str, str] | None = None,
    ) -> Judgement:
        """Is the accumulated memory sufficient to answer the question?"""
        if not memory.global_evidence:
            raise ValueError("judge requires at least one global evidence entry")
        prompt = self._assemble(
            self.templates.judge,
            {SLOT_OVERARCHING: overarching_question, SLOT_MEMORY: memory.render_combined()},
        )
        if record is not None:
            record["judge"] = prompt
        return parse_judgement(self._complete(prompt, "reasoner", self._reasoner_temperature))

    def plan(
        self,
        overarching_question: str,
        memory: MemoryState,
        forbidden: set[str],
        record: dict[str, str] | None = None,
    ) -> PlanResult:
        """Next sub-question, guaranteed not to normalize into ``forbidden``
        unless forced_termination is set.

        A duplicate (or empty) first attempt triggers one retry with the
        forbidden list spelled out; a second duplicate forces termination.
        """
        prompt = self._assemble(
            self.templates.plan,
            {SLOT_OVERARCHING: overarching_question, SLOT_MEMORY: memory.render_combined()},
        )
        if record is not None:
            record["plan"] = prompt
        raw = self._complete(prompt, "reasoner", self._reasoner_temperature)
        question = parse_plan_surface(raw)
        normalized = normalize_question(question)
        if normalized and normalized not in forbidden:
            return PlanResult(sub_question=question, attempts=1, forced_termination=False, raw_text=raw)

        retry_prompt = (
            prompt
            + "\nDo not repeat any of these questions: "
            + "; ".join(sorted(forbidden))
        )
        retry_estimate = self.estimator(retry_prompt)
        if retry_estimate > self.max_input_tokens:
            raise PromptTooLargeError(
                f"plan retry prompt estimate {retry_estimate:.0f} tokens exceeds cap "
                f"{self.max_input_tokens}",
                estimate=retry_estimate,
                cap=self.max_input_tokens,
            )
        if record is not None:
            record["plan_retry"] = retry_prompt
        raw = self._complete(retry_prompt, "reasoner", self._reasoner_temperature)
        question = parse_plan_surface(raw)
        normalized = normalize_question(question)
        forced = not normalized or normalized in forbidden
        return PlanResult(sub_question=question, attempts=2, forced_termination=forced, raw_text=raw)

    def generate(
        self,
        overarching_question: str,
        memory: MemoryState,
        record: dict[str, str] | None = None,
    ) -> str:
        """Final answer from the memory queues; trimmed, no other rewriting."""
        prompt = self.render_generate_prompt(overarching_question, memory)
        if record is not None:
            record["generate"] = prompt
        return self._complete(prompt, "generator", self._generator_temperature).strip()

    def render_generate_prompt(self, overarching_question: str, memory: MemoryState) -> str:
        return self._assemble(
            self.templates.generate,
            {SLOT_OVERARCHING: overarching_question, SLOT_MEMORY: memory.render_combined()},
        )

    def generate_standard(
        self,
        overarching_question: str,
        docs: list[RetrievedDocument],
        record: dict[str, str] | None = None,
    ) -> str:
        """Single-shot baseline: answer directly from raw retrieved documents."""
        prompt = self.render_standard_prompt(overarching_question, docs)
        if record is not None:
            record["generate"] = prompt
        return self._complete(prompt, "generator", self._generator_temperature).strip()

    def render_standard_prompt(
        self, overarching_question: str, docs: list[RetrievedDocument]
    ) -> str:
        # The reference slot of the generation template carries raw documents
        # here, so it is doc-wise truncatable, unlike memory content.
        return self._assemble(
            self.templates.generate,
            {SLOT_OVERARCHING: overarching_question},
            docs=render_docs(docs),
            doc_slot=SLOT_MEMORY,
        )
