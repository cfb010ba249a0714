"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes: configuration problems,
IO/data problems, and runtime failures.
"""

from __future__ import annotations


class RespqaError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RespqaError):
    """Invalid or incomplete configuration, detected at startup."""


class CorpusError(RespqaError):
    """Corpus ingest or index build/open problem (bad rows, duplicate ids)."""


class DatasetError(RespqaError):
    """Evaluation dataset could not be parsed."""


class RetrieverError(RespqaError):
    """A retrieval backend (e.g. the embedding endpoint) failed."""


class ScriptError(RespqaError):
    """A scripted backend received a request no rule matches."""


class BackendError(RespqaError):
    """Permanent completion-backend failure, after retries were exhausted.

    Carries the agent role whose call failed so the pipeline can report it.
    """

    def __init__(self, message: str, *, role_tag: str | None = None) -> None:
        super().__init__(message)
        self.role_tag = role_tag


class PromptError(RespqaError):
    """Prompt assembly failed (e.g. an unbound template slot)."""


class PromptTooLargeError(PromptError):
    """Prompt exceeds the input token cap even after document truncation."""

    def __init__(self, message: str, *, estimate: float, cap: int) -> None:
        super().__init__(message)
        self.estimate = estimate
        self.cap = cap


class PipelineError(RespqaError):
    """A single question's run aborted; carries the failing round and role."""

    def __init__(self, message: str, *, round_index: int, role_tag: str | None = None) -> None:
        super().__init__(message)
        self.round_index = round_index
        self.role_tag = role_tag
