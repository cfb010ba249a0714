"""Application configuration: YAML file, environment, CLI overrides, wiring.

Precedence is flag > environment > file. Validation is total and happens at
startup: a missing role binding, backend, or path fails before any LLM call.

Environment variables: ``RESPQA_LLM_ENDPOINT``, ``RESPQA_LLM_MODEL``, and
``RESPQA_API_KEY`` (or the per-backend ``api_key_env`` named in the file).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import yaml

from .agents import PipelineAgents, PromptTemplateSet
from .errors import ConfigurationError
from .llm import (
    BackendRouter,
    HttpChatBackend,
    LlmBackend,
    ScriptedBackend,
    ScriptedRule,
    load_script,
    whitespace_token_estimate,
)
from .pipeline import (
    PIPELINE_RESP,
    PIPELINE_STANDARD,
    PipelineConfig,
    RunTrace,
    run_resp,
    run_standard_rag,
)
from .retrieval import (
    DEFAULT_B,
    DEFAULT_K1,
    BM25Index,
    EmbeddingEndpointClient,
    EmbeddingRetriever,
    Retriever,
    load_vectors,
)

ENV_ENDPOINT = "RESPQA_LLM_ENDPOINT"
ENV_MODEL = "RESPQA_LLM_MODEL"
ENV_API_KEY = "RESPQA_API_KEY"

ROLES = ("reasoner", "summarizer", "generator")


@dataclass(frozen=True)
class BackendSpec:
    name: str
    kind: str  # "http" | "scripted"
    endpoint: str | None = None
    model: str | None = None
    api_key: str | None = None
    script: Path | None = None


@dataclass
class AppConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    backends: dict[str, BackendSpec] = field(default_factory=dict)
    roles: dict[str, str] = field(default_factory=dict)
    retriever_kind: str = "bm25"
    index_dir: Path | None = None
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    embedding_endpoint: str | None = None
    embedding_model: str | None = None
    embedding_api_key: str | None = None
    vectors_path: Path | None = None
    templates_dir: Path | None = None
    parallelism: int = 1


@dataclass(frozen=True)
class CliOverrides:
    """Values from command-line flags; highest precedence."""

    endpoint: str | None = None
    model: str | None = None
    script: str | None = None
    index_dir: str | None = None
    top_k: int | None = None
    max_iterations: int | None = None
    log_prompts: bool = False
    templates_dir: str | None = None
    parallelism: int | None = None


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigurationError(message)


def _section(data: dict, key: str) -> dict:
    value = data.get(key) or {}
    _require(isinstance(value, dict), f"config section {key!r} must be a mapping")
    return value


def load_app_config(path: str | Path | None, overrides: CliOverrides | None = None) -> AppConfig:
    """Load, merge, and fully validate the application configuration."""
    overrides = overrides or CliOverrides()
    data: dict = {}
    if path is not None:
        path = Path(path)
        _require(path.exists(), f"config file not found: {path}")
        loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        if loaded is None:
            loaded = {}
        _require(isinstance(loaded, dict), "config file must contain a mapping at top level")
        data = loaded

    pipeline = _load_pipeline(_section(data, "pipeline"), overrides)
    retriever = _section(data, "retriever")
    eval_section = _section(data, "eval")

    backends = _load_backends(_section(data, "backends"), overrides)
    roles = _load_roles(data.get("roles"), backends, overrides)

    templates_dir = overrides.templates_dir or data.get("templates_dir")
    if templates_dir is not None:
        templates_dir = Path(templates_dir)
        _require(templates_dir.is_dir(), f"templates directory not found: {templates_dir}")

    index_dir = overrides.index_dir or retriever.get("index_dir")
    try:
        parallelism = overrides.parallelism or int(eval_section.get("parallelism", 1))
        k1 = float(retriever.get("k1", DEFAULT_K1))
        b = float(retriever.get("b", DEFAULT_B))
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid numeric setting: {exc}") from exc
    _require(parallelism >= 1, f"parallelism must be >= 1, got {parallelism}")

    config = AppConfig(
        pipeline=pipeline,
        backends=backends,
        roles=roles,
        retriever_kind=str(retriever.get("kind", "bm25")),
        index_dir=Path(index_dir) if index_dir else None,
        k1=k1,
        b=b,
        embedding_endpoint=retriever.get("endpoint"),
        embedding_model=retriever.get("model"),
        embedding_api_key=_resolve_api_key(retriever.get("api_key_env")),
        vectors_path=Path(retriever["vectors"]) if retriever.get("vectors") else None,
        templates_dir=templates_dir,
        parallelism=parallelism,
    )
    _require(
        config.retriever_kind in ("bm25", "embedding"),
        f"unknown retriever kind: {config.retriever_kind!r}",
    )
    return config


def _load_pipeline(section: dict, overrides: CliOverrides) -> PipelineConfig:
    try:
        pipeline = PipelineConfig(
            top_k=int(section.get("top_k", 5)),
            max_iterations=int(section.get("max_iterations", 3)),
            max_input_tokens=int(section.get("max_input_tokens", 12_000)),
            max_output_tokens=int(section.get("max_output_tokens", 200)),
            generator_temperature=float(section.get("generator_temperature", 0.0)),
        )
        if overrides.top_k is not None:
            pipeline = replace(pipeline, top_k=overrides.top_k)
        if overrides.max_iterations is not None:
            pipeline = replace(pipeline, max_iterations=overrides.max_iterations)
        if overrides.log_prompts:
            pipeline = replace(pipeline, log_prompts=True)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid pipeline settings: {exc}") from exc
    return pipeline


def _resolve_api_key(api_key_env: str | None) -> str | None:
    return os.environ.get(api_key_env or ENV_API_KEY) or None


def _load_backends(section: dict, overrides: CliOverrides) -> dict[str, BackendSpec]:
    backends: dict[str, BackendSpec] = {}
    for name, raw in section.items():
        _require(isinstance(raw, dict), f"backend {name!r} must be a mapping")
        kind = raw.get("kind", "http")
        _require(kind in ("http", "scripted"), f"backend {name!r}: unknown kind {kind!r}")
        if kind == "scripted":
            script = raw.get("script")
            _require(bool(script), f"backend {name!r}: scripted backends need a 'script' path")
            script_path = Path(script)
            _require(script_path.exists(), f"backend {name!r}: script not found: {script_path}")
            backends[name] = BackendSpec(name=name, kind="scripted", script=script_path)
        else:
            endpoint = raw.get("endpoint") or os.environ.get(ENV_ENDPOINT)
            model = raw.get("model") or os.environ.get(ENV_MODEL) or "default"
            backends[name] = BackendSpec(
                name=name,
                kind="http",
                endpoint=endpoint,
                model=str(model),
                api_key=_resolve_api_key(raw.get("api_key_env")),
            )

    # Flag-level test mode: a scripted backend overrides all HTTP wiring.
    if overrides.script is not None:
        script_path = Path(overrides.script)
        _require(script_path.exists(), f"script not found: {script_path}")
        backends["scripted"] = BackendSpec(name="scripted", kind="scripted", script=script_path)
    elif overrides.endpoint or (not backends and os.environ.get(ENV_ENDPOINT)):
        endpoint = overrides.endpoint or os.environ.get(ENV_ENDPOINT)
        model = overrides.model or os.environ.get(ENV_MODEL) or "default"
        backends["default"] = BackendSpec(
            name="default",
            kind="http",
            endpoint=endpoint,
            model=str(model),
            api_key=_resolve_api_key(None),
        )
    elif overrides.model is not None:
        for name, spec in list(backends.items()):
            if spec.kind == "http":
                backends[name] = replace(spec, model=overrides.model)

    for spec in backends.values():
        if spec.kind == "http":
            _require(
                bool(spec.endpoint),
                f"backend {spec.name!r} has no endpoint "
                f"(set it in the config file, {ENV_ENDPOINT}, or --llm-endpoint)",
            )
    return backends


def _load_roles(
    raw_roles: object, backends: dict[str, BackendSpec], overrides: CliOverrides
) -> dict[str, str]:
    if overrides.script is not None:
        return {role: "scripted" for role in ROLES}
    _require(
        bool(backends),
        "no completion backend configured (define one in the config file, set "
        f"{ENV_ENDPOINT}, or pass --llm-endpoint / --script)",
    )
    roles: dict[str, str]
    if raw_roles is None:
        _require(
            len(backends) == 1,
            "no 'roles' section: either define one and only one backend "
            "(bound to every role) or add explicit role bindings",
        )
        only = next(iter(backends))
        roles = {role: only for role in ROLES}
    else:
        _require(isinstance(raw_roles, dict), "'roles' must be a mapping")
        roles = {str(role): str(name) for role, name in raw_roles.items()}
    missing = [role for role in ROLES if role not in roles]
    _require(not missing, f"no backend bound for role(s): {', '.join(missing)}")
    for role, name in roles.items():
        _require(role in ROLES, f"unknown role in 'roles': {role!r}")
        _require(name in backends, f"role {role!r} bound to undefined backend {name!r}")
    return roles


class AppRuntime:
    """Configured components, ready to run questions.

    Scripted backends get a fresh conversation per question run so rule
    ordinals stay deterministic under batch parallelism; HTTP backends are
    shared singletons.
    """

    def __init__(self, config: AppConfig) -> None:
        self.config = config
        self.retriever = _build_retriever(config)
        self.templates = (
            PromptTemplateSet.load_dir(config.templates_dir)
            if config.templates_dir
            else PromptTemplateSet.load_default()
        )
        self._http_backends: dict[str, HttpChatBackend] = {}
        self._script_rules: dict[str, list[ScriptedRule]] = {}
        for name, spec in config.backends.items():
            if spec.kind == "http":
                assert spec.endpoint is not None and spec.model is not None
                self._http_backends[name] = HttpChatBackend(
                    endpoint=spec.endpoint,
                    model=spec.model,
                    api_key=spec.api_key,
                    backend_id=name,
                )
            else:
                assert spec.script is not None
                self._script_rules[name] = load_script(spec.script)

    def fresh_bindings(self) -> dict[str, LlmBackend]:
        scripted: dict[str, ScriptedBackend] = {}
        bindings: dict[str, LlmBackend] = {}
        for role, name in self.config.roles.items():
            spec = self.config.backends[name]
            if spec.kind == "http":
                bindings[role] = self._http_backends[name]
            else:
                if name not in scripted:
                    scripted[name] = ScriptedBackend(self._script_rules[name], backend_id=name)
                bindings[role] = scripted[name]
        return bindings

    def runner(
        self, pipeline: str = PIPELINE_RESP, top_k: int | None = None
    ) -> Callable[[str], RunTrace]:
        """A per-question callable for the chosen pipeline (optionally at a
        different k), suitable for evaluate() and sweep_k()."""
        if pipeline not in (PIPELINE_RESP, PIPELINE_STANDARD):
            raise ConfigurationError(f"unknown pipeline: {pipeline!r}")
        pipeline_config = self.config.pipeline
        if top_k is not None:
            pipeline_config = replace(pipeline_config, top_k=top_k)
        run_fn = run_resp if pipeline == PIPELINE_RESP else run_standard_rag

        def run(question: str) -> RunTrace:
            router = BackendRouter(self.fresh_bindings())
            agents = PipelineAgents(
                router,
                self.templates,
                max_input_tokens=pipeline_config.max_input_tokens,
                max_output_tokens=pipeline_config.max_output_tokens,
                generator_temperature=pipeline_config.generator_temperature,
                estimator=whitespace_token_estimate,
            )
            return run_fn(question, self.retriever, agents, pipeline_config)

        return run


def _build_retriever(config: AppConfig) -> Retriever:
    _require(config.index_dir is not None, "no index directory configured (retriever.index_dir)")
    assert config.index_dir is not None
    _require(
        config.index_dir.is_dir(),
        f"index directory not found: {config.index_dir} (run the 'index' command first)",
    )
    index = BM25Index.open(config.index_dir, k1=config.k1, b=config.b)
    if config.retriever_kind == "bm25":
        return index
    _require(
        bool(config.embedding_endpoint) and bool(config.vectors_path),
        "embedding retriever needs retriever.endpoint and retriever.vectors",
    )
    assert config.embedding_endpoint is not None and config.vectors_path is not None
    client = EmbeddingEndpointClient(
        endpoint=config.embedding_endpoint,
        model=config.embedding_model or "default",
        api_key=config.embedding_api_key,
    )
    return EmbeddingRetriever(index.documents, load_vectors(config.vectors_path), client)
