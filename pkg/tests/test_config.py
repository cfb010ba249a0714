import json

import pytest
import yaml

from respqa.config import (
    ENV_ENDPOINT,
    ENV_MODEL,
    AppRuntime,
    CliOverrides,
    load_app_config,
)
from respqa.errors import ConfigurationError
from respqa.llm import HttpChatBackend, ScriptedBackend

from helpers import film_corpus


@pytest.fixture
def script_path(tmp_path):
    path = tmp_path / "rules.jsonl"
    path.write_text(json.dumps({"match": "", "response": "ok"}) + "\n")
    return path


@pytest.fixture
def index_dir(tmp_path):
    from respqa.retrieval import build_index

    out = tmp_path / "index"
    build_index(film_corpus(), index_dir=out)
    return out


def write_yaml(tmp_path, data):
    path = tmp_path / "config.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


class TestPrecedence:
    def test_env_endpoint_creates_default_backend(self, monkeypatch):
        monkeypatch.setenv(ENV_ENDPOINT, "http://env.example/v1")
        monkeypatch.setenv(ENV_MODEL, "env-model")
        config = load_app_config(None)
        assert config.backends["default"].endpoint == "http://env.example/v1"
        assert config.backends["default"].model == "env-model"
        assert set(config.roles) == {"reasoner", "summarizer", "generator"}

    def test_flag_beats_env(self, monkeypatch):
        monkeypatch.setenv(ENV_ENDPOINT, "http://env.example/v1")
        config = load_app_config(None, CliOverrides(endpoint="http://flag.example/v1"))
        assert config.backends["default"].endpoint == "http://flag.example/v1"

    def test_env_fills_file_backend_endpoint(self, tmp_path, monkeypatch):
        monkeypatch.setenv(ENV_ENDPOINT, "http://env.example/v1")
        path = write_yaml(tmp_path, {"backends": {"main": {"kind": "http"}}})
        config = load_app_config(path)
        assert config.backends["main"].endpoint == "http://env.example/v1"

    def test_script_flag_overrides_everything(self, tmp_path, script_path, monkeypatch):
        monkeypatch.setenv(ENV_ENDPOINT, "http://env.example/v1")
        path = write_yaml(
            tmp_path,
            {"backends": {"main": {"kind": "http", "endpoint": "http://file.example/v1"}}},
        )
        config = load_app_config(path, CliOverrides(script=str(script_path)))
        assert config.roles == {role: "scripted" for role in config.roles}
        assert config.backends["scripted"].kind == "scripted"

    def test_flag_overrides_pipeline_settings(self, tmp_path, script_path):
        path = write_yaml(
            tmp_path,
            {
                "pipeline": {"top_k": 7, "max_iterations": 5},
                "backends": {"mock": {"kind": "scripted", "script": str(script_path)}},
            },
        )
        config = load_app_config(path, CliOverrides(top_k=2, max_iterations=1))
        assert config.pipeline.top_k == 2
        assert config.pipeline.max_iterations == 1

    def test_no_backend_at_all_is_startup_error(self, tmp_path, monkeypatch):
        monkeypatch.delenv(ENV_ENDPOINT, raising=False)
        path = write_yaml(tmp_path, {"pipeline": {"top_k": 7}})
        with pytest.raises(ConfigurationError, match="backend"):
            load_app_config(path)

    def test_api_key_env_resolved(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MY_SECRET", "s3cret")
        path = write_yaml(
            tmp_path,
            {
                "backends": {
                    "main": {
                        "kind": "http",
                        "endpoint": "http://x/v1",
                        "api_key_env": "MY_SECRET",
                    }
                }
            },
        )
        assert load_app_config(path).backends["main"].api_key == "s3cret"


class TestValidation:
    def test_http_backend_without_endpoint(self, tmp_path, monkeypatch):
        monkeypatch.delenv(ENV_ENDPOINT, raising=False)
        path = write_yaml(tmp_path, {"backends": {"main": {"kind": "http"}}})
        with pytest.raises(ConfigurationError, match="endpoint"):
            load_app_config(path)

    def test_role_bound_to_undefined_backend(self, tmp_path, script_path):
        path = write_yaml(
            tmp_path,
            {
                "backends": {"mock": {"kind": "scripted", "script": str(script_path)}},
                "roles": {"reasoner": "mock", "summarizer": "ghost", "generator": "mock"},
            },
        )
        with pytest.raises(ConfigurationError, match="ghost"):
            load_app_config(path)

    def test_multiple_backends_require_roles(self, tmp_path, script_path):
        path = write_yaml(
            tmp_path,
            {
                "backends": {
                    "m1": {"kind": "scripted", "script": str(script_path)},
                    "m2": {"kind": "scripted", "script": str(script_path)},
                }
            },
        )
        with pytest.raises(ConfigurationError, match="roles"):
            load_app_config(path)

    def test_missing_script_file(self, tmp_path):
        path = write_yaml(
            tmp_path,
            {"backends": {"mock": {"kind": "scripted", "script": str(tmp_path / "gone.jsonl")}}},
        )
        with pytest.raises(ConfigurationError, match="not found"):
            load_app_config(path)

    def test_unknown_retriever_kind(self, tmp_path, script_path):
        path = write_yaml(
            tmp_path,
            {
                "retriever": {"kind": "dense-ann"},
                "backends": {"mock": {"kind": "scripted", "script": str(script_path)}},
            },
        )
        with pytest.raises(ConfigurationError, match="dense-ann"):
            load_app_config(path)

    def test_bad_parallelism(self, tmp_path, script_path):
        path = write_yaml(
            tmp_path,
            {
                "eval": {"parallelism": 0},
                "backends": {"mock": {"kind": "scripted", "script": str(script_path)}},
            },
        )
        with pytest.raises(ConfigurationError, match="parallelism"):
            load_app_config(path)

    def test_missing_templates_dir(self, tmp_path, script_path):
        path = write_yaml(
            tmp_path,
            {
                "templates_dir": str(tmp_path / "ghost-templates"),
                "backends": {"mock": {"kind": "scripted", "script": str(script_path)}},
            },
        )
        with pytest.raises(ConfigurationError, match="templates"):
            load_app_config(path)


class TestAppRuntime:
    def make_config(self, tmp_path, script_path, index_dir):
        path = write_yaml(
            tmp_path,
            {
                "retriever": {"kind": "bm25", "index_dir": str(index_dir)},
                "backends": {"mock": {"kind": "scripted", "script": str(script_path)}},
                "roles": {"reasoner": "mock", "summarizer": "mock", "generator": "mock"},
            },
        )
        return load_app_config(path)

    def test_scripted_backends_fresh_per_binding_call(self, tmp_path, script_path, index_dir):
        runtime = AppRuntime(self.make_config(tmp_path, script_path, index_dir))
        first = runtime.fresh_bindings()
        second = runtime.fresh_bindings()
        assert isinstance(first["reasoner"], ScriptedBackend)
        assert first["reasoner"] is not second["reasoner"]
        # within one run, roles sharing a backend name share the conversation
        assert first["reasoner"] is first["generator"]

    def test_http_backends_shared(self, tmp_path, index_dir, monkeypatch):
        monkeypatch.setenv(ENV_ENDPOINT, "http://env.example/v1")
        config = load_app_config(None, CliOverrides(index_dir=str(index_dir)))
        runtime = AppRuntime(config)
        first = runtime.fresh_bindings()
        second = runtime.fresh_bindings()
        assert isinstance(first["reasoner"], HttpChatBackend)
        assert first["reasoner"] is second["reasoner"]

    def test_runner_rejects_unknown_pipeline(self, tmp_path, script_path, index_dir):
        runtime = AppRuntime(self.make_config(tmp_path, script_path, index_dir))
        with pytest.raises(ConfigurationError, match="pipeline"):
            runtime.runner(pipeline="fancy")
