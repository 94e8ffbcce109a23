"""Config file parsing, environment overrides, precedence."""

import json

import pytest

from guardgate.config import (
    DEFAULT_SCHEMA,
    AppConfig,
    ConfigError,
    load_config,
)


class TestDefaults:
    def test_no_file(self):
        cfg = load_config(None)
        assert cfg.scorer_backend == "reference"
        assert cfg.addr == "127.0.0.1:8080"
        assert cfg.batching.max_batch == 64
        assert cfg.cascade_tau == 0.9

    def test_default_schema_has_safety_and_13_entities(self):
        tasks = [t.task_name for t in DEFAULT_SCHEMA.classification_tasks]
        assert tasks == ["safety"]
        assert DEFAULT_SCHEMA.task("safety").labels == ("safe", "unsafe")
        assert len(DEFAULT_SCHEMA.entity_types) == 13
        assert all(e.description for e in DEFAULT_SCHEMA.entity_types)


class TestFileLoading:
    def test_full_file(self, tmp_path):
        registry = tmp_path / "registry.json"
        registry.write_text(json.dumps([{"label": "EMAIL", "pattern": "x@y"}]))
        payload = {
            "registry": str(registry),
            "scorer": {"backend": "remote", "endpoint": "http://scorer:9000"},
            "cascade": {"tau": 0.75, "safety_task": "safety"},
            "batching": {"max_batch": 16, "flush_timeout_ms": 10, "queue_capacity": 100},
            "addr": "0.0.0.0:9999",
        }
        path = tmp_path / "app.json"
        path.write_text(json.dumps(payload))
        cfg = load_config(str(path))
        assert cfg.scorer_backend == "remote"
        assert cfg.remote_endpoint == "http://scorer:9000"
        assert cfg.cascade_tau == 0.75
        assert cfg.batching.max_batch == 16
        assert cfg.batching.flush_timeout == pytest.approx(0.010)
        assert cfg.addr == "0.0.0.0:9999"
        assert cfg.registry_path == str(registry)

    def test_unknown_top_key(self, tmp_path):
        path = tmp_path / "app.json"
        path.write_text(json.dumps({"shenanigans": 1}))
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_unknown_nested_key(self, tmp_path):
        path = tmp_path / "app.json"
        path.write_text(json.dumps({"batching": {"max_batch": 8, "burst": 2}}))
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_missing_referenced_file(self, tmp_path):
        path = tmp_path / "app.json"
        path.write_text(json.dumps({"registry": str(tmp_path / "absent.json")}))
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_remote_backend_requires_endpoint(self):
        with pytest.raises(ConfigError):
            AppConfig(scorer_backend="remote")

    def test_unknown_backend_rejected(self):
        with pytest.raises(ConfigError):
            AppConfig(scorer_backend="quantum")

    def test_pipeline_file(self, tmp_path):
        pipeline = tmp_path / "pipeline.json"
        pipeline.write_text(json.dumps({"merge_policy": {"max_gap": 5}}))
        path = tmp_path / "app.json"
        path.write_text(json.dumps({"pipeline": str(pipeline)}))
        cfg = load_config(str(path))
        assert cfg.merge_policy.max_gap == 5


class TestEnvOverrides:
    def test_addr(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GUARD_ADDR", "10.0.0.5:7000")
        assert load_config(None).addr == "10.0.0.5:7000"

    def test_env_beats_file(self, tmp_path, monkeypatch):
        path = tmp_path / "app.json"
        path.write_text(json.dumps({"addr": "1.2.3.4:1111"}))
        monkeypatch.setenv("GUARD_ADDR", "5.6.7.8:2222")
        assert load_config(str(path)).addr == "5.6.7.8:2222"

    def test_batching_env(self, monkeypatch):
        monkeypatch.setenv("GUARD_MAX_BATCH", "8")
        monkeypatch.setenv("GUARD_FLUSH_TIMEOUT_MS", "15")
        cfg = load_config(None)
        assert cfg.batching.max_batch == 8
        assert cfg.batching.flush_timeout == pytest.approx(0.015)

    def test_bad_env_value(self, monkeypatch):
        monkeypatch.setenv("GUARD_MAX_BATCH", "many")
        with pytest.raises(ConfigError):
            load_config(None)
