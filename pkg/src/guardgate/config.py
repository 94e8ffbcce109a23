"""Application configuration: one JSON file, strict keys, env overrides.

Precedence everywhere is flag > environment > config file > defaults;
the CLI resolves flags, this module resolves the other three.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

from .core import EntityType, GuardError, GuardSchema, TaskSpec
from .servelab import BatchingConfig
from .spanforge import LabelMap, MergePolicy, load_pipeline_config

ENV_ADDR = "GUARD_ADDR"
ENV_MAX_BATCH = "GUARD_MAX_BATCH"
ENV_FLUSH_TIMEOUT_MS = "GUARD_FLUSH_TIMEOUT_MS"

DEFAULT_SCHEMA = GuardSchema(
    classification_tasks=(TaskSpec("safety", ("safe", "unsafe"), False),),
    entity_types=(
        EntityType("EMAIL", "адрес электронной почты"),
        EntityType("PHONE_NUMBER", "номер телефона"),
        EntityType("BANK_CARD_NUMBER", "номер банковской карты"),
        EntityType("CVC", "проверочный код банковской карты"),
        EntityType("INN", "идентификационный номер налогоплательщика"),
        EntityType("KPP", "код причины постановки на учет"),
        EntityType("OGRN", "основной государственный регистрационный номер"),
        EntityType("OGRNIP", "регистрационный номер индивидуального предпринимателя"),
        EntityType("SNILS", "страховой номер индивидуального лицевого счета"),
        EntityType("PASSPORT_NUMBER", "серия и номер паспорта"),
        EntityType("TOKEN", "секретный ключ или токен доступа"),
        EntityType("NAME", "имя и фамилия человека"),
        EntityType("ADDRESS", "почтовый адрес места жительства"),
    ),
)


class ConfigError(GuardError):
    """The config file is malformed, has unknown keys, or points nowhere."""


@dataclass(frozen=True)
class AppConfig:
    registry_path: str | None = None
    label_map: LabelMap = field(default_factory=LabelMap.default)
    merge_policy: MergePolicy = field(default_factory=MergePolicy)
    scorer_backend: str = "reference"
    remote_endpoint: str | None = None
    cascade_tau: float = 0.9
    safety_task_name: str = "safety"
    batching: BatchingConfig = field(default_factory=BatchingConfig)
    bench_path: str | None = None
    addr: str = "127.0.0.1:8080"

    def __post_init__(self) -> None:
        if self.scorer_backend not in ("reference", "remote"):
            raise ConfigError(f"unknown scorer backend {self.scorer_backend!r}")
        if self.scorer_backend == "remote" and not self.remote_endpoint:
            raise ConfigError("remote scorer backend requires an endpoint")
        if not 0.0 <= self.cascade_tau:
            raise ConfigError("cascade tau must be >= 0")


_TOP_KEYS = {"registry", "pipeline", "scorer", "cascade", "batching", "bench", "addr"}
_SCORER_KEYS = {"backend", "endpoint"}
_CASCADE_KEYS = {"tau", "safety_task"}
_BATCHING_KEYS = {"max_batch", "flush_timeout_ms", "queue_capacity"}


def _require_file(path: str, what: str) -> str:
    if not os.path.isfile(path):
        raise ConfigError(f"{what} file does not exist: {path}")
    return path


def load_config(path: str | None) -> AppConfig:
    """Build an AppConfig from a JSON file plus environment overrides."""
    cfg = AppConfig()
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        unknown = set(raw) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")

        updates: dict = {}
        if "registry" in raw:
            updates["registry_path"] = _require_file(raw["registry"], "detector registry")
        if "pipeline" in raw:
            pipeline_path = _require_file(raw["pipeline"], "pipeline config")
            updates["label_map"], updates["merge_policy"] = load_pipeline_config(pipeline_path)
        if "scorer" in raw:
            section = raw["scorer"]
            unknown = set(section) - _SCORER_KEYS
            if unknown:
                raise ConfigError(f"{path}: unknown scorer keys {sorted(unknown)}")
            updates["scorer_backend"] = section.get("backend", "reference")
            updates["remote_endpoint"] = section.get("endpoint")
        if "cascade" in raw:
            section = raw["cascade"]
            unknown = set(section) - _CASCADE_KEYS
            if unknown:
                raise ConfigError(f"{path}: unknown cascade keys {sorted(unknown)}")
            if "tau" in section:
                updates["cascade_tau"] = float(section["tau"])
            if "safety_task" in section:
                updates["safety_task_name"] = section["safety_task"]
        if "batching" in raw:
            section = raw["batching"]
            unknown = set(section) - _BATCHING_KEYS
            if unknown:
                raise ConfigError(f"{path}: unknown batching keys {sorted(unknown)}")
            base = BatchingConfig()
            updates["batching"] = BatchingConfig(
                max_batch=int(section.get("max_batch", base.max_batch)),
                flush_timeout=float(section.get("flush_timeout_ms", base.flush_timeout * 1000.0))
                / 1000.0,
                queue_capacity=int(section.get("queue_capacity", base.queue_capacity)),
            )
        if "bench" in raw:
            updates["bench_path"] = raw["bench"]
        if "addr" in raw:
            updates["addr"] = raw["addr"]
        cfg = replace(cfg, **updates)

    env_addr = os.environ.get(ENV_ADDR)
    if env_addr:
        cfg = replace(cfg, addr=env_addr)
    env_batch = os.environ.get(ENV_MAX_BATCH)
    env_flush = os.environ.get(ENV_FLUSH_TIMEOUT_MS)
    if env_batch or env_flush:
        try:
            cfg = replace(
                cfg,
                batching=BatchingConfig(
                    max_batch=int(env_batch) if env_batch else cfg.batching.max_batch,
                    flush_timeout=float(env_flush) / 1000.0 if env_flush else cfg.batching.flush_timeout,
                    queue_capacity=cfg.batching.queue_capacity,
                ),
            )
        except ValueError as exc:
            raise ConfigError(
                f"bad {ENV_MAX_BATCH}/{ENV_FLUSH_TIMEOUT_MS} value: {exc}"
            ) from exc
    return cfg
