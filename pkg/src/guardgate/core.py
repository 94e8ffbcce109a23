"""Shared domain types: spans, schemas, verdicts, and the span algebra.

Offsets everywhere are Unicode scalar values (Python string indices),
0-based, half-open [start, end). All types are immutable after
construction and safe to share across threads.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

SOURCE_RULE = "rule"
SOURCE_MODEL = "model"
SOURCE_MERGED = "merged"
SOURCE_GOLD = "gold"
_SOURCES = frozenset({SOURCE_RULE, SOURCE_MODEL, SOURCE_MERGED, SOURCE_GOLD})

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3


class GuardError(Exception):
    """Base class for errors raised by this package."""


@dataclass(frozen=True, slots=True)
class Span:
    """A labeled character region: [start, end) with a score and provenance."""

    start: int
    end: int
    label: str
    score: float = 1.0
    source: str = SOURCE_MODEL

    def __post_init__(self) -> None:
        if self.start < 0 or self.end <= self.start:
            raise ValueError(f"bad span bounds [{self.start}, {self.end})")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"span score {self.score} outside [0, 1]")
        if self.source not in _SOURCES:
            raise ValueError(f"unknown span source {self.source!r}")

    def __len__(self) -> int:
        return self.end - self.start


def spans_overlap(a: Span, b: Span) -> bool:
    """True iff the half-open intervals intersect; touching spans do not."""
    return max(a.start, b.start) < min(a.end, b.end)


@dataclass(frozen=True, slots=True)
class TaskSpec:
    """One classification task: an ordered label set, single- or multi-label."""

    task_name: str
    labels: tuple[str, ...]
    multi_label: bool = False

    def __post_init__(self) -> None:
        if not self.labels:
            raise ValueError(f"task {self.task_name!r} has no labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"task {self.task_name!r} has duplicate labels")
        object.__setattr__(self, "labels", tuple(self.labels))


@dataclass(frozen=True, slots=True)
class EntityType:
    """An entity label plus the natural-language description the scorer is conditioned on."""

    label: str
    description: str = ""


@dataclass(frozen=True)
class GuardSchema:
    """The dynamically defined label space conditioning every scorer call."""

    classification_tasks: tuple[TaskSpec, ...] = ()
    entity_types: tuple[EntityType, ...] = ()
    schema_hash: int = field(init=False, default=0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "classification_tasks", tuple(self.classification_tasks))
        object.__setattr__(self, "entity_types", tuple(self.entity_types))
        names = [t.task_name for t in self.classification_tasks]
        if len(set(names)) != len(names):
            raise ValueError("duplicate task names in schema")
        labels = [e.label for e in self.entity_types]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate entity labels in schema")
        object.__setattr__(self, "schema_hash", fnv1a_64(canonical_schema_bytes(self)))

    @property
    def schema_id(self) -> str:
        """Hex form of the content hash, used as the wire identifier."""
        return f"{self.schema_hash:016x}"

    def task(self, name: str) -> TaskSpec:
        for t in self.classification_tasks:
            if t.task_name == name:
                return t
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "classification_tasks": [
                {"task_name": t.task_name, "labels": list(t.labels), "multi_label": t.multi_label}
                for t in self.classification_tasks
            ],
            "entity_types": [
                {"label": e.label, "description": e.description} for e in self.entity_types
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GuardSchema":
        tasks = tuple(
            TaskSpec(t["task_name"], tuple(t["labels"]), bool(t.get("multi_label", False)))
            for t in data.get("classification_tasks", [])
        )
        entities = tuple(
            EntityType(e["label"], e.get("description", "")) for e in data.get("entity_types", [])
        )
        return cls(tasks, entities)


def canonical_schema_bytes(schema: GuardSchema) -> bytes:
    """Deterministic byte encoding of a schema; the hash input.

    Fixed field sequence, task and entity order preserved as given,
    ASCII-escaped JSON so the bytes are independent of the platform
    encoding.
    """
    return json.dumps(
        schema.to_dict(), ensure_ascii=True, separators=(",", ":"), sort_keys=False
    ).encode("utf-8")


def fnv1a_64(data: bytes) -> int:
    """FNV-1a 64-bit hash."""
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class ClassificationResult:
    """One task's label distribution plus the predicted label."""

    task_name: str
    distribution: dict[str, float]
    predicted: str
    confidence: float

    @classmethod
    def from_distribution(cls, task: TaskSpec, distribution: dict[str, float]) -> "ClassificationResult":
        """Build a result applying the argmax / first-listed-label tie-break."""
        # max() keeps the first of equal keys, so iterating labels in schema
        # order gives the first-listed tie-break for free.
        best = max(task.labels, key=lambda lbl: distribution.get(lbl, 0.0))
        return cls(task.task_name, dict(distribution), best, distribution.get(best, 0.0))


@dataclass(frozen=True)
class GuardVerdict:
    """One request's unified output: all task distributions plus entity spans."""

    classifications: tuple[ClassificationResult, ...]
    entities: tuple[Span, ...]
    scorer_latency_ms: float = 0.0
    truncated: bool = False

    def classification(self, task_name: str) -> ClassificationResult:
        for c in self.classifications:
            if c.task_name == task_name:
                return c
        raise KeyError(task_name)


def validate_verdict(verdict: GuardVerdict, schema: GuardSchema, text_len: int | None = None) -> None:
    """Check GuardVerdict invariants against its schema; raises ValueError.

    Exactly one result per task; single-label distributions sum to 1;
    argmax/tie-break consistency; span bounds when text_len is known.
    """
    got = [c.task_name for c in verdict.classifications]
    want = [t.task_name for t in schema.classification_tasks]
    if sorted(got) != sorted(want):
        raise ValueError(f"verdict tasks {got} do not match schema tasks {want}")
    for task in schema.classification_tasks:
        res = verdict.classification(task.task_name)
        for label, p in res.distribution.items():
            if label not in task.labels:
                raise ValueError(f"task {task.task_name!r}: unknown label {label!r}")
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"task {task.task_name!r}: probability {p} outside [0, 1]")
        if not task.multi_label:
            total = sum(res.distribution.values())
            if abs(total - 1.0) > 1e-6:
                raise ValueError(f"task {task.task_name!r}: distribution sums to {total}")
        if res.predicted not in task.labels:
            raise ValueError(f"task {task.task_name!r}: predicted label {res.predicted!r} not in task")
        if not 0.0 <= res.confidence <= 1.0:
            raise ValueError(f"task {task.task_name!r}: confidence {res.confidence} outside [0, 1]")
    known = {e.label for e in schema.entity_types}
    for span in verdict.entities:
        if span.label not in known:
            raise ValueError(f"entity span label {span.label!r} not in schema")
        if text_len is not None and span.end > text_len:
            raise ValueError(f"entity span [{span.start}, {span.end}) exceeds text length {text_len}")


@dataclass(frozen=True, slots=True)
class ModelCard:
    """Name and parameter count, the denominator of the efficiency metric."""

    name: str
    param_count: int

    def __post_init__(self) -> None:
        if self.param_count < 2:
            raise ValueError("param_count must be >= 2")
