"""Schema-conditioned scoring: contract, reference implementation, remote client.

The reference scorer is a deterministic stand-in for a trained encoder:
classification by character-trigram similarity between the text and each
label, span extraction by trigram similarity between width-bounded
token-aligned candidates and entity descriptions. It exists so the whole
gateway can be exercised end to end without weights; real models plug in
behind the same ScorerBackend contract or over the wire protocol.
"""
from __future__ import annotations

import math
import re
import threading
import time
from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import httpx

from .core import (
    SOURCE_MODEL,
    ClassificationResult,
    GuardError,
    GuardSchema,
    GuardVerdict,
    Span,
    fnv1a_64,
    validate_verdict,
)

VECTOR_DIM = 256
_SOFTMAX_SCALE = 8.0


class RetriableError(GuardError):
    """Transient backend failure: timeout or unreachable endpoint."""


class ProtocolError(GuardError):
    """The backend answered, but the response violates the wire contract."""


class BackendError(GuardError):
    """The backend reported a server-side failure (HTTP >= 500)."""


class EmptySchemaError(GuardError):
    """Scoring requires at least one task or entity type."""


@dataclass(frozen=True)
class ScorerConfig:
    max_span_width: int = 12
    max_sequence_chars: int = 2048
    score_threshold: float = 0.5

    def __post_init__(self) -> None:
        if self.max_span_width < 1:
            raise ValueError("max_span_width must be >= 1")
        if self.max_sequence_chars < 1:
            raise ValueError("max_sequence_chars must be >= 1")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError("score_threshold must be in [0, 1]")


@runtime_checkable
class ScorerBackend(Protocol):
    """One invocation yields all tasks and all entity spans for every text."""

    def score_batch(self, texts: Sequence[str], schema: GuardSchema) -> list[GuardVerdict]:
        ...


def trigram_vector(text: str, dim: int = VECTOR_DIM) -> tuple[int, ...]:
    """Fixed-length character-trigram count vector; deterministic across platforms."""
    padded = f" {text.lower()} "
    counts = [0] * dim
    for i in range(len(padded) - 2):
        counts[fnv1a_64(padded[i : i + 3].encode("utf-8")) % dim] += 1
    return tuple(counts)


def cosine(u: Sequence[int], v: Sequence[int]) -> float:
    dot = sum(a * b for a, b in zip(u, v))
    if dot == 0:
        return 0.0
    nu = math.sqrt(sum(a * a for a in u))
    nv = math.sqrt(sum(b * b for b in v))
    return dot / (nu * nv)


def enumerate_spans(
    token_extents: Sequence[tuple[int, int]], max_width: int
) -> list[tuple[int, int]]:
    """All token-aligned character spans of 1..max_width tokens.

    Extents must be sorted and non-overlapping; for n tokens the result
    has sum over k=1..min(W,n) of (n-k+1) candidates.
    """
    if max_width < 1:
        raise ValueError("max_width must be >= 1")
    n = len(token_extents)
    out = []
    for width in range(1, min(max_width, n) + 1):
        for i in range(n - width + 1):
            out.append((token_extents[i][0], token_extents[i + width - 1][1]))
    return out


def tokenize(text: str) -> list[tuple[int, int]]:
    """Word-character token extents; whitespace and punctuation separate tokens."""
    return [m.span() for m in re.finditer(r"\w+", text)]


def encode_labels(schema: GuardSchema) -> dict[str, tuple[int, ...]]:
    """Deterministic label representations, keyed by role-qualified label name.

    Classification labels are represented by their own text; entity
    labels by label plus description.
    """
    reps: dict[str, tuple[int, ...]] = {}
    for task in schema.classification_tasks:
        for label in task.labels:
            reps[f"task:{task.task_name}:{label}"] = trigram_vector(label)
    for ent in schema.entity_types:
        reps[f"entity:{ent.label}"] = trigram_vector(f"{ent.label} {ent.description}".strip())
    return reps


class LabelCache:
    """Schema-keyed store of encoded label representations.

    A hit returns representations bit-identical to a fresh encoding;
    concurrent readers are safe, writers are exclusive.
    """

    def __init__(self) -> None:
        self._store: dict[int, dict[str, tuple[int, ...]]] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._store)


def cached_label_encode(schema: GuardSchema, cache: LabelCache | None = None) -> dict[str, tuple[int, ...]]:
    """Encode labels, consulting the cache keyed by schema hash when given."""
    if cache is None:
        return encode_labels(schema)
    with cache._lock:
        hit = cache._store.get(schema.schema_hash)
        if hit is not None:
            cache.hits += 1
            return hit
    reps = encode_labels(schema)
    with cache._lock:
        cache.misses += 1
        cache._store[schema.schema_hash] = reps
    return reps


def _softmax(scores: Sequence[float]) -> list[float]:
    peak = max(scores)
    exps = [math.exp(_SOFTMAX_SCALE * (s - peak)) for s in scores]
    total = sum(exps)
    return [e / total for e in exps]


def reference_score(
    text: str,
    schema: GuardSchema,
    cfg: ScorerConfig | None = None,
    cache: LabelCache | None = None,
) -> GuardVerdict:
    """Deterministic trigram-similarity scorer implementing the full contract."""
    if cfg is None:
        cfg = ScorerConfig()
    if not schema.classification_tasks and not schema.entity_types:
        raise EmptySchemaError("schema has no tasks and no entity types")

    started = time.perf_counter()
    truncated = len(text) > cfg.max_sequence_chars
    if truncated:
        text = text[: cfg.max_sequence_chars]

    reps = cached_label_encode(schema, cache)
    text_vec = trigram_vector(text)

    classifications = []
    for task in schema.classification_tasks:
        sims = [cosine(text_vec, reps[f"task:{task.task_name}:{label}"]) for label in task.labels]
        if task.multi_label:
            dist = {label: min(1.0, max(0.0, sim)) for label, sim in zip(task.labels, sims)}
        else:
            probs = _softmax(sims)
            dist = dict(zip(task.labels, probs))
        classifications.append(ClassificationResult.from_distribution(task, dist))

    entities: list[Span] = []
    if schema.entity_types:
        for start, end in enumerate_spans(tokenize(text), cfg.max_span_width):
            span_vec = trigram_vector(text[start:end])
            best_label, best_sim = None, 0.0
            for ent in schema.entity_types:
                sim = cosine(span_vec, reps[f"entity:{ent.label}"])
                if sim > best_sim:
                    best_label, best_sim = ent.label, sim
            if best_label is not None and best_sim > cfg.score_threshold:
                entities.append(Span(start, end, best_label, min(1.0, best_sim), SOURCE_MODEL))

    elapsed_ms = (time.perf_counter() - started) * 1000.0
    return GuardVerdict(tuple(classifications), tuple(entities), elapsed_ms, truncated)


class ReferenceBackend:
    """ScorerBackend facade over reference_score with a shared label cache."""

    def __init__(self, cfg: ScorerConfig | None = None, cache: LabelCache | None = None) -> None:
        self.cfg = cfg or ScorerConfig()
        self.cache = cache if cache is not None else LabelCache()

    def score_batch(self, texts: Sequence[str], schema: GuardSchema) -> list[GuardVerdict]:
        return [reference_score(t, schema, self.cfg, self.cache) for t in texts]


def _verdict_from_wire(item: dict, schema: GuardSchema | None) -> GuardVerdict:
    try:
        classifications = tuple(
            ClassificationResult(
                task_name=c["task"],
                distribution={k: float(v) for k, v in c["distribution"].items()},
                predicted=c["predicted"],
                confidence=float(c["confidence"]),
            )
            for c in item["classifications"]
        )
        entities = tuple(
            Span(int(e["start"]), int(e["end"]), e["label"], float(e["score"]), SOURCE_MODEL)
            for e in item["entities"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed verdict in response: {exc}") from exc
    verdict = GuardVerdict(classifications, entities)
    if schema is not None:
        try:
            validate_verdict(verdict, schema)
        except ValueError as exc:
            raise ProtocolError(f"verdict violates invariants: {exc}") from exc
    return verdict


def remote_score(
    endpoint: str,
    texts: Sequence[str],
    schema: GuardSchema | str,
    timeout: float = 2.0,
    transport: httpx.BaseTransport | None = None,
) -> list[GuardVerdict]:
    """Call a /v1/score server; verdicts validated before being returned.

    `schema` may be a GuardSchema (sent inline, fully validated) or a
    registered schema id string (structural validation only). `transport`
    substitutes the HTTP layer, e.g. for in-process servers.
    """
    if isinstance(schema, GuardSchema):
        payload = {"texts": list(texts), "schema": schema.to_dict()}
    else:
        payload = {"texts": list(texts), "schema_id": schema}
    try:
        with httpx.Client(timeout=timeout, transport=transport) as client:
            resp = client.post(f"{endpoint.rstrip('/')}/v1/score", json=payload)
    except (httpx.TimeoutException, httpx.ConnectError, httpx.NetworkError) as exc:
        raise RetriableError(f"scorer endpoint unreachable: {exc}") from exc
    if resp.status_code >= 500:
        raise BackendError(f"scorer returned HTTP {resp.status_code}")
    if resp.status_code >= 400:
        raise ProtocolError(f"scorer rejected request: HTTP {resp.status_code} {resp.text[:200]}")
    try:
        body = resp.json()
        raw_verdicts = body["verdicts"]
        model_ms = float(body["model_ms"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed score response: {exc}") from exc
    if len(raw_verdicts) != len(texts):
        raise ProtocolError(f"expected {len(texts)} verdicts, got {len(raw_verdicts)}")
    schema_obj = schema if isinstance(schema, GuardSchema) else None
    out = []
    for item in raw_verdicts:
        verdict = _verdict_from_wire(item, schema_obj)
        out.append(
            GuardVerdict(verdict.classifications, verdict.entities, model_ms, verdict.truncated)
        )
    return out


class RemoteBackend:
    """ScorerBackend talking to a /v1/score server."""

    def __init__(
        self,
        endpoint: str,
        timeout: float = 2.0,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.timeout = timeout
        self.transport = transport

    def score_batch(self, texts: Sequence[str], schema: GuardSchema) -> list[GuardVerdict]:
        return remote_score(self.endpoint, texts, schema, self.timeout, self.transport)
