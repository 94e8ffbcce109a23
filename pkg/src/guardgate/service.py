"""HTTP service: scorer wire protocol plus the batched guard endpoints.

/v1/score runs the scorer synchronously (the reference server the
adapter contract suite targets); /v1/guard and /v1/guard:batch go
through the dynamic batcher and the full rule/model pipeline.
"""
from __future__ import annotations

import asyncio
import time

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, ConfigDict, Field

from .config import DEFAULT_SCHEMA, AppConfig
from .core import GuardSchema, GuardVerdict
from .rulepii import default_registry, load_registry
from .scorer import EmptySchemaError, ReferenceBackend, RemoteBackend, ScorerBackend
from .servelab import DynamicBatcher, QueueFullError, UnknownSchemaError
from .spanforge import run_pipeline


class ScoreRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True, protected_namespaces=())

    texts: list[str]
    schema_: dict | None = Field(default=None, alias="schema")
    schema_id: str | None = None


class ClassificationModel(BaseModel):
    task: str
    distribution: dict[str, float]
    predicted: str
    confidence: float


class EntityModel(BaseModel):
    start: int
    end: int
    label: str
    score: float


class VerdictModel(BaseModel):
    classifications: list[ClassificationModel]
    entities: list[EntityModel]


class ScoreResponse(BaseModel):
    model_config = ConfigDict(protected_namespaces=())

    verdicts: list[VerdictModel]
    model_ms: float


class SchemaRegisterResponse(BaseModel):
    schema_id: str


class GuardRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True, protected_namespaces=())

    text: str
    schema_: dict | None = Field(default=None, alias="schema")
    schema_id: str | None = None


class GuardBatchRequest(BaseModel):
    model_config = ConfigDict(populate_by_name=True, protected_namespaces=())

    texts: list[str]
    schema_: dict | None = Field(default=None, alias="schema")
    schema_id: str | None = None


class GuardResponse(BaseModel):
    classifications: list[ClassificationModel]
    entities: list[EntityModel]
    latency_ms: float


class GuardBatchResponse(BaseModel):
    verdicts: list[VerdictModel]
    latency_ms: float


def _verdict_model(verdict: GuardVerdict) -> VerdictModel:
    return VerdictModel(
        classifications=[
            ClassificationModel(
                task=c.task_name,
                distribution=dict(c.distribution),
                predicted=c.predicted,
                confidence=c.confidence,
            )
            for c in verdict.classifications
        ],
        entities=[
            EntityModel(start=s.start, end=s.end, label=s.label, score=s.score)
            for s in verdict.entities
        ],
    )


def create_app(
    config: AppConfig | None = None,
    backend: ScorerBackend | None = None,
    start_worker: bool = True,
) -> FastAPI:
    """Build the service; the batching worker starts with the app.

    `backend` overrides the configured scorer, which tests use to plug
    in stubs without a config file.
    """
    cfg = config or AppConfig()
    if backend is None:
        if cfg.scorer_backend == "remote":
            backend = RemoteBackend(cfg.remote_endpoint)
        else:
            backend = ReferenceBackend()
    registry = load_registry(cfg.registry_path) if cfg.registry_path else default_registry()
    batcher = DynamicBatcher(backend, cfg.batching)
    default_schema_id = batcher.register_schema(DEFAULT_SCHEMA)
    if start_worker:
        batcher.start()

    app = FastAPI(title="guardgate")
    app.state.config = cfg
    app.state.backend = backend
    app.state.batcher = batcher
    app.state.registry = registry
    app.state.default_schema_id = default_schema_id

    def resolve_schema(req: ScoreRequest) -> GuardSchema:
        if (req.schema_ is None) == (req.schema_id is None):
            raise HTTPException(400, "provide exactly one of schema or schema_id")
        if req.schema_ is not None:
            try:
                return GuardSchema.from_dict(req.schema_)
            except (KeyError, TypeError, ValueError) as exc:
                raise HTTPException(400, f"bad schema: {exc}") from exc
        schema = batcher.schema_for(req.schema_id)
        if schema is None:
            raise HTTPException(400, f"unknown schema_id {req.schema_id!r}")
        return schema

    def guard_schema_id(req: GuardRequest | GuardBatchRequest) -> str:
        # guard requests follow the scorer wire protocol: exactly one of an
        # inline schema or a registered id. Inline schemas are registered on
        # the fly so the batcher can key pending work by id.
        if (req.schema_ is None) == (req.schema_id is None):
            raise HTTPException(400, "provide exactly one of schema or schema_id")
        if req.schema_id is not None:
            return req.schema_id
        try:
            parsed = GuardSchema.from_dict(req.schema_)
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(400, f"bad schema: {exc}") from exc
        if not parsed.classification_tasks and not parsed.entity_types:
            raise HTTPException(400, "schema has no tasks and no entity types")
        return batcher.register_schema(parsed)

    @app.get("/healthz", response_class=PlainTextResponse)
    def healthz() -> str:
        return "ok"

    @app.post("/v1/score", response_model=ScoreResponse)
    def score(req: ScoreRequest) -> ScoreResponse:
        schema = resolve_schema(req)
        started = time.perf_counter()
        try:
            verdicts = backend.score_batch(req.texts, schema)
        except EmptySchemaError as exc:
            raise HTTPException(400, str(exc)) from exc
        except Exception as exc:
            raise HTTPException(500, f"scorer failure: {exc}") from exc
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        return ScoreResponse(verdicts=[_verdict_model(v) for v in verdicts], model_ms=elapsed_ms)

    @app.post("/v1/schemas", response_model=SchemaRegisterResponse)
    def register_schema(schema: dict) -> SchemaRegisterResponse:
        try:
            parsed = GuardSchema.from_dict(schema)
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(400, f"bad schema: {exc}") from exc
        if not parsed.classification_tasks and not parsed.entity_types:
            # from_dict tolerates unknown keys, so junk parses as empty
            raise HTTPException(400, "schema has no tasks and no entity types")
        return SchemaRegisterResponse(schema_id=batcher.register_schema(parsed))

    async def submit_one(text: str, schema_id: str) -> tuple[GuardVerdict, float]:
        try:
            future = batcher.submit(text, schema_id)
        except UnknownSchemaError as exc:
            raise HTTPException(400, str(exc)) from exc
        except QueueFullError as exc:
            raise HTTPException(429, str(exc)) from exc
        try:
            served = await asyncio.wrap_future(future)
        except Exception as exc:
            raise HTTPException(500, f"scorer failure: {exc}") from exc
        verdict = served.verdict
        spans = run_pipeline(
            text, list(verdict.entities), registry, cfg.label_map, cfg.merge_policy
        )
        final = GuardVerdict(
            verdict.classifications, tuple(spans), verdict.scorer_latency_ms, verdict.truncated
        )
        return final, served.latency_ms

    @app.post("/v1/guard", response_model=GuardResponse)
    async def guard(req: GuardRequest) -> GuardResponse:
        verdict, latency_ms = await submit_one(req.text, guard_schema_id(req))
        model = _verdict_model(verdict)
        return GuardResponse(
            classifications=model.classifications,
            entities=model.entities,
            latency_ms=latency_ms,
        )

    @app.post("/v1/guard:batch", response_model=GuardBatchResponse)
    async def guard_batch(req: GuardBatchRequest) -> GuardBatchResponse:
        started = time.perf_counter()
        schema_id = guard_schema_id(req)
        results = await asyncio.gather(
            *(submit_one(text, schema_id) for text in req.texts)
        )
        elapsed_ms = (time.perf_counter() - started) * 1000.0
        return GuardBatchResponse(
            verdicts=[_verdict_model(v) for v, _ in results], latency_ms=elapsed_ms
        )

    @app.get("/metrics")
    def metrics() -> dict:
        return batcher.metrics_snapshot().to_dict()

    return app
