"""Dynamic batching engine, latency metrics, and load generation.

Batch formation is a pure function over (queue snapshot, now, config),
so the policy invariants are testable with a recorded clock and no
threads; the threaded engine drives the same function with the real
clock. One worker serializes dispatch per backend, which keeps FIFO
order provable.
"""
from __future__ import annotations

import asyncio
import itertools
import math
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import httpx

from .core import ClassificationResult, GuardError, GuardSchema, GuardVerdict
from .scorer import BackendError, ScorerBackend

from concurrent.futures import Future


class QueueFullError(GuardError):
    """Submission rejected because the queue is at capacity (429-class)."""


class UnknownSchemaError(GuardError):
    """Submission referenced a schema_id that was never registered (400-class)."""


@dataclass(frozen=True)
class BatchingConfig:
    max_batch: int = 64
    flush_timeout: float = 0.050
    queue_capacity: int = 4096

    def __post_init__(self) -> None:
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        if self.flush_timeout <= 0:
            raise ValueError("flush_timeout must be positive")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")


@dataclass(frozen=True)
class ServingMetrics:
    total_requests: int
    failed_requests: int
    rps: float
    p50: float | None
    p95: float | None
    p99: float | None
    error_rate: float
    counters: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "total_requests": self.total_requests,
            "failed_requests": self.failed_requests,
            "rps": self.rps,
            "p50": self.p50,
            "p95": self.p95,
            "p99": self.p99,
            "error_rate": self.error_rate,
            "counters": dict(self.counters),
        }


def percentile(samples: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p*n)-th smallest sample, 1-based."""
    if not samples:
        raise ValueError("percentile of empty samples")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must be in (0, 1], got {p}")
    x = p * len(samples)
    nearest = round(x)
    # float products like 0.07*100 land just above the true integer rank
    rank = nearest if abs(x - nearest) < 1e-9 * max(1.0, x) else math.ceil(x)
    return sorted(samples)[rank - 1]


@dataclass(frozen=True)
class ServedResult:
    verdict: GuardVerdict
    latency_ms: float


@dataclass
class _Pending:
    seq: int
    text: str
    schema: GuardSchema
    arrival: float
    future: Future


@dataclass(frozen=True)
class BatchRecord:
    """Observer payload: when a batch was cut and what it contained."""

    dispatched_at: float
    arrivals: tuple[float, ...]

    @property
    def size(self) -> int:
        return len(self.arrivals)


def form_batches(
    pending: Sequence, now: float, cfg: BatchingConfig
) -> tuple[list[list], float | None]:
    """Decide which batches to cut from a FIFO queue snapshot.

    Items need an `arrival` attribute. Full batches are cut first; a
    partial batch is cut only once the oldest item's age reaches
    flush_timeout. Returns (batches, next flush deadline or None).
    """
    items = list(pending)
    batches: list[list] = []
    i = 0
    n = len(items)
    while n - i >= cfg.max_batch:
        batches.append(items[i : i + cfg.max_batch])
        i += cfg.max_batch
    # compare against arrival + timeout, the exact expression returned as
    # the deadline, so pumping at the deadline always flushes
    if i < n and now >= items[i].arrival + cfg.flush_timeout:
        batches.append(items[i:n])
        i = n
    deadline = items[i].arrival + cfg.flush_timeout if i < n else None
    return batches, deadline


class DynamicBatcher:
    """Multi-producer queue in front of one scorer backend.

    submit() is safe from any thread; a single worker cuts batches and
    dispatches them in arrival order. All counters are exact: every
    submission ends up as exactly one of succeeded, rejected, failed,
    or client_error.
    """

    def __init__(
        self,
        backend: ScorerBackend,
        cfg: BatchingConfig | None = None,
        clock: Callable[[], float] = time.monotonic,
        observer: Callable[[BatchRecord], None] | None = None,
    ) -> None:
        self._backend = backend
        self._cfg = cfg or BatchingConfig()
        self._clock = clock
        self._observer = observer
        self._cond = threading.Condition()
        self._queue: deque[_Pending] = deque()
        self._schemas: dict[str, GuardSchema] = {}
        self._seq = itertools.count()
        self._running = False
        self._worker: threading.Thread | None = None
        self._started_at: float | None = None
        self._total = 0
        self._succeeded = 0
        self._rejected = 0
        self._scorer_failures = 0
        self._client_errors = 0
        self._latencies: list[float] = []

    @property
    def cfg(self) -> BatchingConfig:
        return self._cfg

    def register_schema(self, schema: GuardSchema) -> str:
        with self._cond:
            self._schemas[schema.schema_id] = schema
            return schema.schema_id

    def schema_for(self, schema_id: str) -> GuardSchema | None:
        with self._cond:
            return self._schemas.get(schema_id)

    def submit(self, text: str, schema_id: str) -> Future:
        """Enqueue one request; the future resolves to a ServedResult."""
        with self._cond:
            self._total += 1
            schema = self._schemas.get(schema_id)
            if schema is None:
                self._client_errors += 1
                raise UnknownSchemaError(f"schema_id {schema_id!r} is not registered")
            if len(self._queue) >= self._cfg.queue_capacity:
                self._rejected += 1
                raise QueueFullError(f"queue at capacity {self._cfg.queue_capacity}")
            now = self._clock()
            if self._started_at is None:
                self._started_at = now
            future: Future = Future()
            self._queue.append(_Pending(next(self._seq), text, schema, now, future))
            self._cond.notify_all()
            return future

    def pump(self, now: float | None = None, flush_all: bool = False) -> int:
        """Run one scheduling pass synchronously; returns requests served.

        This is the single-threaded face of the engine: tests drive it
        with a recorded clock, and the worker thread calls it with the
        real one.
        """
        with self._cond:
            if now is None:
                now = self._clock()
            if flush_all and self._queue:
                items = list(self._queue)
                step = self._cfg.max_batch
                batches = [items[i : i + step] for i in range(0, len(items), step)]
            else:
                batches, _ = form_batches(self._queue, now, self._cfg)
            for batch in batches:
                for _ in batch:
                    self._queue.popleft()
        served = 0
        for batch in batches:
            if self._observer is not None:
                self._observer(BatchRecord(now, tuple(p.arrival for p in batch)))
            served += self._dispatch(batch)
        return served

    def next_deadline(self, now: float | None = None) -> float | None:
        """Earliest time a pump pass would cut a batch, or None if idle.

        A queue already holding a full batch is due immediately (returns
        `now`); otherwise the oldest item's flush deadline is returned.
        """
        with self._cond:
            if now is None:
                now = self._clock()
            if not self._queue:
                return None
            if len(self._queue) >= self._cfg.max_batch:
                return now
            return self._queue[0].arrival + self._cfg.flush_timeout

    def _dispatch(self, batch: list[_Pending]) -> int:
        # Batches may interleave schemas; the scorer contract is one
        # schema per call, so split into per-schema groups in FIFO order.
        groups: dict[str, list[_Pending]] = {}
        for p in batch:
            groups.setdefault(p.schema.schema_id, []).append(p)
        served = 0
        for group in groups.values():
            try:
                verdicts = self._backend.score_batch([p.text for p in group], group[0].schema)
                if len(verdicts) != len(group):
                    raise BackendError(
                        f"backend returned {len(verdicts)} verdicts for {len(group)} texts"
                    )
            except Exception as exc:
                with self._cond:
                    self._scorer_failures += len(group)
                for p in group:
                    p.future.set_exception(
                        exc if isinstance(exc, GuardError) else BackendError(str(exc))
                    )
                continue
            done = self._clock()
            with self._cond:
                self._succeeded += len(group)
                for p in group:
                    self._latencies.append((done - p.arrival) * 1000.0)
            for p, verdict in zip(group, verdicts):
                p.future.set_result(ServedResult(verdict, (done - p.arrival) * 1000.0))
            served += len(group)
        return served

    def _run(self) -> None:
        while True:
            with self._cond:
                if not self._running and not self._queue:
                    return
                now = self._clock()
                batches, deadline = form_batches(self._queue, now, self._cfg)
                if not batches and self._running:
                    timeout = None if deadline is None else max(0.0, deadline - now)
                    self._cond.wait(timeout)
                    continue
                if not batches and self._queue:
                    # shutting down: flush the remainder without waiting
                    batches = [list(self._queue)]
                for batch in batches:
                    for _ in batch:
                        self._queue.popleft()
            for batch in batches:
                if self._observer is not None:
                    self._observer(BatchRecord(now, tuple(p.arrival for p in batch)))
                self._dispatch(batch)

    def start(self) -> None:
        with self._cond:
            if self._running:
                return
            self._running = True
        self._worker = threading.Thread(target=self._run, name="batcher", daemon=True)
        self._worker.start()

    def stop(self) -> None:
        """Stop accepting the worker loop; drains the queue before exit."""
        with self._cond:
            self._running = False
            self._cond.notify_all()
        if self._worker is not None:
            self._worker.join()
            self._worker = None

    def note_client_error(self) -> None:
        """Count a request rejected before submission (bad payload, etc.)."""
        with self._cond:
            self._total += 1
            self._client_errors += 1

    def metrics_snapshot(self) -> ServingMetrics:
        """Consistent counters plus nearest-rank latency percentiles."""
        with self._cond:
            latencies = list(self._latencies)
            total = self._total
            succeeded = self._succeeded
            rejected = self._rejected
            scorer_failures = self._scorer_failures
            client_errors = self._client_errors
            started_at = self._started_at
        failed = rejected + scorer_failures
        elapsed = (self._clock() - started_at) if started_at is not None else 0.0
        rps = succeeded / elapsed if elapsed > 0 else 0.0
        p50 = percentile(latencies, 0.50) if latencies else None
        p95 = percentile(latencies, 0.95) if latencies else None
        p99 = percentile(latencies, 0.99) if latencies else None
        return ServingMetrics(
            total_requests=total,
            failed_requests=failed,
            rps=rps,
            p50=p50,
            p95=p95,
            p99=p99,
            error_rate=failed / total if total else 0.0,
            counters={
                "succeeded": succeeded,
                "rejected": rejected,
                "scorer_failures": scorer_failures,
                "client_errors": client_errors,
            },
        )


class FixedLatencyStub:
    """Scorer stub: one fixed sleep per batch, uniform verdicts.

    Emulates a constant-cost forward pass so batching gains are
    measurable without any hardware claims.
    """

    def __init__(self, delay: float = 0.010, sleep: Callable[[float], None] = time.sleep) -> None:
        self.delay = delay
        self._sleep = sleep
        self.calls = 0
        self.texts_scored = 0

    def score_batch(self, texts: Sequence[str], schema: GuardSchema) -> list[GuardVerdict]:
        self._sleep(self.delay)
        self.calls += 1
        self.texts_scored += len(texts)
        classifications = tuple(
            ClassificationResult.from_distribution(
                task, {label: 1.0 / len(task.labels) for label in task.labels}
            )
            for task in schema.classification_tasks
        )
        return [GuardVerdict(classifications, (), self.delay * 1000.0) for _ in texts]


async def _load_async(
    endpoint: str,
    mode: str,
    target_rps: float | None,
    concurrency: int | None,
    duration: float,
    schema_id: str,
    texts: Sequence[str],
    warmup: float,
    timeout: float,
    transport: httpx.AsyncBaseTransport | None,
) -> ServingMetrics:
    samples: list[tuple[float, float, bool]] = []  # (send time, latency ms, ok)
    cycle = itertools.cycle(texts)
    async with httpx.AsyncClient(
        base_url=endpoint, timeout=timeout, transport=transport
    ) as client:
        try:
            health = await client.get("/healthz")
        except httpx.HTTPError as exc:
            raise GuardError(f"endpoint unreachable: {exc}") from exc
        if health.status_code != 200:
            raise GuardError(f"endpoint unhealthy: HTTP {health.status_code}")

        start = time.monotonic()
        end = start + duration

        async def one_request() -> None:
            sent = time.monotonic()
            ok = False
            try:
                resp = await client.post(
                    "/v1/guard", json={"text": next(cycle), "schema_id": schema_id}
                )
                ok = resp.status_code == 200
            except httpx.HTTPError:
                ok = False
            samples.append((sent, (time.monotonic() - sent) * 1000.0, ok))

        if mode == "closed":
            async def worker() -> None:
                while time.monotonic() < end:
                    await one_request()

            await asyncio.gather(*(worker() for _ in range(concurrency or 1)))
        else:
            interval = 1.0 / (target_rps or 1.0)
            tasks = []
            k = 0
            while True:
                due = start + k * interval
                if due >= end:
                    break
                delay = due - time.monotonic()
                if delay > 0:
                    await asyncio.sleep(delay)
                tasks.append(asyncio.ensure_future(one_request()))
                k += 1
            if tasks:
                await asyncio.gather(*tasks)

    cutoff = start + warmup
    measured = [s for s in samples if s[0] >= cutoff]
    window = duration - warmup
    succeeded = [lat for _, lat, ok in measured if ok]
    failed = sum(1 for _, _, ok in measured if not ok)
    total = len(measured)
    return ServingMetrics(
        total_requests=total,
        failed_requests=failed,
        rps=len(succeeded) / window if window > 0 else 0.0,
        p50=percentile(succeeded, 0.50) if succeeded else None,
        p95=percentile(succeeded, 0.95) if succeeded else None,
        p99=percentile(succeeded, 0.99) if succeeded else None,
        error_rate=failed / total if total else 0.0,
        counters={"sent": len(samples), "warmup_excluded": len(samples) - total},
    )


def load_generate(
    endpoint: str,
    mode: str,
    *,
    target_rps: float | None = None,
    concurrency: int | None = None,
    duration: float,
    schema_id: str,
    texts: Sequence[str] = ("проверка связи",),
    warmup: float = 2.0,
    timeout: float = 10.0,
    transport: httpx.AsyncBaseTransport | None = None,
) -> ServingMetrics:
    """Drive /v1/guard with open or closed load; metrics exclude warmup.

    Open mode sends on a fixed schedule regardless of completions;
    closed mode keeps exactly `concurrency` requests in flight.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    if warmup < 0 or warmup >= duration:
        raise ValueError("warmup must be in [0, duration)")
    if mode == "open":
        if not target_rps or target_rps <= 0:
            raise ValueError("open mode requires target_rps > 0")
    elif mode == "closed":
        if not concurrency or concurrency < 1:
            raise ValueError("closed mode requires concurrency >= 1")
    else:
        raise ValueError(f"unknown load mode {mode!r}")
    return asyncio.run(
        _load_async(
            endpoint, mode, target_rps, concurrency, duration,
            schema_id, texts, warmup, timeout, transport,
        )
    )
