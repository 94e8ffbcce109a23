"""Two-stage routing: accept confident verdicts, escalate the rest.

Escalation uses strict inequality (confidence < tau), so tau = 0
reproduces stage 1 alone and any tau above 1 escalates everything; the
two extremes are the endpoints of the quality-vs-cost sweep.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .core import GuardError, GuardSchema, GuardVerdict
from .evalkit import unsafe_f1
from .scorer import ScorerBackend

ACCEPT = "accept"
ESCALATE = "escalate"

DEFAULT_TAUS = (0.5, 0.7, 0.9, 0.95, 0.99)
DEFAULT_SAFETY_TASK = "safety"
_MAX_IN_FLIGHT = 8


@dataclass(frozen=True)
class CascadePolicy:
    """Routing threshold plus which task's confidence drives it.

    The operating range of tau is [0, 1]; any larger value is the
    sweep's "escalate all" endpoint and is accepted as such.
    """

    tau: float
    safety_task_name: str = DEFAULT_SAFETY_TASK
    confidence_source: str = "predicted_confidence"

    def __post_init__(self) -> None:
        if self.tau < 0.0:
            raise ValueError("tau must be >= 0")
        if self.confidence_source != "predicted_confidence":
            raise ValueError(f"unsupported confidence source {self.confidence_source!r}")


@dataclass(frozen=True)
class CascadeTracePoint:
    """One operating point: cost (escalation) against quality (F1)."""

    tau: float
    escalation_rate: float
    combined_f1: float
    stage2_calls: int
    stage2_failures: int = 0


def _confidence(verdict: GuardVerdict, task_name: str) -> float:
    try:
        return verdict.classification(task_name).confidence
    except KeyError as exc:
        raise GuardError(f"verdict has no task {task_name!r}") from exc


def route(verdict: GuardVerdict, policy: CascadePolicy) -> str:
    """Return ACCEPT or ESCALATE for one stage-1 verdict."""
    if _confidence(verdict, policy.safety_task_name) < policy.tau:
        return ESCALATE
    return ACCEPT


def _score_items(
    backend: ScorerBackend,
    texts: Sequence[str],
    indices: Sequence[int],
    schema: GuardSchema,
    task_name: str,
) -> tuple[dict[int, str], int]:
    """Stage-2 labels per escalated index; failures fall out of the map.

    Items are dispatched one per worker with bounded fan-out and results
    are collected in index order, so the outcome does not depend on
    completion order.
    """
    labels: dict[int, str] = {}
    failures = 0
    if not indices:
        return labels, failures
    with ThreadPoolExecutor(max_workers=_MAX_IN_FLIGHT) as pool:
        futures = [(i, pool.submit(backend.score_batch, [texts[i]], schema)) for i in indices]
        for i, future in futures:
            try:
                verdict = future.result()[0]
                labels[i] = verdict.classification(task_name).predicted
            except Exception:
                failures += 1
    return labels, failures


def run_cascade(
    examples: Sequence[tuple[str, str]],
    schema: GuardSchema,
    stage1: ScorerBackend,
    stage2: ScorerBackend,
    policy: CascadePolicy,
) -> CascadeTracePoint:
    """Route a labeled set through the two stages and score the result.

    Examples are (text, gold_label) pairs. Stage-2 failures fall back to
    the stage-1 label and are counted, never raised.
    """
    texts = [text for text, _ in examples]
    golds = [gold for _, gold in examples]
    verdicts = stage1.score_batch(texts, schema)
    if len(verdicts) != len(texts):
        raise GuardError(f"stage 1 returned {len(verdicts)} verdicts for {len(texts)} texts")
    final = [v.classification(policy.safety_task_name).predicted for v in verdicts]
    escalated = [i for i, v in enumerate(verdicts) if route(v, policy) == ESCALATE]
    stage2_labels, failures = _score_items(
        stage2, texts, escalated, schema, policy.safety_task_name
    )
    for i in escalated:
        if i in stage2_labels:
            final[i] = stage2_labels[i]
    rate = len(escalated) / len(examples) if examples else 0.0
    return CascadeTracePoint(policy.tau, rate, unsafe_f1(golds, final), len(escalated), failures)


def sweep(
    examples: Sequence[tuple[str, str]],
    schema: GuardSchema,
    stage1: ScorerBackend,
    stage2: ScorerBackend,
    taus: Sequence[float] = DEFAULT_TAUS,
    safety_task_name: str = DEFAULT_SAFETY_TASK,
) -> list[CascadeTracePoint]:
    """Trace the quality-vs-cost curve over ascending thresholds.

    Stage 1 runs once; stage 2 runs once on the largest escalation set
    (thresholds are nested), and each point reports the calls that tau
    alone would incur.
    """
    if list(taus) != sorted(taus):
        raise ValueError("taus must be ascending")
    if not taus:
        return []
    texts = [text for text, _ in examples]
    golds = [gold for _, gold in examples]
    verdicts = stage1.score_batch(texts, schema)
    if len(verdicts) != len(texts):
        raise GuardError(f"stage 1 returned {len(verdicts)} verdicts for {len(texts)} texts")
    stage1_labels = [v.classification(safety_task_name).predicted for v in verdicts]
    confidences = [_confidence(v, safety_task_name) for v in verdicts]

    widest = [i for i, c in enumerate(confidences) if c < taus[-1]]
    stage2_labels, _ = _score_items(stage2, texts, widest, schema, safety_task_name)

    points = []
    for tau in taus:
        escalated = [i for i, c in enumerate(confidences) if c < tau]
        final = list(stage1_labels)
        failures = 0
        for i in escalated:
            if i in stage2_labels:
                final[i] = stage2_labels[i]
            else:
                failures += 1
        rate = len(escalated) / len(examples) if examples else 0.0
        points.append(
            CascadeTracePoint(tau, rate, unsafe_f1(golds, final), len(escalated), failures)
        )
    return points


def trace_csv(points: Sequence[CascadeTracePoint]) -> str:
    """Render trace points as the CSV emitted by the cascade subcommand."""
    lines = ["tau,escalation_rate,combined_f1,stage2_calls"]
    for p in points:
        lines.append(f"{p.tau},{p.escalation_rate},{p.combined_f1},{p.stage2_calls}")
    return "\n".join(lines) + "\n"
