"""Shared test fixtures and helpers."""

from __future__ import annotations

import random

import pytest

from guardgate import (
    ClassificationResult,
    EntityType,
    GuardSchema,
    GuardVerdict,
    TaskSpec,
)


# Verdict lines from the acceptance suite, echoed after capture ends.
ACCEPTANCE_VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture
def safety_schema() -> GuardSchema:
    """Minimal single-task schema used across scorer and cascade tests."""
    return GuardSchema(
        classification_tasks=(TaskSpec("safety", ("safe", "unsafe")),),
        entity_types=(EntityType("NAME", "имя человека"),),
    )


def make_verdict(task: str, predicted: str, confidence: float) -> GuardVerdict:
    """Single-task verdict with the remaining mass on the other label."""
    other = "unsafe" if predicted == "safe" else "safe"
    dist = {predicted: confidence, other: 1.0 - confidence}
    return GuardVerdict(
        classifications=(ClassificationResult(task, dist, predicted, confidence),),
        entities=(),
    )


class ScriptedBackend:
    """Scorer stub that replays preset (label, confidence) pairs keyed by text."""

    def __init__(self, answers: dict[str, tuple[str, float]], task: str = "safety"):
        self.answers = dict(answers)
        self.task = task
        self.calls = 0
        self.texts_scored = 0

    def score_batch(self, texts, schema):
        self.calls += 1
        self.texts_scored += len(texts)
        out = []
        for text in texts:
            label, conf = self.answers[text]
            out.append(make_verdict(self.task, label, conf))
        return out


def rng_texts(n: int, seed: int) -> list[str]:
    rng = random.Random(seed)
    return [f"запрос номер {rng.randrange(10**6)} вариант {i}" for i in range(n)]
