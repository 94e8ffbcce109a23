"""Two-stage routing: thresholds, sweeps, endpoint identities, accounting."""

import random

import pytest

from guardgate import GuardError, ReferenceBackend
from guardgate.cascade import (
    ACCEPT,
    DEFAULT_TAUS,
    ESCALATE,
    CascadePolicy,
    CascadeTracePoint,
    route,
    run_cascade,
    sweep,
    trace_csv,
)
from guardgate.evalkit import gen_safety_set, unsafe_f1

from conftest import ScriptedBackend, make_verdict


class OracleBackend:
    """Stage-2 stand-in that always answers with the gold label."""

    def __init__(self, truth: dict[str, str], confidence: float = 0.99):
        self.truth = dict(truth)
        self.confidence = confidence
        self.texts_scored = 0

    def score_batch(self, texts, schema):
        self.texts_scored += len(texts)
        return [make_verdict("safety", self.truth[t], self.confidence) for t in texts]


class FlakyBackend:
    """Raises on texts in `poison`, otherwise answers `label`."""

    def __init__(self, poison: set[str], label: str = "safe"):
        self.poison = set(poison)
        self.label = label

    def score_batch(self, texts, schema):
        out = []
        for text in texts:
            if text in self.poison:
                raise RuntimeError(f"no verdict for {text!r}")
            out.append(make_verdict("safety", self.label, 0.99))
        return out


def labeled(items):
    """items: list of (text, gold, stage1_label, stage1_conf)."""
    examples = [(t, g) for t, g, _, _ in items]
    answers = {t: (lbl, conf) for t, _, lbl, conf in items}
    return examples, answers


class TestRoute:
    def test_below_threshold_escalates(self, safety_schema):
        policy = CascadePolicy(tau=0.95)
        assert route(make_verdict("safety", "safe", 0.93), policy) == ESCALATE

    def test_above_threshold_accepts(self, safety_schema):
        policy = CascadePolicy(tau=0.90)
        assert route(make_verdict("safety", "safe", 0.93), policy) == ACCEPT

    def test_tie_accepts(self):
        policy = CascadePolicy(tau=0.50)
        assert route(make_verdict("safety", "safe", 0.50), policy) == ACCEPT

    def test_zero_tau_never_escalates(self):
        policy = CascadePolicy(tau=0.0)
        assert route(make_verdict("safety", "unsafe", 0.0), policy) == ACCEPT

    def test_above_one_escalates_everything(self):
        policy = CascadePolicy(tau=1.000001)
        assert route(make_verdict("safety", "safe", 1.0), policy) == ESCALATE

    def test_missing_task_is_error(self):
        policy = CascadePolicy(tau=0.5, safety_task_name="tone")
        with pytest.raises(GuardError):
            route(make_verdict("safety", "safe", 0.9), policy)

    def test_negative_tau_rejected(self):
        with pytest.raises(ValueError):
            CascadePolicy(tau=-0.1)


class TestRunCascade:
    def setup_method(self):
        items = [
            ("текст один", "unsafe", "unsafe", 0.97),
            ("текст два", "safe", "safe", 0.92),
            ("текст три", "unsafe", "safe", 0.55),  # stage 1 is wrong and unsure
            ("текст четыре", "safe", "safe", 0.88),
        ]
        self.examples, answers = labeled(items)
        self.stage1 = ScriptedBackend(answers)
        self.truth = {t: g for t, g in self.examples}

    def test_low_confidence_item_fixed_by_oracle(self, safety_schema):
        stage2 = OracleBackend(self.truth)
        point = run_cascade(
            self.examples, safety_schema, self.stage1, stage2, CascadePolicy(tau=0.7)
        )
        assert point.combined_f1 == 1.0
        assert point.stage2_calls == 1
        assert point.escalation_rate == pytest.approx(0.25)
        assert stage2.texts_scored == 1

    def test_tau_zero_is_stage1_alone(self, safety_schema):
        stage2 = OracleBackend(self.truth)
        point = run_cascade(
            self.examples, safety_schema, self.stage1, stage2, CascadePolicy(tau=0.0)
        )
        gold = [g for _, g in self.examples]
        stage1_labels = [self.stage1.answers[t][0] for t, _ in self.examples]
        assert point.combined_f1 == unsafe_f1(gold, stage1_labels)
        assert point.stage2_calls == 0
        assert stage2.texts_scored == 0

    def test_escalate_all_is_stage2_alone(self, safety_schema):
        stage2 = OracleBackend(self.truth)
        point = run_cascade(
            self.examples, safety_schema, self.stage1, stage2, CascadePolicy(tau=1.001)
        )
        assert point.escalation_rate == 1.0
        assert point.combined_f1 == 1.0
        assert stage2.texts_scored == 4

    def test_stage2_failure_falls_back_to_stage1(self, safety_schema):
        stage2 = FlakyBackend(poison={"текст три"})
        point = run_cascade(
            self.examples, safety_schema, self.stage1, stage2, CascadePolicy(tau=0.7)
        )
        # the escalated item failed, so its stage-1 (wrong) label stands
        assert point.stage2_failures == 1
        gold = [g for _, g in self.examples]
        stage1_labels = [self.stage1.answers[t][0] for t, _ in self.examples]
        assert point.combined_f1 == unsafe_f1(gold, stage1_labels)

    def test_empty_set(self, safety_schema):
        point = run_cascade([], safety_schema, self.stage1, OracleBackend({}), CascadePolicy(tau=0.5))
        assert point.escalation_rate == 0.0
        assert point.stage2_calls == 0


class TestSweep:
    def random_instance(self, rng: random.Random, n: int = 24):
        items = []
        for i in range(n):
            text = f"пример {i} вариант {rng.randrange(10**6)}"
            gold = rng.choice(["safe", "unsafe"])
            stage1 = gold if rng.random() < 0.6 else ("safe" if gold == "unsafe" else "unsafe")
            items.append((text, gold, stage1, round(rng.random(), 3)))
        return labeled(items)

    def test_escalation_rate_monotone(self, safety_schema):
        rng = random.Random(7)
        examples, answers = self.random_instance(rng)
        stage1 = ScriptedBackend(answers)
        stage2 = OracleBackend({t: g for t, g in examples})
        taus = (0.0,) + DEFAULT_TAUS + (1.001,)
        points = sweep(examples, safety_schema, stage1, stage2, taus=taus)
        rates = [p.escalation_rate for p in points]
        assert rates == sorted(rates)

    def test_oracle_stage2_f1_monotone(self, safety_schema):
        rng = random.Random(13)
        for _ in range(10):
            examples, answers = self.random_instance(rng)
            stage1 = ScriptedBackend(answers)
            stage2 = OracleBackend({t: g for t, g in examples})
            points = sweep(
                examples, safety_schema, stage1, stage2, taus=(0.0, 0.3, 0.6, 0.9, 1.001)
            )
            f1s = [p.combined_f1 for p in points]
            assert all(a <= b + 1e-12 for a, b in zip(f1s, f1s[1:]))

    def test_endpoints_bit_equal_to_standalone(self, safety_schema):
        rng = random.Random(29)
        examples, answers = self.random_instance(rng)
        stage1 = ScriptedBackend(answers)
        truth = {t: g for t, g in examples}
        stage2 = OracleBackend(truth)
        points = sweep(examples, safety_schema, stage1, stage2, taus=(0.0, 0.5, 1.001))
        gold = [g for _, g in examples]
        stage1_f1 = unsafe_f1(gold, [answers[t][0] for t, _ in examples])
        stage2_f1 = unsafe_f1(gold, [truth[t] for t, _ in examples])
        assert points[0].combined_f1 == stage1_f1
        assert points[-1].combined_f1 == stage2_f1

    def test_stage1_called_once_per_example(self, safety_schema):
        rng = random.Random(31)
        examples, answers = self.random_instance(rng)
        stage1 = ScriptedBackend(answers)
        stage2 = OracleBackend({t: g for t, g in examples})
        sweep(examples, safety_schema, stage1, stage2, taus=DEFAULT_TAUS)
        assert stage1.texts_scored == len(examples)

    def test_stage2_call_accounting(self, safety_schema):
        rng = random.Random(37)
        examples, answers = self.random_instance(rng)
        stage1 = ScriptedBackend(answers)
        stage2 = OracleBackend({t: g for t, g in examples})
        taus = (0.2, 0.5, 0.8)
        points = sweep(examples, safety_schema, stage1, stage2, taus=taus)
        for tau, point in zip(taus, points):
            expected = sum(1 for t, _ in examples if answers[t][1] < tau)
            assert point.stage2_calls == expected
            assert point.escalation_rate == pytest.approx(expected / len(examples))

    def test_non_ascending_taus_rejected(self, safety_schema):
        stage1 = ScriptedBackend({})
        with pytest.raises(ValueError):
            sweep([], safety_schema, stage1, stage1, taus=(0.9, 0.5))

    def test_single_zero_tau_matches_stage1(self, safety_schema):
        rng = random.Random(41)
        examples, answers = self.random_instance(rng)
        stage1 = ScriptedBackend(answers)
        stage2 = OracleBackend({t: g for t, g in examples})
        (point,) = sweep(examples, safety_schema, stage1, stage2, taus=(0.0,))
        gold = [g for _, g in examples]
        assert point.combined_f1 == unsafe_f1(gold, [answers[t][0] for t, _ in examples])
        assert stage2.texts_scored == 0

    def test_reference_backend_end_to_end(self, safety_schema):
        pairs = gen_safety_set(12, seed=3)
        backend = ReferenceBackend()
        points = sweep(pairs, safety_schema, backend, OracleBackend(dict(pairs)), taus=(0.5, 1.001))
        assert points[-1].combined_f1 == 1.0


class TestTraceCsv:
    def test_format(self):
        points = [
            CascadeTracePoint(0.5, 0.25, 0.8, 2),
            CascadeTracePoint(0.9, 0.75, 0.9, 6),
        ]
        body = trace_csv(points)
        lines = body.strip().splitlines()
        assert lines[0] == "tau,escalation_rate,combined_f1,stage2_calls"
        assert lines[1].startswith("0.5,0.25,0.8")
        assert len(lines) == 3
