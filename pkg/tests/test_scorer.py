"""Reference scorer: determinism, span enumeration, label cache, wire client."""

import json
import random

import httpx
import pytest

from guardgate import (
    EntityType,
    GuardSchema,
    LabelCache,
    ReferenceBackend,
    RemoteBackend,
    ScorerBackend,
    ScorerConfig,
    TaskSpec,
    reference_score,
    remote_score,
)
from guardgate.scorer import (
    VECTOR_DIM,
    BackendError,
    EmptySchemaError,
    ProtocolError,
    RetriableError,
    cached_label_encode,
    cosine,
    encode_labels,
    enumerate_spans,
    tokenize,
    trigram_vector,
)


class TestTrigramVector:
    def test_shape_and_type(self):
        vec = trigram_vector("привет")
        assert len(vec) == VECTOR_DIM
        assert all(isinstance(x, int) and x >= 0 for x in vec)

    def test_deterministic(self):
        assert trigram_vector("hello world") == trigram_vector("hello world")

    def test_case_insensitive(self):
        assert trigram_vector("Привет") == trigram_vector("привет")

    def test_counts_scale_with_repetition(self):
        assert sum(trigram_vector("абаб абаб")) > sum(trigram_vector("абаб"))

    def test_empty_text(self):
        vec = trigram_vector("")
        assert len(vec) == VECTOR_DIM


class TestCosine:
    def test_identical(self):
        v = trigram_vector("проверка")
        assert cosine(v, v) == pytest.approx(1.0)

    def test_zero_vector(self):
        zero = (0,) * VECTOR_DIM
        assert cosine(zero, trigram_vector("текст")) == 0.0

    def test_range(self):
        rng = random.Random(3)
        words = ["банк", "карта", "письмо", "адрес", "токен", "safety"]
        for _ in range(50):
            a = trigram_vector(rng.choice(words) + rng.choice(words))
            b = trigram_vector(rng.choice(words))
            assert 0.0 <= cosine(a, b) <= 1.0 + 1e-12


class TestSpanEnumeration:
    def test_tokenize_extents(self):
        text = "Иван, пиши: a@b.io"
        extents = tokenize(text)
        assert [text[s:e] for s, e in extents] == ["Иван", "пиши", "a", "b", "io"]

    def test_brute_force_equivalence(self):
        rng = random.Random(11)
        for _ in range(40):
            n = rng.randrange(0, 30)
            width = rng.randrange(1, 13)
            extents = []
            cursor = 0
            for _ in range(n):
                start = cursor + rng.randrange(0, 3)
                end = start + rng.randrange(1, 6)
                extents.append((start, end))
                cursor = end + 1
            expected = [
                (extents[i][0], extents[j][1])
                for i in range(n)
                for j in range(i, min(i + width, n))
            ]
            got = enumerate_spans(extents, width)
            assert sorted(got) == sorted(expected)

    def test_empty_tokens(self):
        assert enumerate_spans([], 12) == []


class TestReferenceScore:
    def test_verdict_shape(self, safety_schema):
        verdict = reference_score("Иван Петров пишет письмо", safety_schema)
        assert [c.task_name for c in verdict.classifications] == ["safety"]
        dist = verdict.classification("safety").distribution
        assert set(dist) == {"safe", "unsafe"}
        assert sum(dist.values()) == pytest.approx(1.0, abs=1e-6)
        assert all(0.0 <= p <= 1.0 for p in dist.values())

    def test_deterministic(self, safety_schema):
        a = reference_score("проверка детерминизма", safety_schema)
        b = reference_score("проверка детерминизма", safety_schema)
        assert a.classifications == b.classifications
        assert a.entities == b.entities

    def test_empty_schema_rejected(self):
        with pytest.raises(EmptySchemaError):
            reference_score("текст", GuardSchema())

    def test_truncation_flag(self, safety_schema):
        cfg = ScorerConfig(max_sequence_chars=16)
        verdict = reference_score("слово " * 10, safety_schema, cfg)
        assert verdict.truncated
        short = reference_score("слово", safety_schema, cfg)
        assert not short.truncated

    def test_entities_aligned_to_tokens(self):
        schema = GuardSchema(
            entity_types=(
                EntityType("NAME", "имя и фамилия человека"),
                EntityType("ADDRESS", "почтовый адрес"),
            ),
        )
        text = "Иван Петров живёт в городе Москва"
        verdict = reference_score("  " + text, schema)
        boundaries = set()
        for start, end in tokenize("  " + text):
            boundaries.add(start)
            boundaries.add(end)
        for span in verdict.entities:
            assert span.start in boundaries and span.end in boundaries
            assert span.label in {"NAME", "ADDRESS"}
            assert span.score > 0.5
            assert span.source == "model"

    def test_entity_spans_do_not_overlap_same_label(self, safety_schema):
        verdict = reference_score("Анна Анна Анна Анна", safety_schema)
        ents = sorted(verdict.entities, key=lambda s: s.start)
        for a, b in zip(ents, ents[1:]):
            if a.label == b.label:
                assert a.end <= b.start

    def test_multi_label_task_independent_scores(self):
        schema = GuardSchema(
            classification_tasks=(TaskSpec("topics", ("банк", "почта"), multi_label=True),),
        )
        verdict = reference_score("карта банка и счёт в банке", schema)
        dist = verdict.classification("topics").distribution
        assert all(0.0 <= p <= 1.0 for p in dist.values())

    def test_scorer_config_validation(self):
        with pytest.raises(ValueError):
            ScorerConfig(max_span_width=0)
        with pytest.raises(ValueError):
            ScorerConfig(score_threshold=1.5)
        with pytest.raises(ValueError):
            ScorerConfig(max_sequence_chars=0)


class TestLabelCache:
    def random_schema(self, rng: random.Random) -> GuardSchema:
        words = ["спам", "safety", "оплата", "доставка", "тон", "банк"]
        tasks = tuple(
            TaskSpec(f"task{i}", tuple(f"{rng.choice(words)}{j}" for j in range(rng.randrange(2, 4))))
            for i in range(rng.randrange(0, 3))
        )
        entities = tuple(
            EntityType(f"E{i}", " ".join(rng.choice(words) for _ in range(3)))
            for i in range(rng.randrange(0, 4))
        )
        if not tasks and not entities:
            entities = (EntityType("E0", "запасная метка"),)
        return GuardSchema(tasks, entities)

    def test_cache_transparent(self):
        rng = random.Random(23)
        cache = LabelCache()
        for _ in range(100):
            schema = self.random_schema(rng)
            fresh = encode_labels(schema)
            assert cached_label_encode(schema, cache) == fresh
            assert cached_label_encode(schema, cache) == fresh

    def test_hit_miss_counters(self, safety_schema):
        cache = LabelCache()
        cached_label_encode(safety_schema, cache)
        assert (cache.hits, cache.misses) == (0, 1)
        cached_label_encode(safety_schema, cache)
        assert (cache.hits, cache.misses) == (1, 1)
        assert len(cache) == 1

    def test_no_cache_means_fresh_encoding(self, safety_schema):
        assert cached_label_encode(safety_schema, None) == encode_labels(safety_schema)

    def test_cached_results_identical_through_scoring(self, safety_schema):
        cache = LabelCache()
        cold = reference_score("Иван уехал в Москву", safety_schema, cache=cache)
        warm = reference_score("Иван уехал в Москву", safety_schema, cache=cache)
        assert cold.classifications == warm.classifications
        assert cold.entities == warm.entities
        assert cache.hits >= 1


class TestReferenceBackend:
    def test_protocol_conformance(self):
        assert isinstance(ReferenceBackend(), ScorerBackend)

    def test_batch_matches_single(self, safety_schema):
        backend = ReferenceBackend()
        texts = ["первый текст", "второй текст с Иваном"]
        batch = backend.score_batch(texts, safety_schema)
        assert len(batch) == 2
        for text, verdict in zip(texts, batch):
            solo = reference_score(text, safety_schema)
            assert verdict.classifications == solo.classifications
            assert verdict.entities == solo.entities


def wire_handler(schema: GuardSchema):
    """MockTransport handler scoring requests with the local reference scorer."""

    def handle(request: httpx.Request) -> httpx.Response:
        payload = json.loads(request.content)
        verdicts = []
        for text in payload["texts"]:
            v = reference_score(text, schema)
            verdicts.append(
                {
                    "classifications": [
                        {
                            "task": c.task_name,
                            "distribution": c.distribution,
                            "predicted": c.predicted,
                            "confidence": c.confidence,
                        }
                        for c in v.classifications
                    ],
                    "entities": [
                        {"start": s.start, "end": s.end, "label": s.label, "score": s.score}
                        for s in v.entities
                    ],
                }
            )
        return httpx.Response(200, json={"verdicts": verdicts, "model_ms": 4.2})

    return handle


class TestRemoteScore:
    def test_success_round_trip(self, safety_schema):
        transport = httpx.MockTransport(wire_handler(safety_schema))
        verdicts = remote_score(
            "http://scorer", ["Иван пришёл", "всё тихо"], safety_schema, transport=transport
        )
        assert len(verdicts) == 2
        for text, verdict in zip(["Иван пришёл", "всё тихо"], verdicts):
            local = reference_score(text, safety_schema)
            assert verdict.classifications == local.classifications
            assert verdict.entities == local.entities
            assert verdict.scorer_latency_ms == pytest.approx(4.2)

    def test_schema_id_variant_skips_deep_validation(self, safety_schema):
        transport = httpx.MockTransport(wire_handler(safety_schema))
        verdicts = remote_score(
            "http://scorer", ["текст"], safety_schema.schema_id, transport=transport
        )
        assert len(verdicts) == 1

    def test_server_error_is_retriable_backend_error(self, safety_schema):
        transport = httpx.MockTransport(lambda req: httpx.Response(503, text="down"))
        with pytest.raises(BackendError):
            remote_score("http://scorer", ["x"], safety_schema, transport=transport)

    def test_client_error_is_protocol_error(self, safety_schema):
        transport = httpx.MockTransport(lambda req: httpx.Response(400, text="bad schema"))
        with pytest.raises(ProtocolError):
            remote_score("http://scorer", ["x"], safety_schema, transport=transport)

    def test_network_failure_is_retriable(self, safety_schema):
        def explode(request):
            raise httpx.ConnectError("refused")

        transport = httpx.MockTransport(explode)
        with pytest.raises(RetriableError):
            remote_score("http://scorer", ["x"], safety_schema, transport=transport)

    def test_malformed_body_is_protocol_error(self, safety_schema):
        transport = httpx.MockTransport(lambda req: httpx.Response(200, json={"nope": 1}))
        with pytest.raises(ProtocolError):
            remote_score("http://scorer", ["x"], safety_schema, transport=transport)

    def test_verdict_count_mismatch_is_protocol_error(self, safety_schema):
        transport = httpx.MockTransport(
            lambda req: httpx.Response(200, json={"verdicts": [], "model_ms": 1.0})
        )
        with pytest.raises(ProtocolError):
            remote_score("http://scorer", ["x"], safety_schema, transport=transport)

    def test_invalid_verdict_content_is_protocol_error(self, safety_schema):
        bad = {
            "verdicts": [
                {
                    "classifications": [
                        {
                            "task": "safety",
                            "distribution": {"safe": 0.9, "unsafe": 0.9},
                            "predicted": "safe",
                            "confidence": 0.9,
                        }
                    ],
                    "entities": [],
                }
            ],
            "model_ms": 1.0,
        }
        transport = httpx.MockTransport(lambda req: httpx.Response(200, json=bad))
        with pytest.raises(ProtocolError):
            remote_score("http://scorer", ["x"], safety_schema, transport=transport)

    def test_remote_backend_conforms(self, safety_schema):
        transport = httpx.MockTransport(wire_handler(safety_schema))
        backend = RemoteBackend("http://scorer", transport=transport)
        assert isinstance(backend, ScorerBackend)
        assert len(backend.score_batch(["a", "b", "c"], safety_schema)) == 3
