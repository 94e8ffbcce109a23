"""Wire-protocol contract suite: a fixed request corpus plus response checks.

The corpus pins the /v1/score contract without pinning scorer behavior.
Any conformant backend, whatever its model, must return shape-valid
responses for these requests, so one file drives both the built-in
server's contract tests and external adapter implementations.

Validation rules, language neutral so ports stay faithful:
  - response carries "verdicts" (one per request text, in order) and a
    numeric "model_ms" >= 0
  - each verdict names every schema task exactly once; distribution keys
    equal the task's label set; probabilities lie in [0, 1]
  - single-label task distributions sum to 1 within 1e-6; predicted is
    a task label whose probability is maximal within 1e-9; confidence
    equals the predicted label's probability within 1e-6
  - entity spans use half-open Unicode scalar offsets inside the text
    (UTF-16 ports must convert), labels come from the schema's entity
    types, scores lie in [0, 1]
"""
from __future__ import annotations

import json

from .core import GuardSchema

SUITE_VERSION = 1

SUM_TOL = 1e-6
ARGMAX_TOL = 1e-9

RU_NAME_DESC = "имя человека"
RU_ADDR_DESC = "почтовый адрес"


def _entry(name: str, schema: GuardSchema, texts: list[str], by_id: bool = False) -> dict:
    request: dict = {"texts": texts}
    if by_id:
        request["schema_id"] = schema.schema_id
    else:
        request["schema"] = schema.to_dict()
    return {
        "name": name,
        "register_first": by_id,
        "schema": schema.to_dict(),
        "request": request,
    }


def _schema(tasks=(), entities=()) -> GuardSchema:
    from .core import EntityType, TaskSpec

    return GuardSchema(
        classification_tasks=tuple(TaskSpec(n, tuple(ls), ml) for n, ls, ml in tasks),
        entity_types=tuple(EntityType(l, d) for l, d in entities),
    )


def build_suite() -> dict:
    """The fixed 20-request corpus. Deterministic: no clock, no RNG."""
    safety = (("safety", ("safe", "unsafe"), False),)
    topic = (("topic", ("business", "personal", "other"), False),)
    person = (("NAME", RU_NAME_DESC),)
    address = (("ADDRESS", RU_ADDR_DESC),)

    entries = [
        _entry(
            "chat-basic",
            _schema(tasks=safety),
            ["привет, как оформить возврат заказа?"],
        ),
        _entry(
            "chat-batch",
            _schema(tasks=safety),
            [
                "добрый день, нужна помощь с доставкой",
                "как удалить мой аккаунт навсегда",
                "подскажите статус заявки номер 4512",
            ],
        ),
        _entry(
            "policy-pair",
            _schema(tasks=safety + topic),
            [
                "обсудим условия корпоративного договора",
                "я потерял паспорт, что делать",
            ],
        ),
        _entry(
            "pii-name-address",
            _schema(entities=person + address),
            [
                "Иван Петров ждет курьера",
                "доставка: г. Москва, ул. Ленина, д. 5",
            ],
        ),
        _entry(
            "full-verdict",
            _schema(tasks=safety + topic, entities=person + address),
            [
                "Анна Смирнова просит счет на офис в Твери",
                "перезвоните Олегу завтра после обеда",
            ],
        ),
        _entry(
            "empty-text",
            _schema(tasks=safety, entities=person),
            [""],
        ),
        _entry(
            "whitespace-text",
            _schema(tasks=safety, entities=person),
            ["   \n\t  "],
        ),
        _entry(
            "single-char",
            _schema(tasks=safety),
            ["я"],
        ),
        _entry(
            "emoji-offsets",
            _schema(entities=person),
            [
                "🙂🙂 Анна Ким пишет из отпуска",
                "статус: 🚀🚀🚀 запуск завтра, ответственный Петр Волков",
            ],
        ),
        _entry(
            "long-truncation",
            _schema(tasks=safety, entities=person),
            ["клиент пишет очень длинное обращение. " * 40],
        ),
        _entry(
            "duplicate-texts",
            _schema(tasks=safety),
            ["повторный запрос в поддержку", "повторный запрос в поддержку"],
        ),
        _entry(
            "many-labels",
            _schema(tasks=(("tone", ("neutral", "angry", "happy", "sad", "urgent"), False),)),
            ["срочно! сервис лежит уже час, клиенты недовольны"],
        ),
        _entry(
            "multi-label-task",
            _schema(
                tasks=safety + (("topics", ("billing", "delivery", "account"), True),)
            ),
            ["спишите оплату и поменяйте адрес доставки"],
        ),
        _entry(
            "entity-heavy",
            _schema(
                entities=person
                + address
                + (
                    ("EMAIL", "адрес электронной почты"),
                    ("PHONE", "номер телефона"),
                    ("INN", "идентификационный номер налогоплательщика"),
                    ("BANK_CARD_NUMBER", "номер банковской карты"),
                )
            ),
            ["Мария Кузнецова, ИНН 1234567894, почта m.kuz@example.ru"],
        ),
        _entry(
            "latin-mixed",
            _schema(entities=person + address),
            ["Call John Smith at the Moscow office on Tverskaya street"],
        ),
        _entry(
            "punctuation",
            _schema(tasks=safety),
            ['клиент спросил: "где заказ #1142?!" (третий раз, между прочим)'],
        ),
        _entry(
            "newlines",
            _schema(tasks=safety, entities=person),
            ["строка один\nстрока два\tс табом\nподпись: Егор Лебедев"],
        ),
        _entry(
            "registered-basic",
            _schema(tasks=safety),
            ["запрос через заранее зарегистрированную схему"],
            by_id=True,
        ),
        _entry(
            "registered-entities",
            _schema(entities=person + address),
            [
                "Сергей Иванов живет в Казани",
                "отгрузка на склад: г. Тула, ул. Мира, д. 12",
            ],
            by_id=True,
        ),
        _entry(
            "registered-multitask",
            _schema(tasks=safety + topic, entities=person),
            ["Ирина Соколова уточняет тариф для бизнеса"],
            by_id=True,
        ),
    ]
    return {"version": SUITE_VERSION, "entries": entries}


def suite_json(suite: dict | None = None) -> str:
    """Byte-stable serialization so regeneration diffs cleanly."""
    return json.dumps(suite or build_suite(), ensure_ascii=False, indent=2) + "\n"


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def validate_wire_response(schema_dict: dict, texts: list[str], payload) -> list[str]:
    """All contract violations in a /v1/score response body; empty means pass."""
    problems: list[str] = []
    if not isinstance(payload, dict):
        return ["response body is not a JSON object"]
    if not _is_num(payload.get("model_ms")) or payload["model_ms"] < 0:
        problems.append("model_ms missing or not a non-negative number")
    verdicts = payload.get("verdicts")
    if not isinstance(verdicts, list) or len(verdicts) != len(texts):
        problems.append(f"verdicts must be a list of {len(texts)} items")
        return problems

    tasks = {
        t["task_name"]: (list(t["labels"]), bool(t.get("multi_label", False)))
        for t in schema_dict.get("classification_tasks", [])
    }
    entity_labels = {e["label"] for e in schema_dict.get("entity_types", [])}

    for i, (text, verdict) in enumerate(zip(texts, verdicts)):
        where = f"verdict[{i}]"
        if not isinstance(verdict, dict):
            problems.append(f"{where} is not an object")
            continue
        classifications = verdict.get("classifications")
        if not isinstance(classifications, list):
            problems.append(f"{where}.classifications missing")
            classifications = []
        seen = [str(c.get("task")) for c in classifications if isinstance(c, dict)]
        if sorted(seen) != sorted(tasks):
            problems.append(f"{where} tasks {seen} do not match schema tasks {sorted(tasks)}")
        for c in classifications:
            if not isinstance(c, dict):
                problems.append(f"{where} classification is not an object")
                continue
            task = c.get("task")
            if task not in tasks:
                continue  # already reported via the task-set check
            labels, multi = tasks[task]
            dist = c.get("distribution")
            if not isinstance(dist, dict) or sorted(dist) != sorted(labels):
                problems.append(f"{where}.{task} distribution keys must equal the label set")
                continue
            if not all(_is_num(p) and 0.0 <= p <= 1.0 for p in dist.values()):
                problems.append(f"{where}.{task} has probabilities outside [0, 1]")
                continue
            if not multi and abs(sum(dist.values()) - 1.0) > SUM_TOL:
                problems.append(f"{where}.{task} single-label distribution sums to {sum(dist.values())}")
            predicted = c.get("predicted")
            if predicted not in labels:
                problems.append(f"{where}.{task} predicted {predicted!r} is not a task label")
                continue
            if dist[predicted] < max(dist.values()) - ARGMAX_TOL:
                problems.append(f"{where}.{task} predicted label is not an argmax")
            confidence = c.get("confidence")
            if not _is_num(confidence) or abs(confidence - dist[predicted]) > SUM_TOL:
                problems.append(f"{where}.{task} confidence does not equal the predicted probability")
        entities = verdict.get("entities")
        if not isinstance(entities, list):
            problems.append(f"{where}.entities missing")
            entities = []
        if not entity_labels and entities:
            problems.append(f"{where} has entities but the schema declares no entity types")
        for e in entities:
            if not isinstance(e, dict):
                problems.append(f"{where} entity is not an object")
                continue
            start, end = e.get("start"), e.get("end")
            spans_ok = (
                isinstance(start, int)
                and isinstance(end, int)
                and not isinstance(start, bool)
                and not isinstance(end, bool)
                and 0 <= start < end <= len(text)
            )
            if not spans_ok:
                problems.append(
                    f"{where} entity offsets [{start}, {end}) invalid for text of {len(text)} scalars"
                )
            if e.get("label") not in entity_labels:
                problems.append(f"{where} entity label {e.get('label')!r} not in schema")
            if not _is_num(e.get("score")) or not 0.0 <= e["score"] <= 1.0:
                problems.append(f"{where} entity score outside [0, 1]")
    return problems
