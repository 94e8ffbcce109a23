"""Span post-processing: label mapping, consolidation, arbitration, redaction.

This is the stage that turns raw model spans plus rule detections into
the final non-overlapping span set used for redaction and evaluation.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from .core import SOURCE_MERGED, SOURCE_RULE, GuardError, Span, spans_overlap
from .rulepii import STRUCTURED_LABELS, DetectorSpec, detect_structured

logger = logging.getLogger(__name__)

DROP = "DROP"

NAME = "NAME"
ADDRESS = "ADDRESS"

# Canonical benchmark label space: 11 structured + 2 model-dependent.
CANONICAL_LABELS = tuple(STRUCTURED_LABELS) + (NAME, ADDRESS)

# Model training labels -> canonical benchmark labels. Config-overridable.
DEFAULT_LABEL_MAP: dict[str, str] = {
    "person": NAME,
    "first_name": NAME,
    "last_name": NAME,
    "alias": NAME,
    "title": NAME,
    "address": ADDRESS,
    "street": ADDRESS,
    "city": ADDRESS,
    "region": ADDRESS,
    "country": ADDRESS,
    "postal_code": ADDRESS,
    "unit": ADDRESS,
    "district": ADDRESS,
    "building": ADDRESS,
    "landmark": ADDRESS,
    "email": "EMAIL",
    "phone": "PHONE_NUMBER",
    "messenger": "PHONE_NUMBER",
    "national_id": "INN",
    "document_id": "PASSPORT_NUMBER",
    "passport": "PASSPORT_NUMBER",
    "card_number": "BANK_CARD_NUMBER",
    "bank_account": DROP,
    "crypto_wallet": DROP,
    "social_account": DROP,
    "company": DROP,
    "product": DROP,
    "government": DROP,
    "education": DROP,
    "media": DROP,
    "event_date": DROP,
    "date_of_birth": DROP,
}


class OverlapError(GuardError):
    """Redaction input contained overlapping spans; arbitration was skipped."""


@dataclass(frozen=True)
class LabelMap:
    entries: dict[str, str]

    @classmethod
    def default(cls) -> "LabelMap":
        return cls(dict(DEFAULT_LABEL_MAP))

    def target(self, model_label: str) -> str:
        """Canonical target, or DROP. Canonical labels map to themselves."""
        if model_label in self.entries:
            return self.entries[model_label]
        if model_label in CANONICAL_LABELS:
            return model_label
        logger.warning("label %r has no mapping; dropping", model_label)
        return DROP


@dataclass(frozen=True)
class MergePolicy:
    max_gap: int = 3
    separator_class: frozenset[str] = frozenset({" ", ",", ".", "-", "/"})
    mergeable_targets: frozenset[str] = frozenset({ADDRESS, NAME})

    def __post_init__(self) -> None:
        if not 0 <= self.max_gap <= 8:
            raise ValueError("max_gap must be in [0, 8]")
        object.__setattr__(self, "separator_class", frozenset(self.separator_class))
        object.__setattr__(self, "mergeable_targets", frozenset(self.mergeable_targets))


def map_labels(spans: list[Span], label_map: LabelMap | None = None) -> list[Span]:
    """Replace model labels with canonical targets; DROP-mapped spans removed."""
    if label_map is None:
        label_map = LabelMap.default()
    out = []
    for span in spans:
        target = label_map.target(span.label)
        if target == DROP:
            continue
        out.append(Span(span.start, span.end, target, span.score, span.source))
    return out


def merge_spans(text: str, spans: list[Span], policy: MergePolicy | None = None) -> list[Span]:
    """Consolidate same-label runs separated only by short separator gaps.

    A maximal run collapses into one span spanning min start to max end
    with score = max of parts and source "merged". Labels outside
    mergeable_targets pass through untouched.
    """
    if policy is None:
        policy = MergePolicy()
    ordered = sorted(spans, key=lambda s: (s.start, s.end))
    out: list[Span] = []
    run: list[Span] = []
    run_end = 0  # max end seen in the current run; raw model spans may overlap

    def flush() -> None:
        if not run:
            return
        if len(run) == 1:
            out.append(run[0])
        else:
            out.append(
                Span(
                    run[0].start,
                    run_end,
                    run[0].label,
                    max(s.score for s in run),
                    SOURCE_MERGED,
                )
            )
        run.clear()

    for span in ordered:
        if run and span.label == run[-1].label and span.label in policy.mergeable_targets:
            gap = text[run_end:span.start] if span.start > run_end else ""
            if len(gap) <= policy.max_gap and all(ch in policy.separator_class for ch in gap):
                run.append(span)
                run_end = max(run_end, span.end)
                continue
        flush()
        run.append(span)
        run_end = span.end
    flush()
    return out


def _resolve_overlaps(spans: list[Span]) -> list[Span]:
    # Priority: higher score, then longer span, then smaller start.
    ranked = sorted(spans, key=lambda s: (-s.score, -(s.end - s.start), s.start))
    kept: list[Span] = []
    for span in ranked:
        if not any(spans_overlap(span, k) for k in kept):
            kept.append(span)
    kept.sort(key=lambda s: (s.start, s.end))
    return kept


def arbitrate(rule_spans: list[Span], model_spans: list[Span]) -> list[Span]:
    """Combine rule and model spans; rules own the structured labels.

    Model spans carrying a structured label are dropped outright. The
    remaining model spans (NAME/ADDRESS) lose to any overlapping rule
    span; residual model-model overlaps resolve by score, then length,
    then start. Rule-rule overlaps across labels are rare (a digit run
    satisfying two checksums) and resolve by length, then start, then
    label, so the output is always pairwise usable downstream.
    """
    structured = set(STRUCTURED_LABELS)
    kept_rules: list[Span] = []
    for span in sorted(rule_spans, key=lambda s: (-(s.end - s.start), s.start, s.label)):
        if not any(spans_overlap(span, k) for k in kept_rules):
            kept_rules.append(span)

    candidates = [
        s for s in model_spans
        if s.label not in structured and not any(spans_overlap(s, r) for r in kept_rules)
    ]
    return sorted(kept_rules + _resolve_overlaps(candidates), key=lambda s: (s.start, s.end))


def redact(text: str, spans: list[Span], style: str = "placeholder") -> str:
    """Replace spans with "[LABEL]" (placeholder) or per-character blocks (mask)."""
    if style not in ("placeholder", "mask"):
        raise ValueError(f"unknown redaction style {style!r}")
    ordered = sorted(spans, key=lambda s: s.start)
    for prev, cur in zip(ordered, ordered[1:]):
        if spans_overlap(prev, cur):
            raise OverlapError(f"overlapping spans {prev} and {cur}; run arbitrate first")
    pieces = []
    cursor = 0
    for span in ordered:
        pieces.append(text[cursor:span.start])
        if style == "placeholder":
            pieces.append(f"[{span.label}]")
        else:
            pieces.append("█" * (span.end - span.start))
        cursor = span.end
    pieces.append(text[cursor:])
    return "".join(pieces)


def run_pipeline(
    text: str,
    model_spans: list[Span],
    registry: list[DetectorSpec] | None = None,
    label_map: LabelMap | None = None,
    policy: MergePolicy | None = None,
) -> list[Span]:
    """Full post-processing: detect rules, map labels, arbitrate, merge."""
    rule_spans = detect_structured(text, registry)
    mapped = map_labels(model_spans, label_map)
    combined = arbitrate(rule_spans, mapped)
    return merge_spans(text, combined, policy)


def load_pipeline_config(path: str) -> tuple[LabelMap, MergePolicy]:
    """Read label map and merge policy overrides from a JSON config file."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    unknown = set(raw) - {"label_map", "merge_policy"}
    if unknown:
        raise GuardError(f"{path}: unknown pipeline config keys {sorted(unknown)}")
    label_map = LabelMap(dict(raw.get("label_map", DEFAULT_LABEL_MAP)))
    mp = raw.get("merge_policy", {})
    unknown = set(mp) - {"max_gap", "separator_class", "mergeable_targets"}
    if unknown:
        raise GuardError(f"{path}: unknown merge_policy keys {sorted(unknown)}")
    policy = MergePolicy(
        max_gap=int(mp.get("max_gap", 3)),
        separator_class=frozenset(mp.get("separator_class", MergePolicy().separator_class)),
        mergeable_targets=frozenset(mp.get("mergeable_targets", MergePolicy().mergeable_targets)),
    )
    return label_map, policy
