"""Guardrail gateway: safety classification and PII span detection.

The pipeline runs deterministic structured-PII detectors next to a
pluggable schema-conditioned scorer, arbitrates their spans, and serves
the result behind a dynamically batched HTTP API.
"""

from .core import (
    ClassificationResult,
    EntityType,
    GuardError,
    GuardSchema,
    GuardVerdict,
    ModelCard,
    Span,
    TaskSpec,
    fnv1a_64,
    spans_overlap,
    validate_verdict,
)
from .rulepii import DetectorSpec, default_registry, detect_structured, load_registry
from .scorer import (
    LabelCache,
    ReferenceBackend,
    RemoteBackend,
    ScorerBackend,
    ScorerConfig,
    reference_score,
    remote_score,
)
from .spanforge import LabelMap, MergePolicy, arbitrate, merge_spans, redact, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "ClassificationResult",
    "DetectorSpec",
    "EntityType",
    "GuardError",
    "GuardSchema",
    "GuardVerdict",
    "LabelCache",
    "LabelMap",
    "MergePolicy",
    "ModelCard",
    "ReferenceBackend",
    "RemoteBackend",
    "ScorerBackend",
    "ScorerConfig",
    "Span",
    "TaskSpec",
    "arbitrate",
    "default_registry",
    "detect_structured",
    "fnv1a_64",
    "load_registry",
    "merge_spans",
    "redact",
    "reference_score",
    "remote_score",
    "run_pipeline",
    "spans_overlap",
    "validate_verdict",
    "__version__",
]
