"""Deterministic detectors for structured PII: patterns plus check digits.

Eleven structured entity types are handled here; NAME and ADDRESS are
model-dependent and have no detector. Every emitted span carries
score 1.0 and source "rule" so arbitration can treat it as certain.
Identifier checksums follow the Russian federal schemes (INN, SNILS,
OGRN, OGRNIP) and Luhn for bank cards.
"""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .core import SOURCE_RULE, GuardError, Span

EMAIL = "EMAIL"
PHONE_NUMBER = "PHONE_NUMBER"
BANK_CARD_NUMBER = "BANK_CARD_NUMBER"
CVC = "CVC"
INN = "INN"
KPP = "KPP"
OGRN = "OGRN"
OGRNIP = "OGRNIP"
SNILS = "SNILS"
PASSPORT_NUMBER = "PASSPORT_NUMBER"
TOKEN = "TOKEN"

STRUCTURED_LABELS = (
    EMAIL,
    PHONE_NUMBER,
    BANK_CARD_NUMBER,
    CVC,
    INN,
    KPP,
    OGRN,
    OGRNIP,
    SNILS,
    PASSPORT_NUMBER,
    TOKEN,
)

_INN10_WEIGHTS = (2, 4, 10, 3, 5, 9, 4, 6, 8)
_INN12_D11_WEIGHTS = (7, 2, 4, 10, 3, 5, 9, 4, 6, 8)
_INN12_D12_WEIGHTS = (3, 7, 2, 4, 10, 3, 5, 9, 4, 6, 8)

TOKEN_MIN_ENTROPY = 3.0  # bits per character


class RegistryError(GuardError):
    """Raised when a detector registry config is malformed."""


def validate_card_luhn(digits: str) -> bool:
    """Luhn checksum over a 13-19 digit card number."""
    if not 13 <= len(digits) <= 19 or not digits.isdigit():
        return False
    total = 0
    for idx, ch in enumerate(reversed(digits)):
        d = int(ch)
        if idx % 2 == 1:
            d *= 2
            if d > 9:
                d -= 9
        total += d
    return total % 10 == 0


def validate_inn(digits: str) -> bool:
    """INN check digits: 10-digit (one check digit) or 12-digit (two)."""
    if not digits.isdigit():
        return False
    if len(digits) == 10:
        total = sum(w * int(d) for w, d in zip(_INN10_WEIGHTS, digits))
        return (total % 11) % 10 == int(digits[9])
    if len(digits) == 12:
        d11 = sum(w * int(d) for w, d in zip(_INN12_D11_WEIGHTS, digits)) % 11 % 10
        d12 = sum(w * int(d) for w, d in zip(_INN12_D12_WEIGHTS, digits)) % 11 % 10
        return d11 == int(digits[10]) and d12 == int(digits[11])
    return False


def snils_checksum(digits9: str) -> int:
    """Check value for the leading 9 SNILS digits."""
    s = sum(int(d) * (10 - i) for i, d in enumerate(digits9, start=1))
    if s < 100:
        return s
    if s in (100, 101):
        return 0
    s %= 101
    return 0 if s == 100 else s


def validate_snils(digits: str) -> bool:
    if len(digits) != 11 or not digits.isdigit():
        return False
    return snils_checksum(digits[:9]) == int(digits[9:])


def _mod_digits(digits: str, modulus: int) -> int:
    # Horner evaluation; avoids materializing the big integer.
    value = 0
    for d in digits:
        value = (value * 10 + int(d)) % modulus
    return value


def validate_ogrn(digits: str) -> bool:
    """13-digit OGRN: last digit = leading-12 value mod 11 mod 10."""
    if len(digits) != 13 or not digits.isdigit():
        return False
    return _mod_digits(digits[:12], 11) % 10 == int(digits[12])


def validate_ogrnip(digits: str) -> bool:
    """15-digit OGRNIP: last digit = leading-14 value mod 13 mod 10."""
    if len(digits) != 15 or not digits.isdigit():
        return False
    return _mod_digits(digits[:14], 13) % 10 == int(digits[14])


def normalize_phone(raw: str) -> str:
    """Canonicalize a matched RU phone: 8 -> +7, separators stripped."""
    digits = re.sub(r"[ \-().]", "", raw)
    if digits.startswith("8"):
        digits = "+7" + digits[1:]
    if not digits.startswith("+"):
        digits = "+" + digits
    if len(digits) != 12 or not digits[1:].isdigit():
        raise ValueError(f"phone {raw!r} did not normalize to 11 digits")
    return digits


def shannon_entropy(text: str) -> float:
    """Bits per character over the empirical character distribution."""
    if not text:
        return 0.0
    counts = Counter(text)
    n = len(text)
    return -sum((c / n) * math.log2(c / n) for c in counts.values())


def _token_plausible(matched: str) -> bool:
    has_alpha = any(ch.isalpha() for ch in matched)
    has_digit = any(ch.isdigit() for ch in matched)
    return has_alpha and has_digit and shannon_entropy(matched) >= TOKEN_MIN_ENTROPY


@dataclass(frozen=True)
class DetectorSpec:
    """One structured-PII detector: pattern, optional checksum, optional keyword gate."""

    label: str
    pattern: str
    requires_checksum: bool = False
    requires_context: bool = False
    context_keywords: tuple[str, ...] = ()
    context_window: int = 16

    def __post_init__(self) -> None:
        object.__setattr__(self, "context_keywords", tuple(self.context_keywords))
        if self.requires_context and not self.context_keywords:
            raise RegistryError(f"{self.label}: requires_context without context_keywords")


@dataclass(frozen=True)
class ValidatorOutcome:
    matched_text: str
    format_valid: bool
    checksum_valid: bool | None = None  # None when no checksum applies

    def __post_init__(self) -> None:
        if self.checksum_valid and not self.format_valid:
            raise ValueError("checksum_valid implies format_valid")


# Checksum routines keyed by label; the registry only toggles them.
_CHECKSUMS = {
    BANK_CARD_NUMBER: validate_card_luhn,
    INN: validate_inn,
    SNILS: validate_snils,
    OGRN: validate_ogrn,
    OGRNIP: validate_ogrnip,
}

# Labels whose match text needs digit extraction before checksum/format checks.
_DIGIT_BEARING = {BANK_CARD_NUMBER, INN, SNILS, OGRN, OGRNIP, PHONE_NUMBER}

_EMAIL_PATTERN = r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9.\-]+\.[A-Za-z]{2,}"
# RU-shaped numbers: +7 or leading 8, then 10 digits with optional separators.
_PHONE_PATTERN = r"(?<![\d+])(?:\+7|8)[ \-.]?\(?\d{3}\)?[ \-.]?\d{3}[ \-.]?\d{2}[ \-.]?\d{2}(?!\d)"
_CARD_PATTERN = r"(?<!\d)(?:\d[ \-]?){12,18}\d(?!\d)"
_CVC_PATTERN = r"(?<!\d)\d{3,4}(?!\d)"
_INN_PATTERN = r"(?<!\d)(?:\d{12}|\d{10})(?!\d)"
_KPP_PATTERN = r"(?<![0-9A-Za-z])\d{4}[0-9A-Z]{2}\d{3}(?![0-9A-Za-z])"
_OGRN_PATTERN = r"(?<!\d)\d{13}(?!\d)"
_OGRNIP_PATTERN = r"(?<!\d)\d{15}(?!\d)"
_SNILS_PATTERN = r"(?<!\d)(?:\d{3}-\d{3}-\d{3}[ \-]?\d{2}|\d{11})(?!\d)"
_PASSPORT_PATTERN = r"(?<!\d)\d{4}[ ]?(?:№[ ]?)?\d{6}(?!\d)"
_TOKEN_PATTERN = r"(?<![A-Za-z0-9_\-+/=.])[A-Za-z0-9_\-+/=.]{20,}(?![A-Za-z0-9_\-+/=.])"


def default_registry() -> list[DetectorSpec]:
    """The 11 built-in structured detectors."""
    return [
        DetectorSpec(EMAIL, _EMAIL_PATTERN),
        DetectorSpec(PHONE_NUMBER, _PHONE_PATTERN),
        DetectorSpec(BANK_CARD_NUMBER, _CARD_PATTERN, requires_checksum=True),
        DetectorSpec(
            CVC,
            _CVC_PATTERN,
            requires_context=True,
            context_keywords=("cvc", "cvv", "код"),
            context_window=16,
        ),
        DetectorSpec(INN, _INN_PATTERN, requires_checksum=True),
        DetectorSpec(KPP, _KPP_PATTERN),
        DetectorSpec(OGRN, _OGRN_PATTERN, requires_checksum=True),
        DetectorSpec(OGRNIP, _OGRNIP_PATTERN, requires_checksum=True),
        DetectorSpec(SNILS, _SNILS_PATTERN, requires_checksum=True),
        DetectorSpec(
            PASSPORT_NUMBER,
            _PASSPORT_PATTERN,
            requires_context=True,
            context_keywords=("паспорт", "серия"),
            context_window=24,
        ),
        DetectorSpec(TOKEN, _TOKEN_PATTERN),
    ]


def load_registry(path: str) -> list[DetectorSpec]:
    """Load detector specs from a JSON config file."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise RegistryError(f"{path}: registry must be a JSON array")
    specs = []
    for entry in raw:
        unknown = set(entry) - {
            "label",
            "pattern",
            "requires_checksum",
            "requires_context",
            "context_keywords",
            "context_window",
        }
        if unknown:
            raise RegistryError(f"{path}: unknown registry keys {sorted(unknown)}")
        specs.append(
            DetectorSpec(
                label=entry["label"],
                pattern=entry["pattern"],
                requires_checksum=bool(entry.get("requires_checksum", False)),
                requires_context=bool(entry.get("requires_context", False)),
                context_keywords=tuple(entry.get("context_keywords", ())),
                context_window=int(entry.get("context_window", 16)),
            )
        )
    return specs


def _context_ok(text: str, start: int, end: int, spec: DetectorSpec) -> bool:
    lo = max(0, start - spec.context_window)
    hi = min(len(text), end + spec.context_window)
    window = text[lo:hi].lower()
    return any(kw in window for kw in spec.context_keywords)


def validate_match(label: str, matched: str, requires_checksum: bool) -> ValidatorOutcome:
    """Format plus (where required) checksum for one raw pattern match."""
    digits = re.sub(r"\D", "", matched) if label in _DIGIT_BEARING else matched
    if label == BANK_CARD_NUMBER and not 13 <= len(digits) <= 19:
        return ValidatorOutcome(matched, format_valid=False, checksum_valid=False)
    if label == TOKEN and not _token_plausible(matched):
        return ValidatorOutcome(matched, format_valid=False)
    if label == PHONE_NUMBER:
        try:
            normalize_phone(matched)
        except ValueError:
            return ValidatorOutcome(matched, format_valid=False)
    if requires_checksum:
        checker = _CHECKSUMS.get(label)
        if checker is None:
            raise RegistryError(f"no checksum routine for label {label}")
        return ValidatorOutcome(matched, format_valid=True, checksum_valid=checker(digits))
    return ValidatorOutcome(matched, format_valid=True)


def detect_structured(text: str, registry: list[DetectorSpec] | None = None) -> list[Span]:
    """Run every detector over the text; spans sorted by start, score 1.0.

    Within a single label spans never overlap (left-to-right scan);
    cross-label overlaps are possible and resolved later by arbitration.
    """
    if registry is None:
        registry = default_registry()
    spans: list[Span] = []
    for spec in registry:
        for match in re.finditer(spec.pattern, text):
            if spec.requires_context and not _context_ok(text, match.start(), match.end(), spec):
                continue
            outcome = validate_match(spec.label, match.group(), spec.requires_checksum)
            if not outcome.format_valid:
                continue
            if spec.requires_checksum and not outcome.checksum_valid:
                continue
            spans.append(Span(match.start(), match.end(), spec.label, 1.0, SOURCE_RULE))
    spans.sort(key=lambda s: (s.start, s.end, s.label))
    return spans
