"""Annotation request/response types and the shared fact validator."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

from ..dsl import ItemType, WebForm

log = logging.getLogger(__name__)

PREDICATE_ARITY = {
    "Action": 2,
    "Purpose": 2,
    "ActionMapping": 2,
    "Category": 3,
    "Controller": 1,
    "Withdraw": 2,
    "PolarityAffirmative": 1,
}

CATEGORIES = (
    "marketing_communication",
    "newsletter",
    "third_party_sharing",
    "analytics",
    "account_or_service",
    "contact_response",
    "policy_agreement",
    "other",
)

TEXT_FIELDS = ("request_text", "static_text", "withdrawal", "purpose", "controller", "action")


@dataclass(frozen=True)
class SemanticFact:
    predicate: str
    terms: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))


@dataclass(frozen=True)
class TextEntry:
    uid: str
    field: str
    text: str


@dataclass(frozen=True)
class AnnotationRequest:
    form_id: str
    texts: tuple[TextEntry, ...] = ()
    # polarity stated in the form itself, keyed by uid; overrides pattern matching
    declared_polarity: dict = field(default_factory=dict, hash=False, compare=False)


def validate_fact(fact: SemanticFact) -> Optional[str]:
    """Return why ``fact`` is malformed, or None when it is fine."""
    arity = PREDICATE_ARITY.get(fact.predicate)
    if arity is None:
        return f"unknown predicate {fact.predicate!r}"
    if len(fact.terms) != arity:
        return f"{fact.predicate} takes {arity} terms, got {len(fact.terms)}"
    if any(not isinstance(t, str) or not t for t in fact.terms):
        return f"{fact.predicate} terms must be non-empty strings"
    if fact.predicate == "Category" and fact.terms[1] not in CATEGORIES:
        return f"category {fact.terms[1]!r} is not in the taxonomy"
    return None


def filter_valid(facts: Iterable[SemanticFact], source: str = "annotator") -> list[SemanticFact]:
    out = []
    for f in facts:
        problem = validate_fact(f)
        if problem:
            log.warning("%s: dropping %s%s: %s", source, f.predicate, list(f.terms), problem)
        else:
            out.append(f)
    return out


def build_request(form: WebForm) -> AnnotationRequest:
    """Collect every natural-language field of a form."""
    texts: list[TextEntry] = []
    polarity: dict[str, str] = {}
    for it in form.items:
        md = it.metadata
        if md is not None:
            if md.request_text is not None:
                texts.append(TextEntry(it.uid, "request_text", md.request_text.text))
                if md.request_text.polarity:
                    polarity[it.uid] = md.request_text.polarity
            for name in ("action", "purpose", "controller", "withdrawal"):
                value = getattr(md, name)
                if value:
                    texts.append(TextEntry(it.uid, name, value))
        if it.item_type == ItemType.STATIC_TEXT and it.label and (md is None or md.request_text is None):
            texts.append(TextEntry(it.uid, "static_text", it.label))
    return AnnotationRequest(form.form_id, tuple(texts), polarity)
