"""Semantic predicate extraction from form text."""

from typing import Optional

from ..dsl import WebForm
from .heuristic import KeywordTables, annotate_heuristic, default_tables
from .mapping import map_actions
from .model import (
    CATEGORIES,
    PREDICATE_ARITY,
    AnnotationRequest,
    SemanticFact,
    TextEntry,
    build_request,
    filter_valid,
    validate_fact,
)
from .remote import RemoteAnnotator, ServiceConfig


def annotate_form(form: WebForm, remote: Optional[RemoteAnnotator] = None, tables: Optional[KeywordTables] = None) -> list[SemanticFact]:
    """Semantic facts for a form, including action mappings."""
    req = build_request(form)
    facts = remote.annotate(req) if remote is not None else annotate_heuristic(req, tables)
    return facts + [f for f in map_actions(facts, form) if f not in facts]


__all__ = [
    "CATEGORIES",
    "PREDICATE_ARITY",
    "AnnotationRequest",
    "KeywordTables",
    "RemoteAnnotator",
    "SemanticFact",
    "ServiceConfig",
    "TextEntry",
    "annotate_form",
    "annotate_heuristic",
    "build_request",
    "default_tables",
    "filter_valid",
    "map_actions",
    "validate_fact",
]
