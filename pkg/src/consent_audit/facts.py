"""Lower a form and its semantic facts into the relations the rules read."""

from __future__ import annotations

import re
from typing import Iterable, Sequence

from .annotator.model import PREDICATE_ARITY, SemanticFact
from .datalog.factdb import FactDb
from .dsl import ItemType, WebForm
from .errors import SchemaError

BASE_SCHEMA = {"item": 3, "selected": 1, "element_sent": 2, "submit_button": 1, "is_select_type": 1}
RELATION_FOR = {
    "Action": "action",
    "Purpose": "purpose",
    "ActionMapping": "action_mapping",
    "Category": "category",
    "Controller": "controller",
    "Withdraw": "withdraw",
    "PolarityAffirmative": "polarity_affirmative",
}
SEMANTIC_SCHEMA = {RELATION_FOR[p]: n for p, n in PREDICATE_ARITY.items()}
FULL_SCHEMA = {**BASE_SCHEMA, **SEMANTIC_SCHEMA}

DEFAULT_SELECT_TYPES = ("checkbox", "radio", "toggle", "combobox")
DEFAULT_SUBMIT_KEYWORDS = ("submit", "subscribe", "sign up", "register", "send", "book", "request", "join", "continue")


def _type_name(t) -> str:
    return t.value if isinstance(t, ItemType) else str(t)


def is_submit_label(label: str, keywords: Sequence[str] = DEFAULT_SUBMIT_KEYWORDS) -> bool:
    norm = " " + " ".join(re.findall(r"[a-z0-9]+", label.lower())) + " "
    return any(f" {k} " in norm for k in keywords)


def generate_base_facts(
    form: WebForm,
    select_types: Sequence[str] = DEFAULT_SELECT_TYPES,
    submit_keywords: Sequence[str] = DEFAULT_SUBMIT_KEYWORDS,
) -> FactDb:
    db = FactDb(FULL_SCHEMA)
    for t in select_types:
        db.add("is_select_type", (t,))
    for it in form.items:
        type_name = _type_name(it.item_type)
        db.add("item", (it.uid, type_name, it.text or ""))
        if it.checked and type_name in select_types:
            db.add("selected", (it.uid,))
        if it.request_text:
            db.add("element_sent", (it.uid, it.request_text))
        if it.item_type == ItemType.BUTTON and is_submit_label(it.label, submit_keywords):
            db.add("submit_button", (it.uid,))
    return db


def merge_semantic_facts(db: FactDb, facts: Iterable[SemanticFact]) -> FactDb:
    """Add semantic facts to ``db`` in place and return it.

    Raises:
        SchemaError: a fact's term count does not fit its relation.
    """
    for name, arity in SEMANTIC_SCHEMA.items():
        db.declare(name, arity)
    for f in facts:
        rel = RELATION_FOR.get(f.predicate)
        if rel is None:
            raise SchemaError(f"unknown semantic predicate {f.predicate!r}")
        db.add(rel, f.terms)
    return db


def export_facts(db: FactDb, directory) -> None:
    db.export(directory)


def import_facts(directory) -> FactDb:
    return FactDb.load(directory)
