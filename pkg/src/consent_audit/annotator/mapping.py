"""Link extracted actions to the form elements that perform them."""

from __future__ import annotations

import re
from typing import Iterable

from ..dsl import ItemType, WebForm
from .model import SemanticFact

_TICK_VERBS = ("tick", "check", "untick", "uncheck", "select", "mark")
_SELECTABLE = {ItemType.CHECKBOX, ItemType.RADIO, ItemType.TOGGLE}
_CLICKABLE = {ItemType.BUTTON, ItemType.LINK}
_STOPWORDS = {"click", "the", "a", "an", "on", "to", "our", "your", "this", "that", "button", "link", "here", "up"}


def _tokens(text: str) -> set[str]:
    return set(re.findall(r"[a-z0-9]+", text.lower()))


def _content_tokens(text: str) -> set[str]:
    toks = _tokens(text)
    return (toks - _STOPWORDS) or toks


def _carriers(form: WebForm, r: str) -> list[int]:
    return [i for i, it in enumerate(form.items) if it.request_text == r or (it.request_text is None and it.label == r)]


def map_actions(facts: Iterable[SemanticFact], form: WebForm) -> list[SemanticFact]:
    """ActionMapping(E, A) for each Action(R, A) with a compatible element E.

    Box-ticking actions go to the selectable element carrying R, else to the
    selectable element closest to R in item order. Click-like actions go to
    buttons or links whose caption shares a content word with the action.
    """
    items = form.items
    out: dict[SemanticFact, None] = {}
    for fact in facts:
        if fact.predicate != "Action":
            continue
        r, action = fact.terms
        words = action.lower().split()
        if words and words[0] in _TICK_VERBS:
            carriers = _carriers(form, r)
            own = [i for i in carriers if items[i].item_type in _SELECTABLE]
            targets = own
            if not targets and carriers:
                selectable = [i for i, it in enumerate(items) if it.item_type in _SELECTABLE]
                if selectable:
                    best = min(selectable, key=lambda j: (min(abs(j - c) for c in carriers), j))
                    targets = [best]
            for i in targets:
                out[SemanticFact("ActionMapping", (items[i].uid, action))] = None
        else:
            wanted = _content_tokens(action)
            for it in items:
                if it.item_type in _CLICKABLE and wanted & _content_tokens(it.label):
                    out[SemanticFact("ActionMapping", (it.uid, action))] = None
    return list(out)
