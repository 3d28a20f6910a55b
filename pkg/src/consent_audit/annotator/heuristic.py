"""Deterministic keyword/pattern annotator."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .model import CATEGORIES, AnnotationRequest, SemanticFact, filter_valid

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?;])\s+|\n+")
_TICK_RE = re.compile(r"\b(tick|check|untick|uncheck|select|mark)(?:ing)?\s+(this|the|that)\s+(box|checkbox|option)\b", re.I)
_CLICK_RE = re.compile(
    r"\bclick(?:ing)?\s+(?:on\s+)?(?:the\s+)?(?:\"([^\"]+)\"|'([^']+)'|“([^”]+)”|([\w-]+))",
    re.I,
)
_VERB_RE = re.compile(r"\b(subscrib(?:e|ing)|submit(?:ting)?|register(?:ing)?|sign(?:ing)?[ -]up)\b", re.I)
_VERB_NORMAL = {"subscrib": "subscribe", "submit": "submit", "register": "register", "sign": "sign up"}
_CONTROLLER_VERB_RE = re.compile(
    r"\b((?:[A-Z0-9][\w&'-]*)(?:\s+[A-Z0-9][\w&'-]*)*)\s+(?:processes|will process|is the (?:data )?controller)\b"
)
_LEADING_NOISE = {"The", "A", "An", "By", "And", "I", "We", "Our", "At", "From", "With", "Please", "You"}


@dataclass(frozen=True)
class KeywordTables:
    version: str
    purpose_triggers: tuple[re.Pattern, ...]
    categories: dict
    withdraw_triggers: tuple[re.Pattern, ...]
    negative_polarity: tuple[re.Pattern, ...]
    controller_suffixes: tuple[str, ...]
    organizations: tuple[str, ...]
    raw: str

    @classmethod
    def from_json(cls, text: str) -> "KeywordTables":
        doc = json.loads(text)
        cats = {k: tuple(v) for k, v in doc["categories"].items()}
        unknown = set(cats) - set(CATEGORIES)
        if unknown:
            raise ValueError(f"keyword table names categories outside the taxonomy: {sorted(unknown)}")

        def compile_all(key):
            return tuple(re.compile(p, re.I) for p in doc.get(key, []))

        return cls(
            version=str(doc.get("version", "0")),
            purpose_triggers=compile_all("purpose_triggers"),
            categories=cats,
            withdraw_triggers=compile_all("withdraw_triggers"),
            negative_polarity=compile_all("negative_polarity"),
            controller_suffixes=tuple(doc.get("controller_suffixes", [])),
            organizations=tuple(doc.get("organizations", [])),
            raw=text,
        )

    @classmethod
    def load(cls, path: Union[str, Path, None] = None) -> "KeywordTables":
        if path is None:
            return default_tables()
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


_DEFAULT: Optional[KeywordTables] = None


def default_tables() -> KeywordTables:
    global _DEFAULT
    if _DEFAULT is None:
        text = resources.files("consent_audit").joinpath("data/default.keywords.json").read_text(encoding="utf-8")
        _DEFAULT = KeywordTables.from_json(text)
    return _DEFAULT


def _sentences(text: str) -> list[tuple[int, str]]:
    out = []
    pos = 0
    for m in _SENTENCE_SPLIT.finditer(text):
        out.append((pos, text[pos:m.start()]))
        pos = m.end()
    out.append((pos, text[pos:]))
    return [(p, s) for p, s in out if s.strip()]


def _clause(sentence: str, start: int) -> str:
    return sentence[start:].strip().rstrip(".!?;:, ").strip()


def _earliest(patterns, sentence: str) -> Optional[int]:
    best = None
    for pat in patterns:
        m = pat.search(sentence)
        if not m:
            continue
        start = m.start("p") if "p" in pat.groupindex and m.group("p") is not None else m.start()
        if best is None or start < best:
            best = start
    return best


def extract_purpose(text: str, tables: KeywordTables) -> Optional[str]:
    """First purpose clause in ``text``; withdrawal sentences are skipped."""
    for _, sentence in _sentences(text):
        if any(p.search(sentence) for p in tables.withdraw_triggers):
            continue
        start = _earliest(tables.purpose_triggers, sentence)
        if start is not None:
            clause = _clause(sentence, start)
            if clause:
                return clause
    return None


def extract_withdrawal(text: str, tables: KeywordTables) -> Optional[str]:
    for _, sentence in _sentences(text):
        start = _earliest(tables.withdraw_triggers, sentence)
        if start is not None:
            return _clause(sentence, start)
    return None


def categorize(purpose: str, tables: KeywordTables) -> list[str]:
    low = " " + re.sub(r"\s+", " ", purpose.lower()) + " "
    found = [c for c in CATEGORIES if any(k.lower() in low for k in tables.categories.get(c, ()))]
    return found or ["other"]


def extract_actions(text: str) -> list[str]:
    found: list[tuple[int, str]] = []
    for m in _TICK_RE.finditer(text):
        found.append((m.start(), f"{m.group(1).lower()} {m.group(2).lower()} {m.group(3).lower()}"))
    for m in _CLICK_RE.finditer(text):
        obj = next(g for g in m.groups() if g)
        found.append((m.start(), "click " + obj.lower().strip()))
    for m in _VERB_RE.finditer(text):
        word = m.group(1).lower()
        norm = next(v for k, v in _VERB_NORMAL.items() if word.startswith(k))
        # "click subscribe" already covers the verb as the click object
        if not any(a.endswith(" " + norm) for _, a in found):
            found.append((m.start(), norm))
    seen: list[str] = []
    for _, a in sorted(found):
        if a not in seen:
            seen.append(a)
    return seen


def extract_controllers(text: str, tables: KeywordTables) -> list[str]:
    out: list[str] = []
    for org in tables.organizations:
        if re.search(r"(?<!\w)" + re.escape(org) + r"(?!\w)", text, re.I):
            out.append(org)
    if tables.controller_suffixes:
        suffix = "|".join(re.escape(s) for s in sorted(tables.controller_suffixes, key=len, reverse=True))
        pat = re.compile(r"((?:[A-Z0-9][\w&'-]*\s+){0,3}?[A-Z0-9][\w&'-]*)\s+(" + suffix + r")(?![\w])")
        for m in pat.finditer(text):
            words = m.group(1).split()
            while words and words[0] in _LEADING_NOISE:
                words.pop(0)
            if words:
                out.append(" ".join(words + [m.group(2)]))
    for m in _CONTROLLER_VERB_RE.finditer(text):
        words = m.group(1).split()
        while words and words[0] in _LEADING_NOISE:
            words.pop(0)
        if words:
            out.append(" ".join(words))
    return list(dict.fromkeys(out))


def is_negative(text: str, tables: KeywordTables) -> bool:
    return any(p.search(text) for p in tables.negative_polarity)


def annotate_heuristic(req: AnnotationRequest, tables: Optional[KeywordTables] = None) -> list[SemanticFact]:
    """Extract semantic facts from the request texts with keyword tables.

    Explicit metadata fields (action, purpose, controller, withdrawal) take
    precedence over extraction from the free text of the same element.
    """
    tables = tables or default_tables()
    by_uid: dict[str, dict[str, list[str]]] = {}
    order: list[str] = []
    for entry in req.texts:
        if entry.uid not in by_uid:
            order.append(entry.uid)
        by_uid.setdefault(entry.uid, {}).setdefault(entry.field, []).append(entry.text)

    facts: list[SemanticFact] = []

    def emit(pred, *terms):
        facts.append(SemanticFact(pred, terms))

    for uid in order:
        fields = by_uid[uid]
        prose = fields.get("request_text", []) + fields.get("static_text", [])
        anchor = prose[0] if prose else None

        purposes: list[tuple[str, str]] = []
        for p in fields.get("purpose", []):
            purposes.append((anchor or p, p))
        if not fields.get("purpose"):
            for t in prose:
                p = extract_purpose(t, tables)
                if p:
                    purposes.append((t, p))
        for t, p in purposes:
            emit("Purpose", t, p)
            for c in categorize(p, tables):
                emit("Category", t, c, p)

        if fields.get("action"):
            for a in fields["action"]:
                emit("Action", anchor or a, a.strip())
        else:
            for t in prose:
                for a in extract_actions(t):
                    emit("Action", t, a)

        if fields.get("controller"):
            for c in fields["controller"]:
                emit("Controller", c.strip())
        else:
            for t in prose:
                for c in extract_controllers(t, tables):
                    emit("Controller", c)

        for w in fields.get("withdrawal", []):
            emit("Withdraw", anchor or w, extract_withdrawal(w, tables) or w.strip())
        for t in prose:
            method = extract_withdrawal(t, tables)
            if method:
                emit("Withdraw", t, method)

        declared = req.declared_polarity.get(uid)
        for t in fields.get("request_text", []):
            negative = declared == "negative" if declared else is_negative(t, tables)
            if not negative:
                emit("PolarityAffirmative", t)
        for t in fields.get("static_text", []):
            if not is_negative(t, tables):
                emit("PolarityAffirmative", t)

    return filter_valid(dict.fromkeys(facts), "heuristic")
