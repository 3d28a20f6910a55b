"""Consent web-form DSL: AST types, validation and canonical JSON serialization.

A form is a flat, ordered list of items. Each item has a uid, a type drawn
from a closed set of accessibility-role-like labels, and optional consent
metadata (action, purpose, controller, withdrawal notice, request text).

The canonical on-disk form is JSON (``.form.json``) with sorted keys and
two-space indentation, so that ``serialize_form(parse_form(b))`` is stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional, Union

from .errors import DslSyntaxError, FormValidationError


class ItemType(str, Enum):
    TEXTBOX = "textbox"
    BUTTON = "button"
    CHECKBOX = "checkbox"
    COMBOBOX = "combobox"
    TOGGLE = "toggle"
    RADIO = "radio"
    STATIC_TEXT = "staticText"
    LINK = "link"
    IFRAME_BOUNDARY = "iframe_boundary"


ITEM_TYPES = frozenset(t.value for t in ItemType)


class Polarity(str, Enum):
    AFFIRMATIVE = "affirmative"
    NEGATIVE = "negative"


POLARITIES = frozenset(p.value for p in Polarity)


@dataclass(frozen=True)
class RequestText:
    text: str
    polarity: Optional[str] = None


@dataclass(frozen=True)
class Metadata:
    action: Optional[str] = None
    purpose: Optional[str] = None
    controller: Optional[str] = None
    withdrawal: Optional[str] = None
    request_text: Optional[RequestText] = None

    def is_empty(self) -> bool:
        return all(
            v is None
            for v in (self.action, self.purpose, self.controller, self.withdrawal, self.request_text)
        )


@dataclass(frozen=True)
class Item:
    """One form element.

    ``label`` holds the visible text of the element (input label, button
    caption, static paragraph). ``checked`` and ``required`` carry the HTML
    state captured at ingest time.
    """

    uid: str
    item_type: Union[ItemType, str]
    metadata: Optional[Metadata] = None
    label: str = ""
    checked: bool = False
    required: bool = False

    @property
    def request_text(self) -> Optional[str]:
        if self.metadata is not None and self.metadata.request_text is not None:
            return self.metadata.request_text.text
        return None

    @property
    def text(self) -> str:
        """The text an item contributes to ``item/3``: request text, else label."""
        rt = self.request_text
        return rt if rt is not None else self.label


@dataclass(frozen=True)
class WebForm:
    form_id: str
    items: tuple[Item, ...] = ()
    source_url: Optional[str] = None

    def item(self, uid: str) -> Item:
        for it in self.items:
            if it.uid == uid:
                return it
        raise KeyError(uid)

    def index_of(self, uid: str) -> int:
        for i, it in enumerate(self.items):
            if it.uid == uid:
                return i
        raise KeyError(uid)


@dataclass(frozen=True)
class ValidationIssue:
    path: str
    message: str
    uid: Optional[str] = None


def validate_form(form: WebForm) -> list[ValidationIssue]:
    """Check every DSL invariant and return the violations found (never raises)."""
    issues: list[ValidationIssue] = []
    if not form.form_id:
        issues.append(ValidationIssue("form_id", "form_id must be non-empty"))
    if not form.items:
        issues.append(ValidationIssue("items", "a form needs at least one item"))
    seen: set[str] = set()
    for i, item in enumerate(form.items):
        base = f"items[{i}]"
        if not item.uid:
            issues.append(ValidationIssue(f"{base}.uid", "uid must be non-empty"))
        elif item.uid in seen:
            issues.append(ValidationIssue(f"{base}.uid", f"duplicate uid {item.uid!r}", item.uid))
        seen.add(item.uid)
        item_type = item.item_type.value if isinstance(item.item_type, ItemType) else item.item_type
        if item_type not in ITEM_TYPES:
            issues.append(ValidationIssue(f"{base}.type", f"unknown item type {item_type!r}", item.uid))
        md = item.metadata
        if md is None:
            continue
        if md.is_empty():
            issues.append(ValidationIssue(f"{base}.metadata", "metadata present but every field is absent", item.uid))
        rt = md.request_text
        if rt is not None:
            if not rt.text:
                issues.append(ValidationIssue(f"{base}.metadata.request_text.text", "request text must be non-empty", item.uid))
            if rt.polarity is not None and rt.polarity not in POLARITIES:
                issues.append(
                    ValidationIssue(
                        f"{base}.metadata.request_text.polarity",
                        f"RequestText polarity must be affirmative or negative, got {rt.polarity!r}",
                        item.uid,
                    )
                )
    return issues


# -- JSON mapping -----------------------------------------------------------

_METADATA_STR_KEYS = ("action", "purpose", "controller", "withdrawal")
_ITEM_KEYS = {"uid", "type", "metadata", "label", "checked", "required"}
_FORM_KEYS = {"form_id", "source_url", "items"}


def _expect(cond: bool, msg: str) -> None:
    if not cond:
        raise DslSyntaxError(msg)


def _opt_str(obj: dict, key: str, where: str) -> Optional[str]:
    v = obj.get(key)
    _expect(v is None or isinstance(v, str), f"{where}.{key} must be a string or null")
    return v


def _metadata_from_json(obj: Any, where: str) -> Optional[Metadata]:
    if obj is None:
        return None
    _expect(isinstance(obj, dict), f"{where} must be an object or null")
    unknown = set(obj) - set(_METADATA_STR_KEYS) - {"request_text"}
    _expect(not unknown, f"{where} has unknown keys {sorted(unknown)}")
    rt = None
    rt_obj = obj.get("request_text")
    if rt_obj is not None:
        _expect(isinstance(rt_obj, dict), f"{where}.request_text must be an object")
        unknown = set(rt_obj) - {"text", "polarity"}
        _expect(not unknown, f"{where}.request_text has unknown keys {sorted(unknown)}")
        _expect(isinstance(rt_obj.get("text"), str), f"{where}.request_text.text must be a string")
        rt = RequestText(rt_obj["text"], _opt_str(rt_obj, "polarity", f"{where}.request_text"))
    return Metadata(**{k: _opt_str(obj, k, where) for k in _METADATA_STR_KEYS}, request_text=rt)


def _item_from_json(obj: Any, where: str) -> Item:
    _expect(isinstance(obj, dict), f"{where} must be an object")
    unknown = set(obj) - _ITEM_KEYS
    _expect(not unknown, f"{where} has unknown keys {sorted(unknown)}")
    _expect(isinstance(obj.get("uid"), str), f"{where}.uid must be a string")
    _expect(isinstance(obj.get("type"), str), f"{where}.type must be a string")
    label = obj.get("label", "")
    _expect(isinstance(label, str), f"{where}.label must be a string")
    for flag in ("checked", "required"):
        _expect(isinstance(obj.get(flag, False), bool), f"{where}.{flag} must be a boolean")
    raw_type = obj["type"]
    item_type: Union[ItemType, str] = ItemType(raw_type) if raw_type in ITEM_TYPES else raw_type
    return Item(
        uid=obj["uid"],
        item_type=item_type,
        metadata=_metadata_from_json(obj.get("metadata"), f"{where}.metadata"),
        label=label,
        checked=obj.get("checked", False),
        required=obj.get("required", False),
    )


def form_from_dict(doc: Any) -> WebForm:
    """Build a WebForm from decoded JSON without validating invariants."""
    _expect(isinstance(doc, dict), "form document must be a JSON object")
    unknown = set(doc) - _FORM_KEYS
    _expect(not unknown, f"form has unknown keys {sorted(unknown)}")
    _expect(isinstance(doc.get("form_id"), str), "form_id must be a string")
    _expect(isinstance(doc.get("items"), list), "items must be a list")
    source_url = _opt_str(doc, "source_url", "form")
    items = tuple(_item_from_json(o, f"items[{i}]") for i, o in enumerate(doc["items"]))
    return WebForm(form_id=doc["form_id"], items=items, source_url=source_url)


def parse_form(serialized: Union[bytes, str]) -> WebForm:
    """Parse and validate a canonical ``.form.json`` document.

    Raises:
        DslSyntaxError: the input is not UTF-8 JSON of the expected shape.
        FormValidationError: a DSL invariant is violated (duplicate uid,
            empty item list, unknown type, bad polarity, empty metadata).
    """
    if isinstance(serialized, bytes):
        try:
            serialized = serialized.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DslSyntaxError(f"form document is not UTF-8: {exc}") from exc
    try:
        doc = json.loads(serialized)
    except json.JSONDecodeError as exc:
        raise DslSyntaxError(f"malformed JSON: {exc}") from exc
    form = form_from_dict(doc)
    issues = validate_form(form)
    if issues:
        raise FormValidationError(issues)
    return form


def _metadata_to_json(md: Optional[Metadata]) -> Optional[dict]:
    if md is None:
        return None
    out: dict[str, Any] = {k: getattr(md, k) for k in _METADATA_STR_KEYS if getattr(md, k) is not None}
    if md.request_text is not None:
        rt: dict[str, Any] = {"text": md.request_text.text}
        if md.request_text.polarity is not None:
            rt["polarity"] = md.request_text.polarity
        out["request_text"] = rt
    return out


def form_to_dict(form: WebForm) -> dict:
    return {
        "form_id": form.form_id,
        "source_url": form.source_url,
        "items": [
            {
                "uid": it.uid,
                "type": it.item_type.value if isinstance(it.item_type, ItemType) else it.item_type,
                "metadata": _metadata_to_json(it.metadata),
                "label": it.label,
                "checked": it.checked,
                "required": it.required,
            }
            for it in form.items
        ],
    }


def serialize_form(form: WebForm) -> bytes:
    """Canonical serialization: sorted keys, items in form order, trailing newline."""
    text = json.dumps(form_to_dict(form), sort_keys=True, indent=2, ensure_ascii=False)
    return (text + "\n").encode("utf-8")


def load_form(path) -> WebForm:
    with open(path, "rb") as fh:
        return parse_form(fh.read())
