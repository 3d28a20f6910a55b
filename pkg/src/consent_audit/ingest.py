"""Rebuild a contextualized WebForm from raw HTML plus visual-element descriptions.

HTML gives structure (types, checked/required state) but misses context
that sits outside the ``<form>`` tag or outside an iframe; the visual
elements (already extracted from screenshots upstream) give what a user
actually sees. ``construct_form`` greedily pairs each HTML element with its
best visual counterpart and merges the leftovers into one ordered form.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from html.parser import HTMLParser
from typing import Iterable, Optional, Sequence, Union

from rapidfuzz.distance import Levenshtein

from .dsl import Item, ItemType, Metadata, RequestText, WebForm
from .errors import IngestError

DEFAULT_PRESELECTED_CLASSES = ("active", "checked", "selected", "on")


@dataclass(frozen=True)
class HtmlElement:
    dom_index: int
    tag: str
    input_type: Optional[str] = None
    text: str = ""
    required: bool = False
    checked: bool = False
    css_classes: tuple[str, ...] = ()
    inside_form_tag: bool = False
    inside_iframe: bool = False


@dataclass(frozen=True)
class VisualElement:
    visual_index: int
    kind: str
    text: str = ""
    segment_index: int = 0


@dataclass(frozen=True)
class MatchConfig:
    threshold: float = 0.5
    text_weight: float = 0.6
    type_weight: float = 0.4

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in [0, 1], got {self.threshold}")
        for name in ("text_weight", "type_weight"):
            w = getattr(self, name)
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {w}")
        if abs(self.text_weight + self.type_weight - 1.0) > 1e-9:
            raise ValueError("text_weight + type_weight must equal 1")


@dataclass(frozen=True)
class MatchResult:
    matched: tuple[tuple[HtmlElement, VisualElement, float], ...] = ()
    unmatched_html: tuple[HtmlElement, ...] = ()
    unmatched_visual: tuple[VisualElement, ...] = ()
    static_context: tuple[VisualElement, ...] = ()


# -- HTML extraction -------------------------------------------------------

_VOID = frozenset(
    "area base br col embed hr img input link meta param source track wbr".split()
)
_SKIP_CONTENT = frozenset({"script", "style", "noscript", "template", "head", "title"})
_TEXT_BLOCKS = frozenset({"p", "h1", "h2", "h3", "h4", "h5", "h6", "li", "legend", "small", "label", "a"})
_TEXT_INLINE = frozenset({"span", "div", "strong", "em", "b", "i", "td", "th", "section", "article", "footer", "font"})
_BUTTON_INPUTS = frozenset({"submit", "button", "reset", "image"})
_CONTROL_ROLES = frozenset({"checkbox", "switch", "radio", "button", "combobox", "textbox"})


@dataclass
class _Node:
    tag: str
    attrs: dict
    parent: Optional["_Node"] = None
    children: list = field(default_factory=list)
    in_iframe: bool = False

    def text(self) -> str:
        parts: list[str] = []
        stack: list = [self]
        while stack:
            n = stack.pop()
            if isinstance(n, str):
                parts.append(n)
            elif n.tag not in _SKIP_CONTENT:
                stack.extend(reversed(n.children))
        return _collapse(" ".join(parts))

    def own_text(self) -> str:
        return _collapse(" ".join(c for c in self.children if isinstance(c, str)))

    def ancestors(self):
        n = self.parent
        while n is not None:
            yield n
            n = n.parent


def _collapse(s: str) -> str:
    return " ".join(s.split())


class _TreeBuilder(HTMLParser):
    def __init__(self, in_iframe: bool = False):
        super().__init__(convert_charrefs=True)
        self.root = _Node("#document", {}, in_iframe=in_iframe)
        self.cur = self.root

    def handle_starttag(self, tag, attrs):
        node = _Node(tag, {k: (v if v is not None else "") for k, v in attrs}, parent=self.cur)
        node.in_iframe = self.cur.in_iframe or self.cur.tag == "iframe"
        self.cur.children.append(node)
        if tag == "iframe" and "srcdoc" in node.attrs:
            sub = _TreeBuilder(in_iframe=True)
            sub.feed(node.attrs["srcdoc"])
            sub.close()
            for child in sub.root.children:
                if isinstance(child, _Node):
                    child.parent = node
                node.children.append(child)
        if tag not in _VOID:
            self.cur = node

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)
        if tag not in _VOID and self.cur.tag == tag:
            self.cur = self.cur.parent

    def handle_endtag(self, tag):
        for n in [self.cur, *self.cur.ancestors()]:
            if n.tag == tag:
                self.cur = n.parent if n.parent is not None else self.root
                return

    def handle_data(self, data):
        if data.strip():
            self.cur.children.append(data)


def _iter_nodes(node: _Node):
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(reversed([c for c in n.children if isinstance(c, _Node)]))


def _classes(node: _Node) -> tuple[str, ...]:
    return tuple(node.attrs.get("class", "").split())


def _is_control(node: _Node) -> bool:
    if node.tag == "input":
        return node.attrs.get("type", "text").lower() != "hidden"
    if node.tag in ("select", "textarea", "button"):
        return True
    return node.attrs.get("role", "").lower() in _CONTROL_ROLES


def _join_unique(parts: Iterable[str]) -> str:
    out: list[str] = []
    for p in parts:
        p = _collapse(p or "")
        if p and p not in out:
            out.append(p)
    return " ".join(out)


def extract_html_elements(
    html: Union[bytes, str], preselected_classes: Sequence[str] = DEFAULT_PRESELECTED_CLASSES
) -> list[HtmlElement]:
    """Collect interactive controls and free-standing text from an HTML document.

    Controls outside ``<form>`` and inside same-document iframes (nested
    markup or ``srcdoc``) are included. A checkbox counts as checked when it
    carries the ``checked`` attribute, ``aria-checked="true"``, or one of
    ``preselected_classes``. Labels bound to a control (``for=`` or wrapping)
    are folded into the control's text rather than emitted on their own.
    """
    if isinstance(html, bytes):
        try:
            html = html.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IngestError(f"HTML input is not decodable as UTF-8: {exc}") from exc
    builder = _TreeBuilder()
    builder.feed(html)
    builder.close()
    nodes = list(_iter_nodes(builder.root))

    by_id = {n.attrs["id"]: n for n in nodes if "id" in n.attrs}
    label_text: dict[int, list[str]] = {}
    bound_labels: set[int] = set()
    for n in nodes:
        if n.tag != "label":
            continue
        target = by_id.get(n.attrs.get("for", ""))
        if target is None:
            target = next((d for d in _iter_nodes(n) if d is not n and _is_control(d)), None)
        if target is not None and _is_control(target):
            label_text.setdefault(id(target), []).append(n.text())
            bound_labels.add(id(n))

    preselected = {c.lower() for c in preselected_classes}
    out: list[HtmlElement] = []
    consumed: set[int] = set()

    for n in nodes:
        if id(n) in consumed or n.tag in _SKIP_CONTENT:
            continue
        if any(a.tag in _SKIP_CONTENT for a in n.ancestors()):
            continue
        attrs = n.attrs
        in_form = any(a.tag == "form" for a in n.ancestors())
        classes = _classes(n)
        if _is_control(n):
            role = attrs.get("role", "").lower()
            input_type = attrs.get("type", "text").lower() if n.tag == "input" else (role or None)
            labels = label_text.get(id(n), [])
            if n.tag == "input" and input_type in _BUTTON_INPUTS:
                text = _join_unique([attrs.get("value", ""), attrs.get("aria-label", ""), *labels])
            elif n.tag in ("button",) or (n.tag not in ("input", "select", "textarea")):
                text = _join_unique([n.text(), attrs.get("aria-label", ""), *labels])
                consumed.update(id(d) for d in _iter_nodes(n))
            else:
                text = _join_unique([*labels, attrs.get("placeholder", ""), attrs.get("aria-label", "")])
                if n.tag in ("select", "textarea"):
                    consumed.update(id(d) for d in _iter_nodes(n))
            checked = (
                "checked" in attrs
                or attrs.get("aria-checked", "").lower() == "true"
                or any(c.lower() in preselected for c in classes)
            )
            required = "required" in attrs or attrs.get("aria-required", "").lower() == "true"
            out.append(
                HtmlElement(
                    dom_index=0,
                    tag=n.tag,
                    input_type=input_type,
                    text=text,
                    required=required,
                    checked=checked,
                    css_classes=classes,
                    inside_form_tag=in_form,
                    inside_iframe=n.in_iframe,
                )
            )
            continue
        if n.tag in _TEXT_BLOCKS:
            if id(n) in bound_labels:
                consumed.update(id(d) for d in _iter_nodes(n) if not _is_control(d))
                continue
            text = n.text()
            for d in _iter_nodes(n):
                if d is not n and not _is_control(d):
                    consumed.add(id(d))
        elif n.tag in _TEXT_INLINE:
            text = n.own_text()
        else:
            continue
        if text:
            out.append(
                HtmlElement(
                    dom_index=0,
                    tag=n.tag,
                    text=text,
                    css_classes=classes,
                    inside_form_tag=in_form,
                    inside_iframe=n.in_iframe,
                )
            )

    return [
        HtmlElement(i, e.tag, e.input_type, e.text, e.required, e.checked, e.css_classes, e.inside_form_tag, e.inside_iframe)
        for i, e in enumerate(out)
    ]


def load_visual_elements(data: Union[bytes, str]) -> list[VisualElement]:
    """Parse a ``.visual.json`` array into VisualElements."""
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise IngestError(f"visual-elements file is not valid JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise IngestError("visual-elements file must hold a JSON array")
    out = []
    seen = set()
    for i, obj in enumerate(doc):
        if not isinstance(obj, dict) or not isinstance(obj.get("visual_index"), int) or not isinstance(obj.get("kind"), str):
            raise IngestError(f"visual element #{i} needs integer visual_index and string kind")
        if obj["visual_index"] in seen:
            raise IngestError(f"duplicate visual_index {obj['visual_index']}")
        seen.add(obj["visual_index"])
        out.append(
            VisualElement(obj["visual_index"], obj["kind"], str(obj.get("text", "")), int(obj.get("segment_index", 0)))
        )
    return out


# -- matching --------------------------------------------------------------

_TEXT_INPUT_TYPES = frozenset(
    "text email tel number password search url date datetime-local month week time".split()
)
_HTML_TEXT_TAGS = (_TEXT_BLOCKS | _TEXT_INLINE) - {"a"}
_VISUAL_ALIASES = {
    "input": "input", "textbox": "input", "text_input": "input", "textarea": "input", "field": "input",
    "checkbox": "checkbox",
    "radio": "radio",
    "toggle": "toggle", "switch": "toggle",
    "combobox": "combobox", "select": "combobox", "dropdown": "combobox",
    "button": "button",
    "static_text": "static_text", "text": "static_text", "label": "static_text", "heading": "static_text",
    "paragraph": "static_text",
    "link": "link",
}
_COMPATIBLE = frozenset({("link", "static_text"), ("static_text", "link")})
_KIND_TO_TYPE = {
    "input": ItemType.TEXTBOX,
    "checkbox": ItemType.CHECKBOX,
    "radio": ItemType.RADIO,
    "toggle": ItemType.TOGGLE,
    "combobox": ItemType.COMBOBOX,
    "button": ItemType.BUTTON,
    "static_text": ItemType.STATIC_TEXT,
    "link": ItemType.LINK,
}
_SELECTABLE = frozenset({ItemType.CHECKBOX, ItemType.RADIO, ItemType.TOGGLE})


def html_kind(h: HtmlElement) -> str:
    """Canonical element kind of an HTML element, comparable with visual kinds."""
    t = (h.input_type or "").lower()
    if h.tag == "input":
        if t in ("checkbox", "radio"):
            return t
        if t in _BUTTON_INPUTS:
            return "button"
        return "input"
    if h.tag == "textarea":
        return "input"
    if h.tag == "select":
        return "combobox"
    if h.tag == "button":
        return "button"
    if t in ("checkbox", "radio", "button", "combobox"):
        return t
    if t == "switch":
        return "toggle"
    if t == "textbox":
        return "input"
    if h.tag == "a":
        return "link"
    if h.tag in _HTML_TEXT_TAGS:
        return "static_text"
    return "other"


def visual_kind(v: VisualElement) -> str:
    return _VISUAL_ALIASES.get(v.kind.strip().lower(), "other")


def type_match(h: HtmlElement, v: VisualElement) -> float:
    a, b = html_kind(h), visual_kind(v)
    if a == "other" or b == "other":
        return 0.0
    return 1.0 if a == b or (a, b) in _COMPATIBLE else 0.0


def normalize_text(s: str) -> str:
    """Lowercase, replace punctuation/symbols (``*``, ``:``...) by spaces, collapse whitespace."""
    chars = [" " if unicodedata.category(c)[0] in "PS" else c for c in s.lower()]
    return " ".join("".join(chars).split())


def text_similarity(a: str, b: str) -> float:
    na, nb = normalize_text(a), normalize_text(b)
    if na == nb:
        return 1.0
    ta, tb = set(na.split()), set(nb.split())
    jaccard = len(ta & tb) / len(ta | tb) if ta | tb else 1.0
    edit = Levenshtein.normalized_similarity(na, nb)
    return max(jaccard, edit)


def text_match(h: HtmlElement, v: VisualElement) -> float:
    return text_similarity(h.text, v.text)


def match_score(h: HtmlElement, v: VisualElement, cfg: MatchConfig) -> float:
    return cfg.type_weight * type_match(h, v) + cfg.text_weight * text_match(h, v)


def match_elements(
    H: Sequence[HtmlElement], V: Sequence[VisualElement], cfg: MatchConfig = MatchConfig()
) -> MatchResult:
    """Greedy one-to-one matching of HTML to visual elements.

    HTML elements are visited in ``dom_index`` order; each takes the still
    unmatched visual element with the highest score, provided the score is
    strictly above ``cfg.threshold``. Equal scores go to the lowest
    ``visual_index``.
    """
    hs = sorted(H, key=lambda h: h.dom_index)
    vs = sorted(V, key=lambda v: v.visual_index)
    taken: set[int] = set()
    matched = []
    for h in hs:
        best_v, best_score = None, cfg.threshold
        for v in vs:
            if v.visual_index in taken:
                continue
            s = match_score(h, v, cfg)
            if s > best_score:
                best_v, best_score = v, s
        if best_v is not None:
            taken.add(best_v.visual_index)
            matched.append((h, best_v, best_score))
    matched_dom = {h.dom_index for h, _, _ in matched}
    unmatched_html = tuple(h for h in hs if h.dom_index not in matched_dom)
    unmatched_visual = tuple(v for v in vs if v.visual_index not in taken)
    static_context = tuple(v for v in unmatched_visual if visual_kind(v) == "static_text")
    return MatchResult(tuple(matched), unmatched_html, unmatched_visual, static_context)


def _make_item(uid: str, kind: str, label: str, checked: bool = False, required: bool = False) -> Item:
    item_type = _KIND_TO_TYPE[kind]
    metadata = None
    if item_type in _SELECTABLE and label:
        metadata = Metadata(request_text=RequestText(label))
    return Item(uid, item_type, metadata, label=label, checked=checked and item_type in _SELECTABLE | {ItemType.COMBOBOX}, required=required)


def merge_form(result: MatchResult, form_id: str = "form", source_url: Optional[str] = None) -> WebForm:
    """Materialize matched pairs and leftovers as one form in visual order.

    Visually anchored items sort by (segment_index, visual_index). An
    HTML-only item is placed right after the matched pair with the closest
    preceding ``dom_index`` (or first, when none precedes it).
    """
    entries: list[tuple[tuple, str, str, bool, bool]] = []
    for h, v, _ in result.matched:
        kind = html_kind(h)
        if kind == "other":
            kind = visual_kind(v) if visual_kind(v) != "other" else "static_text"
        entries.append(((v.segment_index, v.visual_index, 0, h.dom_index), kind, h.text or v.text, h.checked, h.required))
    for v in result.unmatched_visual:
        kind = visual_kind(v)
        if kind == "other":
            kind = "static_text"
        if kind == "static_text" and not v.text.strip():
            continue
        entries.append(((v.segment_index, v.visual_index, 0, -1), kind, v.text, False, False))
    anchors = sorted((h.dom_index, v.segment_index, v.visual_index) for h, v, _ in result.matched)
    for h in result.unmatched_html:
        kind = html_kind(h)
        if kind == "other" or (kind in ("static_text", "link") and not h.text):
            continue
        prior = [a for a in anchors if a[0] < h.dom_index]
        seg, vis = (prior[-1][1], prior[-1][2]) if prior else (-1, -1)
        entries.append(((seg, vis, 1, h.dom_index), kind, h.text, h.checked, h.required))
    entries.sort(key=lambda e: e[0])
    items = tuple(
        _make_item(f"u{i}", kind, label, checked, required)
        for i, (_, kind, label, checked, required) in enumerate(entries)
    )
    return WebForm(form_id=form_id, items=items, source_url=source_url)


def construct_form(
    H: Sequence[HtmlElement],
    V: Sequence[VisualElement],
    cfg: MatchConfig = MatchConfig(),
    form_id: str = "form",
    source_url: Optional[str] = None,
) -> tuple[MatchResult, WebForm]:
    result = match_elements(H, V, cfg)
    return result, merge_form(result, form_id, source_url)
