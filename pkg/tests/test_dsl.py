import json

import pytest
from hypothesis import given, strategies as st

from consent_audit.dsl import (
    ITEM_TYPES,
    Item,
    ItemType,
    Metadata,
    RequestText,
    WebForm,
    form_from_dict,
    parse_form,
    serialize_form,
    validate_form,
)
from consent_audit.errors import DslSyntaxError, FormValidationError

from conftest import FIXTURES


def doc(items, form_id="f"):
    return json.dumps({"form_id": form_id, "source_url": None, "items": items})


def test_parse_negative_checkbox():
    text = "Please tick this box if you'd rather not receive these emails"
    form = parse_form(doc([{"uid": "u2", "type": "checkbox",
                             "metadata": {"request_text": {"text": text, "polarity": "negative"}}}]))
    assert len(form.items) == 1
    item = form.items[0]
    assert item.item_type is ItemType.CHECKBOX
    assert item.metadata.request_text == RequestText(text, "negative")


def test_duplicate_uid_rejected():
    with pytest.raises(FormValidationError) as exc:
        parse_form(doc([{"uid": "a", "type": "textbox"}, {"uid": "a", "type": "button"}]))
    assert any("duplicate" in i.message and i.uid == "a" for i in exc.value.issues)


def test_empty_items_rejected():
    with pytest.raises(FormValidationError):
        parse_form(doc([]))


def test_unknown_type_rejected():
    with pytest.raises(FormValidationError) as exc:
        parse_form(doc([{"uid": "a", "type": "slider"}]))
    assert exc.value.issues[0].path == "items[0].type"


@pytest.mark.parametrize("raw", [b"\xff\xfe", b"{not json", b"[]", b'{"form_id": "x"}'])
def test_malformed_documents(raw):
    with pytest.raises(DslSyntaxError):
        parse_form(raw)


def test_unknown_key_is_syntax_error():
    with pytest.raises(DslSyntaxError):
        parse_form(doc([{"uid": "a", "type": "textbox", "colour": "red"}]))


def test_serialize_contains_type_and_controller():
    form = WebForm("f", (Item("u0", ItemType.TEXTBOX, label="First Name"),
                         Item("u1", ItemType.CHECKBOX, Metadata(controller="Hearst UK"))))
    text = serialize_form(form).decode()
    assert '"type": "textbox"' in text
    assert '"controller": "Hearst UK"' in text
    assert text.endswith("\n")


def test_validate_clean_and_broken():
    ok = WebForm("f", (Item("u0", ItemType.BUTTON, label="Go"),))
    assert validate_form(ok) == []
    empty_md = WebForm("f", (Item("u0", ItemType.CHECKBOX, Metadata()),))
    issues = validate_form(empty_md)
    assert [i.path for i in issues] == ["items[0].metadata"]
    bad_pol = WebForm("f", (Item("u0", ItemType.CHECKBOX, Metadata(request_text=RequestText("x", "maybe"))),))
    issues = validate_form(bad_pol)
    assert len(issues) == 1 and "RequestText" in issues[0].message


@pytest.mark.parametrize("path", sorted((FIXTURES / "forms").glob("*.form.json")), ids=lambda p: p.name)
def test_fixture_round_trip_is_byte_stable(path):
    raw = path.read_bytes()
    form = parse_form(raw)
    assert validate_form(form) == []
    once = serialize_form(form)
    assert once == raw
    assert serialize_form(parse_form(once)) == once


# -- property: parse(serialize(f)) == f -------------------------------------

_text = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=30)
_opt = st.one_of(st.none(), _text.filter(bool))


@st.composite
def metadata(draw):
    rt = draw(st.one_of(st.none(), st.builds(RequestText, _text.filter(bool), st.sampled_from([None, "affirmative", "negative"]))))
    md = Metadata(draw(_opt), draw(_opt), draw(_opt), draw(_opt), rt)
    return None if md.is_empty() else md


@st.composite
def forms(draw):
    n = draw(st.integers(1, 6))
    uids = draw(st.lists(st.text(min_size=1, max_size=5), min_size=n, max_size=n, unique=True))
    items = tuple(
        Item(u, ItemType(draw(st.sampled_from(sorted(ITEM_TYPES)))), draw(metadata()), draw(_text), draw(st.booleans()), draw(st.booleans()))
        for u in uids
    )
    return WebForm(draw(_text.filter(bool)), items, draw(st.one_of(st.none(), _text)))


@given(forms())
def test_round_trip_property(form):
    assert validate_form(form) == []
    assert parse_form(serialize_form(form)) == form


@given(forms())
def test_parsed_types_stay_in_closed_set(form):
    parsed = form_from_dict(json.loads(serialize_form(form)))
    assert all(isinstance(i.item_type, ItemType) for i in parsed.items)
