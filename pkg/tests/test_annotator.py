import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import given, settings, strategies as st

from consent_audit.annotator import (
    CATEGORIES,
    AnnotationRequest,
    RemoteAnnotator,
    SemanticFact,
    ServiceConfig,
    TextEntry,
    annotate_heuristic,
    build_request,
    default_tables,
    map_actions,
    validate_fact,
)
from consent_audit.annotator.heuristic import is_negative
from consent_audit.dsl import Item, ItemType, Metadata, RequestText, WebForm
from consent_audit.errors import AuthError, ProtocolError, TransportError

HEARST = ("Hearst UK would like to email you about our products and services. "
          "Please tick this box if you'd rather not receive these emails.")


def req(*entries, polarity=None):
    return AnnotationRequest("f", tuple(TextEntry(*e) for e in entries), polarity or {})


def by_pred(facts, pred):
    return [f.terms for f in facts if f.predicate == pred]


# -- heuristic ---------------------------------------------------------------------


def test_hearst_request_text():
    facts = annotate_heuristic(req(("u2", "request_text", HEARST)))
    assert (HEARST, "tick this box") in by_pred(facts, "Action")
    assert ("Hearst UK",) in by_pred(facts, "Controller")
    [(t, purpose)] = by_pred(facts, "Purpose")
    assert t == HEARST and purpose.startswith("email you about our products")
    assert by_pred(facts, "PolarityAffirmative") == []


def test_unsubscribe_static_text():
    t = "You can unsubscribe at any time."
    facts = annotate_heuristic(req(("u5", "static_text", t)))
    assert by_pred(facts, "Withdraw") == [(t, "unsubscribe at any time")]
    assert by_pred(facts, "Purpose") == []


def test_empty_request():
    assert annotate_heuristic(req()) == []


def test_explicit_metadata_wins():
    r = "Tick here to hear from us"
    facts = annotate_heuristic(req(("u1", "request_text", r), ("u1", "purpose", "newsletter updates"),
                                   ("u1", "controller", "Example Co"), ("u1", "action", "tick this box")))
    assert by_pred(facts, "Purpose") == [(r, "newsletter updates")]
    assert by_pred(facts, "Category") == [(r, "newsletter", "newsletter updates")]
    assert by_pred(facts, "Controller") == [("Example Co",)]
    assert by_pred(facts, "Action") == [(r, "tick this box")]


def test_declared_polarity_overrides_patterns():
    r = "I would like offers"
    assert by_pred(annotate_heuristic(req(("u", "request_text", r), polarity={"u": "negative"})), "PolarityAffirmative") == []
    r2 = "Untick if you do not want offers"
    assert by_pred(annotate_heuristic(req(("u", "request_text", r2), polarity={"u": "affirmative"})), "PolarityAffirmative") == [(r2,)]


def test_bundled_purpose_gets_two_categories():
    r = "I agree to the Privacy Policy and to receiving marketing communications from giosg."
    facts = annotate_heuristic(req(("u3", "request_text", r)))
    assert {c for (_, c, _) in by_pred(facts, "Category")} == {"policy_agreement", "marketing_communication"}


def test_uncategorised_purpose_is_other():
    r = "We would like to send you things."
    facts = annotate_heuristic(req(("u", "request_text", r)))
    assert [c for (_, c, _) in by_pred(facts, "Category")] == ["other"]


@pytest.mark.parametrize("text,actions", [
    ("Click 'Subscribe' to get our newsletter", ["click subscribe"]),
    ("By clicking on the Register button you agree", ["click register"]),
    ("Check the box to receive offers", ["check the box"]),
    ("Sign up for updates", ["sign up"]),
    ("Nothing to do here", []),
])
def test_action_extraction(text, actions):
    facts = annotate_heuristic(req(("u", "static_text", text)))
    assert [a for (_, a) in by_pred(facts, "Action")] == actions


def test_heuristic_is_deterministic():
    r = req(("u2", "request_text", HEARST), ("u5", "static_text", "You can opt out at any time."))
    assert annotate_heuristic(r) == annotate_heuristic(r)


@given(st.text(max_size=80))
@settings(max_examples=200)
def test_heuristic_total_valid_and_polarity_exclusive(text):
    facts = annotate_heuristic(req(("u", "request_text", text))) if text else []
    assert all(validate_fact(f) is None for f in facts)
    affirmative = (text,) in by_pred(facts, "PolarityAffirmative")
    if text:
        assert affirmative != is_negative(text, default_tables())


def test_build_request_collects_fields():
    form = WebForm("f", (
        Item("a", ItemType.STATIC_TEXT, label="Hello"),
        Item("b", ItemType.CHECKBOX, Metadata(controller="X", request_text=RequestText("Yes", "affirmative"))),
        Item("c", ItemType.TEXTBOX, label="Email"),
    ))
    r = build_request(form)
    assert [(t.uid, t.field) for t in r.texts] == [("a", "static_text"), ("b", "request_text"), ("b", "controller")]
    assert r.declared_polarity == {"b": "affirmative"}


# -- validation --------------------------------------------------------------------


def test_validate_fact():
    assert validate_fact(SemanticFact("Category", ("t", "newsletter", "p"))) is None
    assert "terms" in validate_fact(SemanticFact("Category", ("t", "newsletter")))
    assert "taxonomy" in validate_fact(SemanticFact("Category", ("t", "gossip", "p")))
    assert validate_fact(SemanticFact("Nope", ("x",)))
    assert "other" in CATEGORIES


# -- action mapping ------------------------------------------------------------------


def _form():
    return WebForm("f", (
        Item("u0", ItemType.STATIC_TEXT, label="Tick the box below to get news."),
        Item("u1", ItemType.TEXTBOX, label="Email"),
        Item("u2", ItemType.CHECKBOX, Metadata(request_text=RequestText(HEARST))),
        Item("u3", ItemType.CHECKBOX, label="Other"),
        Item("u4", ItemType.BUTTON, label="Subscribe"),
    ))


def test_tick_maps_to_carrier_checkbox():
    out = map_actions([SemanticFact("Action", (HEARST, "tick this box"))], _form())
    assert out == [SemanticFact("ActionMapping", ("u2", "tick this box"))]


def test_tick_from_static_text_maps_to_nearest_selectable():
    out = map_actions([SemanticFact("Action", ("Tick the box below to get news.", "tick the box"))], _form())
    assert out == [SemanticFact("ActionMapping", ("u2", "tick the box"))]


def test_click_maps_by_token_overlap():
    out = map_actions([SemanticFact("Action", ("any", "click subscribe"))], _form())
    assert out == [SemanticFact("ActionMapping", ("u4", "click subscribe"))]


def test_unmatched_action_has_no_mapping():
    assert map_actions([SemanticFact("Action", ("any", "sign the printed form"))], _form()) == []


# -- remote ----------------------------------------------------------------------------


class _Service:
    """Scriptable local HTTP endpoint."""

    def __init__(self):
        self.replies = []  # list of (status, body) consumed in order; last one repeats
        self.requests = []
        self.lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = self.rfile.read(int(self.headers["Content-Length"]))
                with outer.lock:
                    outer.requests.append((dict(self.headers), json.loads(body)))
                    status, reply = outer.replies[0] if len(outer.replies) == 1 else outer.replies.pop(0)
                payload = reply if isinstance(reply, bytes) else json.dumps(reply).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/annotate"
        threading.Thread(target=self.server.serve_forever, daemon=True).start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def service():
    s = _Service()
    yield s
    s.close()


GOOD = {"facts": [
    {"predicate": "Action", "terms": [HEARST, "tick this box"]},
    {"predicate": "Controller", "terms": ["Hearst UK"]},
    {"predicate": "Purpose", "terms": [HEARST, "email you about our products and services"]},
]}


def client(url, **kw):
    sleeps = []
    kw.setdefault("timeout", 5)
    cfg = ServiceConfig(url=url, key="secret", backoff_base=0.01, **kw)
    return RemoteAnnotator(cfg, sleep=sleeps.append), sleeps


def test_remote_pass_through(service):
    service.replies = [(200, GOOD)]
    ann, _ = client(service.url)
    facts = ann.annotate(req(("u2", "request_text", HEARST)))
    assert facts == [SemanticFact(f["predicate"], tuple(f["terms"])) for f in GOOD["facts"]]
    headers, body = service.requests[0]
    assert headers["Authorization"] == "Bearer secret"
    assert body["texts"] == [{"uid": "u2", "field": "request_text", "text": HEARST}]
    assert set(body) == {"template", "version", "texts"}


def test_remote_drops_invalid_fact(service, caplog):
    service.replies = [(200, {"facts": [{"predicate": "Category", "terms": ["t", "newsletter"]},
                                         {"predicate": "Controller", "terms": ["Acme"]}]})]
    ann, _ = client(service.url)
    with caplog.at_level(logging.WARNING):
        facts = ann.annotate(req(("u", "request_text", "x")))
    assert facts == [SemanticFact("Controller", ("Acme",))]
    assert any("Category" in r.message for r in caplog.records)


def test_remote_unreachable_retries_three_times():
    ann, sleeps = client("http://127.0.0.1:9/annotate", timeout=0.5)
    with pytest.raises(TransportError):
        ann.annotate(req(("u", "request_text", "x")))
    assert ann.round_trips == 3
    assert sleeps == [0.01, 0.02]


def test_remote_retries_server_errors_then_succeeds(service):
    service.replies = [(503, {}), (200, GOOD)]
    ann, sleeps = client(service.url)
    assert len(ann.annotate(req(("u2", "request_text", HEARST)))) == 3
    assert len(service.requests) == 2 and sleeps == [0.01]


def test_remote_auth_error(service):
    service.replies = [(401, {"error": "no"})]
    ann, _ = client(service.url)
    with pytest.raises(AuthError):
        ann.annotate(req(("u", "request_text", "x")))
    assert len(service.requests) == 1


@pytest.mark.parametrize("reply", [b"not json", {"nope": []}, {"facts": ["x"]}])
def test_remote_protocol_error(service, reply):
    service.replies = [(200, reply)]
    ann, _ = client(service.url)
    with pytest.raises(ProtocolError):
        ann.annotate(req(("u", "request_text", "x")))


def test_remote_cache_single_round_trip(service):
    service.replies = [(200, GOOD)]
    ann, _ = client(service.url)
    r = req(("u2", "request_text", HEARST))
    with ThreadPoolExecutor(8) as pool:
        results = list(pool.map(lambda _: ann.annotate(r), range(16)))
    assert all(x == results[0] for x in results)
    assert len(service.requests) == 1


def test_remote_disk_cache(service, tmp_path):
    service.replies = [(200, GOOD)]
    r = req(("u2", "request_text", HEARST))
    first, _ = client(service.url, cache_dir=str(tmp_path))
    first.annotate(r)
    second, _ = client(service.url, cache_dir=str(tmp_path))
    assert second.annotate(r) == first.annotate(r)
    assert len(service.requests) == 1


def test_service_config_from_env(monkeypatch):
    monkeypatch.delenv("CONSENT_AUDIT_ANNOTATOR_URL", raising=False)
    with pytest.raises(TransportError):
        ServiceConfig.from_env()
    monkeypatch.setenv("CONSENT_AUDIT_ANNOTATOR_URL", "http://x")
    monkeypatch.setenv("CONSENT_AUDIT_ANNOTATOR_KEY", "k")
    cfg = ServiceConfig.from_env()
    assert (cfg.url, cfg.key) == ("http://x", "k")
