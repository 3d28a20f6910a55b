import random

import pytest
from hypothesis import given, strategies as st

from consent_audit.dsl import Item, ItemType, WebForm
from consent_audit.errors import EmptyInputError
from consent_audit.reporting import (
    CorpusEntry,
    FormReport,
    PiiTable,
    category_rate,
    classify_pii,
    cooccurrence_cdf,
    corpus_metrics,
    dedupe_violations,
    emit_report,
    parse_report,
    pii_distribution,
    serialize_report,
    website_rate,
    website_rates_csv,
)
from consent_audit.rules import PATTERN_IDS, PATTERNS_BY_ID, Violation

from oracles import tally_cdf


def violation(pattern_id, uid=None, purpose=None, texts=()):
    p = PATTERNS_BY_ID[pattern_id]
    return Violation(pattern_id, p.satisfier_rules, p.principle.value, p.scope.value, p.provision,
                     element_uid=uid, element_type="checkbox" if uid else None, purpose=purpose,
                     request_texts=tuple(texts))


def report(*violations, form_id="f"):
    return FormReport(form_id, None, tuple(violations), "heuristic", "sha256:0", "2023-11-14T22:13:20Z")


def form(*labels, item_type=ItemType.TEXTBOX):
    return WebForm("f", tuple(Item(f"u{i}", item_type, label=l) for i, l in enumerate(labels)))


# -- rates ----------------------------------------------------------------------------------


def test_website_rate_two_forms():
    reports = [
        report(violation("WithdrawalInformed")),
        report(violation("WithdrawalInformed"), violation("ConsentPreselected", "u1"), violation("ConsentPreselected", "u2")),
    ]
    per, rate = website_rate(reports)
    assert per["WithdrawalInformed"] == 1.0
    assert per["ConsentPreselected"] == 0.5
    assert sum(per.values()) == 1.5
    assert abs(rate - 1.5 / 7) <= 1e-9


def test_website_rate_clean_form():
    per, rate = website_rate([report()])
    assert rate == 0.0 and set(per) == set(PATTERN_IDS)


def test_website_rate_empty():
    with pytest.raises(EmptyInputError):
        website_rate([])


def test_website_rate_all_patterns():
    everything = report(*(violation(p, uid="u1") for p in PATTERN_IDS))
    assert website_rate([everything, everything])[1] == 1.0


@given(st.lists(st.sets(st.sampled_from(PATTERN_IDS)), min_size=1, max_size=12))
def test_website_rate_bounds(pattern_sets):
    reports = [report(*(violation(p) for p in ps)) for ps in pattern_sets]
    _, rate = website_rate(reports)
    assert 0.0 <= rate <= 1.0
    assert (rate == 0.0) == all(not ps for ps in pattern_sets)


def test_category_rate():
    assert category_rate({"a": 0.2, "b": 0.4}, {"a": {"X"}, "b": {"X"}}) == pytest.approx({"X": 0.3})
    assert category_rate({"a": 0.5, "b": 0.1}, {"a": {"X", "Y"}, "b": {"Y"}}) == pytest.approx({"X": 0.5, "Y": 0.3})
    assert category_rate({}, {}) == {}


# -- co-occurrence ------------------------------------------------------------------------------


def _with_k(k, rng=None):
    ids = list(PATTERN_IDS)
    if rng:
        rng.shuffle(ids)
    # duplicated instances of one pattern must not raise k
    vs = [violation(p, uid="u1") for p in ids[:k]] + [violation(p, uid="u2") for p in ids[:k]]
    return report(*vs)


def test_cdf_example():
    assert cooccurrence_cdf([_with_k(k) for k in (0, 1, 1, 2)]) == [(0, 0.25), (1, 0.75), (2, 1.0)]


def test_cdf_all_compliant():
    assert cooccurrence_cdf([report(), report()]) == [(0, 1.0)]


def test_cdf_empty():
    with pytest.raises(EmptyInputError):
        cooccurrence_cdf([])


def test_cdf_matches_tally_oracle():
    rng = random.Random(11)
    ks = [rng.choice([0, 1, 1, 2, 2, 2, 3, 4, 7]) for _ in range(100)]
    assert cooccurrence_cdf([_with_k(k, rng) for k in ks]) == tally_cdf(ks)


@given(st.lists(st.integers(0, 7), min_size=1, max_size=40))
def test_cdf_monotone_and_complete(ks):
    cdf = cooccurrence_cdf([_with_k(k) for k in ks])
    fracs = [f for _, f in cdf]
    assert fracs == sorted(fracs) and fracs[-1] == 1.0
    assert cdf == tally_cdf(ks)


# -- PII ----------------------------------------------------------------------------------------


def test_classify_pii_examples():
    assert classify_pii(form("Email address")) == {"email"}
    assert classify_pii(form("First Name", "Phone")) == {"first_name", "phone"}
    assert classify_pii(WebForm("f", ())) == set()
    assert classify_pii(form("Email", item_type=ItemType.CHECKBOX)) == set()
    assert classify_pii(form("Last name", "Full name", "Favourite colour")) == {"last_name", "full_name", "other"}


def test_pii_table_is_versioned():
    t = PiiTable.load()
    assert t.version == "1" and t.raw
    with pytest.raises(ValueError):
        PiiTable.from_json('{"types": [["shoe_size", ["shoe"]]]}')


def test_pii_distribution_examples():
    fg = violation("GenuineChoice", purpose="x")
    pairs = [(report(fg), form("Email")), (report(fg), form("Email", "Phone"))]
    dist = pii_distribution(pairs)
    assert dist[("FreelyGiven", "email")] == 1.0
    assert dist[("FreelyGiven", "phone")] == 0.5
    assert not any(pr == "Unambiguous" for pr, _ in dist)


def test_pii_distribution_planted_tally():
    # label -> type is written out by hand here, independent of the table lookup
    labels = {"Email": "email", "First name": "first_name", "Surname": "last_name",
              "Mobile": "phone", "Company": "company", "Postcode": "postal_address"}
    rng = random.Random(5)
    principles = {"FreelyGiven": "GenuineChoice", "SpecificInformed": "WithdrawalInformed", "Unambiguous": "OptOutConsent"}
    pairs, planted = [], []
    for i in range(60):
        chosen = rng.sample(sorted(labels), rng.randint(0, 4))
        prs = rng.sample(sorted(principles), rng.randint(0, 3))
        vs = [violation(principles[p], uid="u0", purpose="x") for p in prs]
        pairs.append((report(*vs), form(*chosen)))
        planted.append((set(prs), {labels[l] for l in chosen}))
    expected = {}
    for pr in principles:
        rows = [types for prs, types in planted if pr in prs]
        for t in {t for types in rows for t in types}:
            expected[(pr, t)] = sum(t in types for types in rows) / len(rows)
    assert pii_distribution(pairs) == pytest.approx(expected)


# -- reports --------------------------------------------------------------------------------------


def test_dedup_collects_request_texts():
    a = violation("OptOutConsent", "u2", texts=["first"])
    b = violation("OptOutConsent", "u2", texts=["second"])
    [merged] = dedupe_violations([a, b])
    assert merged.request_texts == ("first", "second")


def test_emit_report_orders_by_pattern():
    r = emit_report(WebForm("f", ()), [violation("OptOutConsent", "u1"), violation("WithdrawalInformed")], timestamp="t")
    assert [v.pattern_id for v in r.violations] == ["WithdrawalInformed", "OptOutConsent"]


def test_report_timestamp_reproducible():
    assert emit_report(WebForm("f", ()), []).timestamp == "2023-11-14T22:13:20Z"


def test_report_round_trip():
    r = report(violation("GenuineChoice", purpose="ads", texts=["We show ads"]), violation("OptOutConsent", "u3", texts=["a", "b"]))
    text = serialize_report(r)
    assert parse_report(text) == r
    assert serialize_report(parse_report(text)) == text
    assert list(__import__("json").loads(text)) == ["form_id", "source_url", "violations", "annotator_backend",
                                                   "config_fingerprint", "timestamp"]


def test_corpus_metrics_and_csv():
    entries = [
        CorpusEntry("a.com", "a/1", form("Email"), report(violation("WithdrawalInformed"))),
        CorpusEntry("a.com", "a/2", form("Email"), report(violation("WithdrawalInformed"), violation("ConsentPreselected", "u1"))),
        CorpusEntry("b.com", "b/1", form("Phone"), report()),
    ]
    m = corpus_metrics(entries, {"a.com": {"news"}, "b.com": {"news", "shop"}})
    assert m["forms"] == 3
    assert abs(m["per_website"]["a.com"]["website_rate"] - 1.5 / 7) <= 1e-9
    assert m["per_category"] == pytest.approx({"news": 0.75 / 7, "shop": 0.0})
    assert m["cooccurrence_cdf"] == [[0, 1 / 3], [1, 2 / 3], [2, 1.0]]
    assert m["pii_distribution"] == {"SpecificInformed": {"email": 1.0}, "Unambiguous": {"email": 1.0}}
    lines = website_rates_csv(m).splitlines()
    assert lines[0].startswith("website,forms,GenuineChoice")
    assert lines[1].endswith(",0.214286") and lines[2].startswith("b.com,1,")
