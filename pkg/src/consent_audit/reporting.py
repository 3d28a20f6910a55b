"""Per-form reports and corpus-level metrics."""

from __future__ import annotations

import csv
import io
import json
import os
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .dsl import ItemType, WebForm
from .errors import EmptyInputError
from .rules import PATTERN_IDS, PATTERNS_BY_ID, Violation

PII_TYPES = (
    "email",
    "first_name",
    "last_name",
    "full_name",
    "phone",
    "company",
    "postal_address",
    "financial",
    "demographic",
    "other",
)


@dataclass(frozen=True)
class FormReport:
    form_id: str
    source_url: Optional[str]
    violations: tuple[Violation, ...]
    annotator_backend: str
    config_fingerprint: str
    timestamp: str

    @property
    def patterns(self) -> set[str]:
        return {v.pattern_id for v in self.violations}


def report_timestamp() -> str:
    """UTC time of the run; ``SOURCE_DATE_EPOCH`` pins it for reproducible output."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.replace(microsecond=0).isoformat().replace("+00:00", "Z")


def dedupe_violations(violations: Iterable[Violation]) -> list[Violation]:
    merged: dict[tuple, Violation] = {}
    for v in violations:
        prev = merged.get(v.scope_key)
        if prev is None:
            merged[v.scope_key] = v
        else:
            texts = tuple(sorted(set(prev.request_texts) | set(v.request_texts)))
            merged[v.scope_key] = replace(prev, request_texts=texts)
    order = {p: i for i, p in enumerate(PATTERN_IDS)}
    return sorted(merged.values(), key=lambda v: (order.get(v.pattern_id, len(order)), v.scope_key))


def emit_report(
    form: WebForm,
    violations: Iterable[Violation],
    annotator_backend: str = "heuristic",
    config_fingerprint: str = "",
    timestamp: Optional[str] = None,
) -> FormReport:
    return FormReport(
        form_id=form.form_id,
        source_url=form.source_url,
        violations=tuple(dedupe_violations(violations)),
        annotator_backend=annotator_backend,
        config_fingerprint=config_fingerprint,
        timestamp=timestamp or report_timestamp(),
    )


def violation_to_dict(v: Violation) -> dict:
    out: dict = {
        "pattern": v.pattern_id,
        "rules": list(v.rule_ids),
        "principle": v.principle,
        "provision": v.provision,
        "scope": v.scope,
    }
    if v.element_uid is not None:
        out["element_uid"] = v.element_uid
        out["element_type"] = v.element_type
    if v.purpose is not None:
        out["purpose"] = v.purpose
    out["request_texts"] = list(v.request_texts)
    return out


def violation_from_dict(d: Mapping) -> Violation:
    return Violation(
        pattern_id=d["pattern"],
        rule_ids=tuple(d["rules"]),
        principle=d["principle"],
        scope=d["scope"],
        provision=d["provision"],
        element_uid=d.get("element_uid"),
        element_type=d.get("element_type"),
        purpose=d.get("purpose"),
        request_texts=tuple(d.get("request_texts", ())),
    )


def report_to_dict(r: FormReport) -> dict:
    return {
        "form_id": r.form_id,
        "source_url": r.source_url,
        "violations": [violation_to_dict(v) for v in r.violations],
        "annotator_backend": r.annotator_backend,
        "config_fingerprint": r.config_fingerprint,
        "timestamp": r.timestamp,
    }


def report_from_dict(d: Mapping) -> FormReport:
    return FormReport(
        form_id=d["form_id"],
        source_url=d.get("source_url"),
        violations=tuple(violation_from_dict(v) for v in d["violations"]),
        annotator_backend=d["annotator_backend"],
        config_fingerprint=d["config_fingerprint"],
        timestamp=d["timestamp"],
    )


def serialize_report(r: FormReport) -> str:
    return json.dumps(report_to_dict(r), indent=2, ensure_ascii=False) + "\n"


def parse_report(text: str) -> FormReport:
    return report_from_dict(json.loads(text))


# -- corpus metrics ---------------------------------------------------------


def website_rate(reports: Sequence[FormReport]) -> tuple[dict[str, float], float]:
    """Per-pattern share of forms violating it, and the mean over all patterns.

    Raises:
        EmptyInputError: no reports.
    """
    if not reports:
        raise EmptyInputError("website_rate needs at least one form")
    n = len(reports)
    per_pattern = {p: sum(1 for r in reports if p in r.patterns) / n for p in PATTERN_IDS}
    return per_pattern, sum(per_pattern.values()) / len(PATTERN_IDS)


def category_rate(site_rates: Mapping[str, float], site_categories: Mapping[str, Iterable[str]]) -> dict[str, float]:
    """Unweighted mean website rate per category; a site counts once in each of its categories."""
    buckets: dict[str, list[float]] = {}
    for site, rate in site_rates.items():
        for cat in sorted(set(site_categories.get(site, ()))):
            buckets.setdefault(cat, []).append(rate)
    return {c: sum(v) / len(v) for c, v in sorted(buckets.items())}


def cooccurrence_cdf(reports: Sequence[FormReport]) -> list[tuple[int, float]]:
    """CDF over forms of the number of distinct violated patterns.

    Raises:
        EmptyInputError: no reports.
    """
    if not reports:
        raise EmptyInputError("cooccurrence_cdf needs at least one form")
    counts = Counter(len(r.patterns) for r in reports)
    n = len(reports)
    out = []
    running = 0
    for k in range(max(counts) + 1):
        running += counts.get(k, 0)
        out.append((k, running / n))
    return out


@dataclass(frozen=True)
class PiiTable:
    version: str
    types: tuple[tuple[str, tuple[str, ...]], ...]
    raw: str = field(default="", compare=False)

    @classmethod
    def from_json(cls, text: str) -> "PiiTable":
        doc = json.loads(text)
        types = tuple((name, tuple(words)) for name, words in doc["types"])
        unknown = {name for name, _ in types} - set(PII_TYPES)
        if unknown:
            raise ValueError(f"unknown PII types {sorted(unknown)}")
        return cls(str(doc.get("version", "0")), types, text)

    @classmethod
    def load(cls, path=None) -> "PiiTable":
        if path is None:
            text = resources.files("consent_audit").joinpath("data/pii.keywords.json").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        return cls.from_json(text)


_INPUT_TYPES = {ItemType.TEXTBOX, ItemType.COMBOBOX}


def classify_label(label: str, table: PiiTable) -> Optional[str]:
    norm = " " + " ".join(re.findall(r"[a-z0-9]+", label.lower())) + " "
    if not norm.strip():
        return None
    for name, words in table.types:
        if any(f" {w} " in norm for w in words):
            return name
    return "other"


def classify_pii(form: WebForm, table: Optional[PiiTable] = None) -> set[str]:
    table = table or PiiTable.load()
    found = set()
    for it in form.items:
        if it.item_type in _INPUT_TYPES:
            kind = classify_label(it.label, table)
            if kind:
                found.add(kind)
    return found


def pii_distribution(pairs: Iterable[tuple[FormReport, WebForm]], table: Optional[PiiTable] = None) -> dict[tuple[str, str], float]:
    """Share of forms violating a principle that collect each PII type."""
    table = table or PiiTable.load()
    forms_per_principle: Counter = Counter()
    hits: Counter = Counter()
    for report, form in pairs:
        principles = {v.principle for v in report.violations}
        if not principles:
            continue
        pii = classify_pii(form, table)
        for pr in principles:
            forms_per_principle[pr] += 1
            for t in pii:
                hits[(pr, t)] += 1
    return {k: hits[k] / forms_per_principle[k[0]] for k in sorted(hits)}


@dataclass
class CorpusEntry:
    website: str
    path: str
    form: WebForm
    report: FormReport


def corpus_metrics(
    entries: Sequence[CorpusEntry],
    site_categories: Mapping[str, Iterable[str]] | None = None,
    errors: Sequence[dict] = (),
    pii_table: Optional[PiiTable] = None,
) -> dict:
    by_site: dict[str, list[FormReport]] = {}
    for e in entries:
        by_site.setdefault(e.website, []).append(e.report)
    per_website = {}
    site_rates = {}
    for site in sorted(by_site):
        patterns, rate = website_rate(by_site[site])
        per_website[site] = {"forms": len(by_site[site]), "patterns": patterns, "website_rate": rate}
        site_rates[site] = rate
    cats = category_rate(site_rates, site_categories or {})
    cdf = cooccurrence_cdf([e.report for e in entries]) if entries else []
    dist = pii_distribution(((e.report, e.form) for e in entries), pii_table)
    nested: dict[str, dict[str, float]] = {}
    for (pr, t), frac in dist.items():
        nested.setdefault(pr, {})[t] = frac
    return {
        "forms": len(entries),
        "per_website": per_website,
        "per_category": cats,
        "cooccurrence_cdf": [[k, f] for k, f in cdf],
        "pii_distribution": nested,
        "errors": list(errors),
    }


def website_rates_csv(metrics: Mapping) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["website", "forms", *PATTERN_IDS, "website_rate"])
    for site, row in metrics["per_website"].items():
        w.writerow([site, row["forms"], *(f"{row['patterns'][p]:.6f}" for p in PATTERN_IDS), f"{row['website_rate']:.6f}"])
    return buf.getvalue()


def pattern_principle(pattern_id: str) -> str:
    return PATTERNS_BY_ID[pattern_id].principle.value
