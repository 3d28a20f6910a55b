"""The GDPR consent rule program and violation extraction."""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Optional

from .datalog import FactDb, Program, evaluate, parse_program, stratify

RULES_VERSION = "1"


class Principle(str, Enum):
    FREELY_GIVEN = "FreelyGiven"
    SPECIFIC_INFORMED = "SpecificInformed"
    UNAMBIGUOUS = "Unambiguous"


class Scope(str, Enum):
    FORM = "form_level"
    ELEMENT = "element_level"
    PURPOSE = "purpose_level"


@dataclass(frozen=True)
class RuleMeta:
    rule_id: str
    principle: Principle
    provision: str
    description: str


RULES: dict[str, RuleMeta] = {
    m.rule_id: m
    for m in (
        RuleMeta("P1", Principle.FREELY_GIVEN, "GDPR Recital 42; ICO guidance on valid consent",
                 "Text names an action that gives consent for a purpose, and a matching element exists to perform it."),
        RuleMeta("P2", Principle.FREELY_GIVEN, "GDPR Recital 42; ICO guidance on valid consent",
                 "A selectable control (checkbox, radio, toggle, option) records the consent choice."),
        RuleMeta("P3", Principle.FREELY_GIVEN, "ICO guidance on valid consent",
                 "Submitting the form counts as consent only if the form has a single purpose category."),
        RuleMeta("P4", Principle.FREELY_GIVEN, "GDPR Article 7(4); Recital 43",
                 "Each consent element covers one purpose category."),
        RuleMeta("P5", Principle.SPECIFIC_INFORMED, "GDPR Recital 42; Article 7(3)",
                 "The form tells the user how to withdraw consent."),
        RuleMeta("P6", Principle.SPECIFIC_INFORMED, "GDPR Recital 42",
                 "The form names the data controller."),
        RuleMeta("P7", Principle.SPECIFIC_INFORMED, "GDPR Recital 42",
                 "The form names the processing purpose."),
        RuleMeta("P8", Principle.UNAMBIGUOUS, "GDPR Recital 32",
                 "Consent controls start unselected."),
        RuleMeta("P9", Principle.UNAMBIGUOUS, "ICO guidance on valid consent (opt-in)",
                 "The request text asks the user to opt in, not to opt out."),
    )
}


@dataclass(frozen=True)
class ViolationPattern:
    pattern_id: str
    principle: Principle
    satisfier_rules: tuple[str, ...]
    scope: Scope
    relation: str

    @property
    def provision(self) -> str:
        parts: list[str] = []
        for rid in self.satisfier_rules:
            for p in RULES[rid].provision.split("; "):
                if p not in parts:
                    parts.append(p)
        return "; ".join(parts)


PATTERNS: tuple[ViolationPattern, ...] = (
    ViolationPattern("GenuineChoice", Principle.FREELY_GIVEN, ("P1", "P2", "P3"), Scope.PURPOSE, "v_genuine_choice"),
    ViolationPattern("SeparateConsent", Principle.FREELY_GIVEN, ("P4",), Scope.ELEMENT, "v_separate_consent"),
    ViolationPattern("WithdrawalInformed", Principle.SPECIFIC_INFORMED, ("P5",), Scope.FORM, "v_no_withdrawal"),
    ViolationPattern("DataControllerSpecified", Principle.SPECIFIC_INFORMED, ("P6",), Scope.FORM, "v_no_controller"),
    ViolationPattern("PurposeSpecified", Principle.SPECIFIC_INFORMED, ("P7",), Scope.FORM, "v_no_purpose"),
    ViolationPattern("ConsentPreselected", Principle.UNAMBIGUOUS, ("P8",), Scope.ELEMENT, "v_preselected"),
    ViolationPattern("OptOutConsent", Principle.UNAMBIGUOUS, ("P9",), Scope.ELEMENT, "v_opt_out"),
)
PATTERN_IDS = tuple(p.pattern_id for p in PATTERNS)
PATTERNS_BY_ID = {p.pattern_id: p for p in PATTERNS}


@dataclass(frozen=True)
class Violation:
    pattern_id: str
    rule_ids: tuple[str, ...]
    principle: str
    scope: str
    provision: str
    element_uid: Optional[str] = None
    element_type: Optional[str] = None
    purpose: Optional[str] = None
    request_texts: tuple[str, ...] = field(default_factory=tuple)

    @property
    def scope_key(self) -> tuple:
        return (self.pattern_id, self.element_uid or "", self.purpose or "")


def rules_source() -> str:
    return resources.files("consent_audit").joinpath("data/gdpr.dl").read_text(encoding="utf-8")


@functools.lru_cache(maxsize=None)
def build_program() -> Program:
    return parse_program(rules_source())


@functools.lru_cache(maxsize=None)
def program_strata() -> tuple[frozenset, ...]:
    return tuple(stratify(build_program()))


def _texts_for(pattern: ViolationPattern, key: str, edb: FactDb, idb: FactDb) -> tuple[str, ...]:
    if pattern.pattern_id == "OptOutConsent":
        affirmative = {r for (r,) in edb.get("polarity_affirmative")}
        texts = {r for (r, _, e) in idb.get("consent") if e == key and r not in affirmative}
    elif pattern.pattern_id == "ConsentPreselected":
        texts = {r for (r, _, e) in idb.get("p2") if e == key}
    elif pattern.pattern_id == "SeparateConsent":
        texts = {r for (r, _, e) in idb.get("consent") if e == key}
    elif pattern.pattern_id == "GenuineChoice":
        texts = {t for (t, p) in edb.get("purpose") if p == key}
    else:
        texts = set()
    return tuple(sorted(texts))


def check_form(db: FactDb) -> list[Violation]:
    """Evaluate the rule program over ``db`` and list violations.

    One Violation per distinct (pattern, element or purpose); the request
    texts behind it are collected on that single entry. Output is sorted by
    pattern order, then by scope key.

    Raises:
        SchemaError: a fact relation has the wrong arity.
    """
    program = build_program()
    idb = evaluate(program, db, list(program_strata()))
    item_types = {uid: t for (uid, t, _) in db.get("item")}
    out: list[Violation] = []
    for pattern in PATTERNS:
        keys = sorted({tup[0] if tup else "" for tup in idb.get(pattern.relation)})
        for key in keys:
            kwargs: dict = {}
            if pattern.scope is Scope.ELEMENT:
                kwargs = {"element_uid": key, "element_type": item_types.get(key)}
            elif pattern.scope is Scope.PURPOSE:
                kwargs = {"purpose": key}
            out.append(
                Violation(
                    pattern_id=pattern.pattern_id,
                    rule_ids=pattern.satisfier_rules,
                    principle=pattern.principle.value,
                    scope=pattern.scope.value,
                    provision=pattern.provision,
                    request_texts=_texts_for(pattern, key, db, idb),
                    **kwargs,
                )
            )
    return out


def rules_metadata() -> dict:
    """Machine-readable description of rules and patterns."""
    return {
        "version": RULES_VERSION,
        "rules": [
            {"rule_id": m.rule_id, "principle": m.principle.value, "provision": m.provision, "description": m.description}
            for m in RULES.values()
        ],
        "patterns": [
            {
                "pattern_id": p.pattern_id,
                "principle": p.principle.value,
                "satisfier_rules": list(p.satisfier_rules),
                "scope": p.scope.value,
                "relation": p.relation,
                "provision": p.provision,
            }
            for p in PATTERNS
        ],
        "strata": [sorted(s) for s in program_strata()],
    }


def to_souffle(program_text: Optional[str] = None) -> str:
    """Rewrite the rule asset into Souffle syntax for cross-checking."""
    program = build_program() if program_text is None else parse_program(program_text)
    lines = []
    for name in sorted(program.arities):
        arity = program.arities[name]
        cols = ", ".join(f"a{i}:symbol" for i in range(arity))
        lines.append(f".decl {name}({cols})")
        if name in program.edb:
            lines.append(f".input {name}(IO=file, delimiter=\"\\t\")")
        elif name.startswith("v_"):
            lines.append(f".output {name}")
    lines.append("")
    for rule in program.rules:
        lines.append(_souffle_rule(rule))
    return "\n".join(lines) + "\n"


def _souffle_term(t) -> str:
    from .datalog import Var

    if isinstance(t, Var):
        return "_" if t.anonymous else t.name
    return str(t)


def _souffle_lit(lit) -> str:
    from .datalog import Atom, CountConstraint, Inequality

    if isinstance(lit, Atom):
        return ("!" if lit.negated else "") + f"{lit.relation}({', '.join(map(_souffle_term, lit.terms))})"
    if isinstance(lit, Inequality):
        return f"{_souffle_term(lit.left)} != {_souffle_term(lit.right)}"
    if isinstance(lit, CountConstraint):
        # Souffle counts tuples, so count over a projection to keep distinct semantics.
        if len(lit.bodies) != 1:
            raise ValueError("disjunctive aggregate bodies have no direct Souffle form")
        body = ", ".join(_souffle_lit(l) for l in lit.bodies[0])
        return f"count : {{ {body} }} {lit.op} {lit.bound}"
    raise TypeError(lit)


def _souffle_rule(rule) -> str:
    head = f"{rule.head.relation}({', '.join(map(_souffle_term, rule.head.terms))})"
    if not rule.body:
        return head + "."
    return f"{head} :- {', '.join(_souffle_lit(l) for l in rule.body)}."
