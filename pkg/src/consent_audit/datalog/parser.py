"""Parser for the ``.dl`` rule syntax.

::

    .decl item/3 edb
    p1(R, P, E) :- action(R, A), purpose(R, P), action_mapping(E, A), item(E, _, _).
    consent(R, P, E) :- ( p1(R, P, E) ; p2(R, P, E) ).
    p4(P, E) :- consent(_, P, E), count:{ C : elem_cat(E, C) } = 1.
    v_no_withdrawal() :- !p5().

Variables start with an uppercase letter; ``_`` is a wildcard; constants
are double-quoted strings, lowercase identifiers or integers. ``%`` starts
a line comment. Disjunctions are expanded into one rule per disjunct and
every wildcard becomes a fresh variable.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Union

from ..errors import DatalogSyntaxError, SafetyError
from .ast import COMPARATORS, Atom, Const, CountConstraint, Inequality, Program, Rule, Var

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|%[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<op>:-|!=|>=|<=|[(){},.;:!=<>/])
  | (?P<decl>\.decl\b)
  | (?P<number>-?\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize(source: str) -> list[_Tok]:
    toks: list[_Tok] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        if source.startswith(".decl", pos):
            m = re.compile(r"\.decl\b").match(source, pos)
            if m:
                toks.append(_Tok("decl", ".decl", line, pos - line_start + 1))
                pos = m.end()
                continue
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise DatalogSyntaxError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            toks.append(_Tok(kind, text, line, pos - line_start + 1))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rfind("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


# Intermediate body shapes before disjunction expansion.
@dataclass(frozen=True)
class _Disj:
    options: tuple  # tuple of conjunctions, each a tuple of body items


@dataclass(frozen=True)
class _Count:
    counted: Var
    body: _Disj
    op: str
    bound: int


_BodyItem = Union[Atom, Inequality, _Disj, _Count]


def _unescape_string(raw: str) -> str:
    body = raw[1:-1]
    return re.sub(r"\\(.)", lambda m: {"n": "\n", "t": "\t"}.get(m.group(1), m.group(1)), body)


class _Parser:
    def __init__(self, source: str):
        self.toks = tokenize(source)
        self.i = 0
        self.fresh = itertools.count()

    def peek(self, k: int = 0) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        found = tok.text or "end of input"
        raise DatalogSyntaxError(f"{msg}, found {found!r}", tok.line, tok.col)

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t.text != text or t.kind in ("string",):
            self.error(f"expected {text!r}")
        return self.next()

    def at(self, text: str) -> bool:
        t = self.peek()
        return t.text == text and t.kind in ("op", "ident", "decl")

    # program := (decl | clause)*
    def program(self):
        decls: dict[str, tuple[int, str | None]] = {}
        clauses: list[tuple[Atom, tuple]] = []
        while self.peek().kind != "eof":
            if self.peek().kind == "decl":
                name, arity, kind = self.decl()
                if name in decls and decls[name][0] != arity:
                    self.error(f"relation {name} declared twice with different arities")
                decls[name] = (arity, kind)
            else:
                clauses.append(self.clause())
        return decls, clauses

    def decl(self):
        self.next()
        name_tok = self.next()
        if name_tok.kind != "ident":
            self.error("expected relation name after .decl", name_tok)
        self.expect("/")
        num = self.next()
        if num.kind != "number" or int(num.text) < 0:
            self.error("expected arity", num)
        kind = None
        if self.peek().kind == "ident" and self.peek().text in ("edb", "idb"):
            kind = self.next().text
        return name_tok.text, int(num.text), kind

    def clause(self):
        head = self.atom()
        body: tuple = ()
        if self.at(":-"):
            self.next()
            body = self.conj()
        self.expect(".")
        return head, body

    def conj(self) -> tuple:
        items = [self.body_item()]
        while self.at(","):
            self.next()
            items.append(self.body_item())
        return tuple(items)

    def disj(self) -> _Disj:
        options = [self.conj()]
        while self.at(";"):
            self.next()
            options.append(self.conj())
        return _Disj(tuple(options))

    def body_item(self) -> _BodyItem:
        t = self.peek()
        if t.kind == "op" and t.text == "!":
            self.next()
            a = self.atom()
            return Atom(a.relation, a.terms, negated=True)
        if t.kind == "op" and t.text == "(":
            self.next()
            d = self.disj()
            self.expect(")")
            return d
        if t.kind == "ident" and t.text == "count" and self.peek(1).text == ":":
            return self.count()
        is_var = t.kind == "ident" and (t.text[0].isupper() or t.text[0] == "_")
        if t.kind in ("string", "number") or is_var or (t.kind == "ident" and self.peek(1).text == "!="):
            left = self.term()
            self.expect("!=")
            right = self.term()
            return Inequality(left, right)
        return self.atom()

    def count(self) -> _Count:
        self.next()
        self.expect(":")
        self.expect("{")
        v = self.peek()
        if not (v.kind == "ident" and v.text[0].isupper()):
            self.error("expected the counted variable")
        self.next()
        self.expect(":")
        body = self.disj()
        if any(isinstance(x, _Count) for conj in body.options for x in _flatten_items(conj)):
            self.error("nested aggregates are not supported")
        self.expect("}")
        op = self.next()
        if op.text not in COMPARATORS:
            self.error(f"expected one of {COMPARATORS}", op)
        num = self.next()
        if num.kind != "number":
            self.error("expected an integer bound", num)
        return _Count(Var(v.text), body, op.text, int(num.text))

    def atom(self) -> Atom:
        t = self.next()
        if t.kind != "ident" or t.text[0].isupper() or t.text[0] == "_":
            self.error("expected a relation name", t)
        terms: list = []
        if self.at("("):
            self.next()
            if not self.at(")"):
                terms.append(self.term())
                while self.at(","):
                    self.next()
                    terms.append(self.term())
            self.expect(")")
        return Atom(t.text, tuple(terms))

    def term(self):
        t = self.next()
        if t.kind == "string":
            return Const(_unescape_string(t.text))
        if t.kind == "number":
            return Const(t.text)
        if t.kind == "ident":
            if t.text == "_":
                return Var(f"_{next(self.fresh)}")
            if t.text[0].isupper():
                return Var(t.text)
            if t.text[0] == "_":
                self.error("variable names may not start with an underscore", t)
            return Const(t.text)
        self.error("expected a term", t)


def _flatten_items(conj):
    for x in conj:
        if isinstance(x, _Disj):
            for c in x.options:
                yield from _flatten_items(c)
        else:
            yield x


def _expand(conj: tuple) -> list[tuple]:
    """Distribute conjunction over nested disjunctions (DNF expansion)."""
    results: list[tuple] = [()]
    for item in conj:
        if isinstance(item, _Disj):
            alternatives = [alt for option in item.options for alt in _expand(option)]
            results = [r + alt for r in results for alt in alternatives]
        elif isinstance(item, _Count):
            bodies = tuple(alt for option in item.body.options for alt in _expand(option))
            cc = CountConstraint(item.counted, bodies, item.op, item.bound)
            results = [r + (cc,) for r in results]
        else:
            results = [r + (item,) for r in results]
    return results


def _named(vs) -> set:
    return {v for v in vs if not v.anonymous}


def check_safety(rule: Rule) -> None:
    """Range restriction and safety of negation, inequality and aggregates."""
    bound: set[Var] = set()
    for a in rule.positive_atoms():
        bound |= a.variables()
    missing = _named(rule.head.variables()) - bound
    anon_head = {v for v in rule.head.variables() if v.anonymous}
    if missing or anon_head:
        raise SafetyError(
            f"rule {rule}: head variable(s) {sorted(str(v) for v in missing | anon_head)} "
            "do not occur in a positive body atom"
        )
    outside_vars = set(rule.head.variables())
    for lit in rule.body:
        if not isinstance(lit, CountConstraint):
            outside_vars |= lit.variables()
    for lit in rule.body:
        if isinstance(lit, Atom) and lit.negated:
            unbound = _named(lit.variables()) - bound
            if unbound:
                raise SafetyError(f"rule {rule}: variable(s) {sorted(v.name for v in unbound)} in {lit} are not bound")
        elif isinstance(lit, Inequality):
            if lit.variables() - bound:
                raise SafetyError(f"rule {rule}: inequality {lit} uses unbound variables")
        elif isinstance(lit, CountConstraint):
            others = set(outside_vars)
            for other in rule.body:
                if isinstance(other, CountConstraint) and other is not lit:
                    others |= other.variables()
            correlated = _named(lit.variables() & others)
            if correlated - bound:
                raise SafetyError(
                    f"rule {rule}: aggregate shares variable(s) {sorted(v.name for v in correlated - bound)} "
                    "that no positive atom binds"
                )
            for conj in lit.bodies:
                local: set[Var] = set(correlated)
                for a in conj:
                    if isinstance(a, Atom) and not a.negated:
                        local |= a.variables()
                if lit.counted not in local:
                    raise SafetyError(f"rule {rule}: counted variable {lit.counted} is not bound in the aggregate body")
                for a in conj:
                    if isinstance(a, Atom) and a.negated and _named(a.variables()) - local:
                        raise SafetyError(f"rule {rule}: unbound variable in negated atom {a} inside aggregate")
                    if isinstance(a, Inequality) and a.variables() - local:
                        raise SafetyError(f"rule {rule}: unbound variable in {a} inside aggregate")


def _all_atoms(rule: Rule):
    yield rule.head
    for lit in rule.body:
        if isinstance(lit, Atom):
            yield lit
        elif isinstance(lit, CountConstraint):
            yield from lit.atoms()


def parse_program(source: str, stratify: bool = True) -> Program:
    """Parse rule text into a desugared, safety-checked Program.

    Raises:
        DatalogSyntaxError: malformed source or inconsistent arities.
        SafetyError: a rule is not range-restricted or negates unbound variables.
        StratificationError: negation or aggregation inside a recursive cycle
            (only when ``stratify`` is true).
    """
    parser = _Parser(source)
    decls, clauses = parser.program()
    rules: list[Rule] = []
    for head, body in clauses:
        if any(v.anonymous for v in head.variables()):
            raise SafetyError(f"wildcard in rule head {head}")
        for expanded in _expand(body):
            rules.append(Rule(head, expanded))

    arities: dict[str, int] = {name: a for name, (a, _) in decls.items()}
    for rule in rules:
        for atom in _all_atoms(rule):
            known = arities.setdefault(atom.relation, atom.arity)
            if known != atom.arity:
                raise DatalogSyntaxError(f"relation {atom.relation} used with arity {atom.arity}, declared/used as {known}")
    for rule in rules:
        check_safety(rule)

    heads = {r.head.relation for r in rules}
    declared_edb = {n for n, (_, kind) in decls.items() if kind == "edb"}
    declared_idb = {n for n, (_, kind) in decls.items() if kind == "idb"}
    clash = declared_edb & heads
    if clash:
        raise DatalogSyntaxError(f"relations declared edb but defined by rules: {sorted(clash)}")
    edb = frozenset((set(arities) - heads - declared_idb) | declared_edb)
    idb = frozenset(heads | declared_idb)
    program = Program(tuple(rules), edb, idb, arities)
    if stratify:
        from .stratify import stratify as _stratify

        _stratify(program)
    return program
