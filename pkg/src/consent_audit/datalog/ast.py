"""Syntax tree for rule programs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union


@dataclass(frozen=True)
class Var:
    name: str

    @property
    def anonymous(self) -> bool:
        """Fresh variables introduced for ``_`` wildcards start with an underscore."""
        return self.name.startswith("_")

    def __str__(self):
        return "_" if self.anonymous else self.name


@dataclass(frozen=True)
class Const:
    value: str

    def __str__(self):
        return '"' + self.value.replace("\\", "\\\\").replace('"', '\\"') + '"'


Term = Union[Var, Const]


@dataclass(frozen=True)
class Atom:
    relation: str
    terms: tuple[Term, ...] = ()
    negated: bool = False

    @property
    def arity(self) -> int:
        return len(self.terms)

    def variables(self) -> set[Var]:
        return {t for t in self.terms if isinstance(t, Var)}

    def __str__(self):
        return f"{'!' if self.negated else ''}{self.relation}({', '.join(map(str, self.terms))})"


@dataclass(frozen=True)
class Inequality:
    left: Term
    right: Term

    def variables(self) -> set[Var]:
        return {t for t in (self.left, self.right) if isinstance(t, Var)}

    def __str__(self):
        return f"{self.left} != {self.right}"


COMPARATORS = ("=", ">", ">=", "<", "<=")


@dataclass(frozen=True)
class CountConstraint:
    """``count:{ V : body } OP bound`` with the body kept in disjunctive normal form."""

    counted: Var
    bodies: tuple[tuple["Literal", ...], ...]
    op: str
    bound: int

    def variables(self) -> set[Var]:
        out = {self.counted}
        for conj in self.bodies:
            for lit in conj:
                out |= lit.variables()
        return out

    def atoms(self):
        for conj in self.bodies:
            for lit in conj:
                if isinstance(lit, Atom):
                    yield lit

    def compare(self, n: int) -> bool:
        return {
            "=": n == self.bound,
            ">": n > self.bound,
            ">=": n >= self.bound,
            "<": n < self.bound,
            "<=": n <= self.bound,
        }[self.op]

    def __str__(self):
        body = " ; ".join(", ".join(map(str, conj)) for conj in self.bodies)
        return f"count:{{ {self.counted} : {body} }} {self.op} {self.bound}"


Literal = Union[Atom, Inequality, CountConstraint]


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple[Literal, ...] = ()

    def positive_atoms(self) -> list[Atom]:
        return [l for l in self.body if isinstance(l, Atom) and not l.negated]

    def __str__(self):
        if not self.body:
            return f"{self.head}."
        return f"{self.head} :- {', '.join(map(str, self.body))}."


@dataclass(frozen=True)
class Program:
    rules: tuple[Rule, ...]
    edb: frozenset[str]
    idb: frozenset[str]
    arities: dict = field(default_factory=dict, compare=False, hash=False)

    def rules_for(self, relation: str) -> list[Rule]:
        return [r for r in self.rules if r.head.relation == relation]
