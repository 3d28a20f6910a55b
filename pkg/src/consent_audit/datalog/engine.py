"""Bottom-up evaluation: semi-naive fixpoint per stratum."""

from __future__ import annotations

from typing import Iterable, Iterator, Mapping, Optional

from ..errors import SchemaError
from .ast import Atom, Const, CountConstraint, Inequality, Program, Rule
from .factdb import FactDb
from .stratify import stratify

Binding = dict  # Var -> str


def _value(term, binding: Binding) -> Optional[str]:
    if isinstance(term, Const):
        return term.value
    return binding.get(term)


def _unify(atom: Atom, tup: tuple, binding: Binding) -> Optional[Binding]:
    out = binding
    copied = False
    for term, val in zip(atom.terms, tup):
        if isinstance(term, Const):
            if term.value != val:
                return None
            continue
        bound = out.get(term)
        if bound is None:
            if not copied:
                out = dict(out)
                copied = True
            out[term] = val
        elif bound != val:
            return None
    return out


class _Store:
    """Relation contents for one round, with hash indices built on demand."""

    def __init__(self, full: Mapping[str, set], delta: Optional[Mapping[str, set]] = None):
        self.full = full
        self.delta = delta or {}
        self._index: dict = {}

    def lookup(self, atom: Atom, binding: Binding, use_delta: bool) -> Iterable[tuple]:
        source = self.delta if use_delta else self.full
        rel = source.get(atom.relation, ())
        positions = []
        key = []
        for i, term in enumerate(atom.terms):
            v = _value(term, binding)
            if v is not None:
                positions.append(i)
                key.append(v)
        if not positions:
            return rel
        ikey = (atom.relation, use_delta, tuple(positions))
        idx = self._index.get(ikey)
        if idx is None:
            idx = {}
            for tup in rel:
                idx.setdefault(tuple(tup[i] for i in positions), []).append(tup)
            self._index[ikey] = idx
        return idx.get(tuple(key), ())

    def exists(self, atom: Atom, binding: Binding) -> bool:
        for tup in self.lookup(atom, binding, False):
            if _unify(atom, tup, binding) is not None:
                return True
        return False


class _Evaluator:
    def __init__(self, program: Program):
        self.program = program
        self._count_cache: dict = {}

    def solve(self, body, store: _Store, binding: Binding, delta_at: Optional[int] = None) -> Iterator[Binding]:
        """Enumerate bindings satisfying ``body``.

        Positive atoms are joined first (the delta atom, if any, leads), then
        negations, inequalities and aggregates filter the survivors.
        """
        positives = [(i, l) for i, l in enumerate(body) if isinstance(l, Atom) and not l.negated]
        if delta_at is not None:
            positives.sort(key=lambda p: p[0] != delta_at)
        filters = [l for l in body if not (isinstance(l, Atom) and not l.negated)]
        yield from self._join(positives, 0, filters, store, binding, delta_at)

    def _join(self, positives, k, filters, store, binding, delta_at):
        if k == len(positives):
            if all(self._check(f, store, binding) for f in filters):
                yield binding
            return
        i, atom = positives[k]
        for tup in store.lookup(atom, binding, i == delta_at):
            b = _unify(atom, tup, binding)
            if b is not None:
                yield from self._join(positives, k + 1, filters, store, b, delta_at)

    def _check(self, lit, store: _Store, binding: Binding) -> bool:
        if isinstance(lit, Atom):
            return not store.exists(lit, binding)
        if isinstance(lit, Inequality):
            return _value(lit.left, binding) != _value(lit.right, binding)
        if isinstance(lit, CountConstraint):
            return lit.compare(self._count(lit, store, binding))
        raise TypeError(f"unexpected literal {lit!r}")

    def _count(self, lit: CountConstraint, store: _Store, binding: Binding) -> int:
        outer = {v: binding[v] for v in lit.variables() if v in binding}
        key = (id(lit), frozenset(outer.items()))
        cached = self._count_cache.get(key)
        if cached is not None:
            return cached
        values = set()
        for conj in lit.bodies:
            for b in self.solve(conj, store, outer):
                values.add(b[lit.counted])
        self._count_cache[key] = len(values)
        return len(values)

    def fire(self, rule: Rule, store: _Store, delta_at: Optional[int] = None) -> set[tuple]:
        out = set()
        for b in self.solve(rule.body, store, {}, delta_at):
            out.add(tuple(_value(t, b) for t in rule.head.terms))
        return out

    def run_stratum(self, relations: dict[str, set], stratum: frozenset) -> None:
        rules = [r for r in self.program.rules if r.head.relation in stratum]
        if not rules:
            return
        self._count_cache.clear()
        for rel in stratum:
            relations.setdefault(rel, set())
        store = _Store(relations)
        delta: dict[str, set] = {}
        for rule in rules:
            for tup in self.fire(rule, store):
                if tup not in relations[rule.head.relation]:
                    delta.setdefault(rule.head.relation, set()).add(tup)
        recursive = {
            id(r): [i for i, l in enumerate(r.body) if isinstance(l, Atom) and not l.negated and l.relation in stratum]
            for r in rules
        }
        while delta:
            for rel, new in delta.items():
                relations[rel] |= new
            store = _Store(relations, delta)
            fresh: dict[str, set] = {}
            for rule in rules:
                for pos in recursive[id(rule)]:
                    if not delta.get(rule.body[pos].relation):
                        continue
                    for tup in self.fire(rule, store, pos):
                        if tup not in relations[rule.head.relation]:
                            fresh.setdefault(rule.head.relation, set()).add(tup)
            delta = fresh


def _check_schema(program: Program, edb: FactDb) -> None:
    for name, arity in edb.schema.items():
        expected = program.arities.get(name)
        if expected is not None and expected != arity:
            raise SchemaError(f"relation {name} has arity {arity} in the facts but {expected} in the program")


def evaluate(program: Program, edb: FactDb, strata: Optional[list] = None) -> FactDb:
    """Compute the IDB of ``program`` over ``edb``.

    Negation and aggregates only read relations of strictly lower strata, which
    are complete by the time they are consulted.

    Raises:
        SchemaError: a fact relation's arity disagrees with the program.
    """
    _check_schema(program, edb)
    strata = strata if strata is not None else stratify(program)
    relations: dict[str, set] = {n: set(edb.get(n)) for n in program.edb if n in edb}
    ev = _Evaluator(program)
    for stratum in strata:
        ev.run_stratum(relations, stratum & program.idb)
    out = FactDb({n: program.arities[n] for n in sorted(program.idb)})
    for name in program.idb:
        out.add_all(name, relations.get(name, ()))
    return out
