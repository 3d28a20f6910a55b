"""In-memory relation store with fixed arities and a TSV directory format."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Mapping, Optional

from ..errors import SchemaError

SCHEMA_FILE = "schema.json"


def _escape(field: str) -> str:
    return field.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


def _unescape(field: str) -> str:
    out = []
    it = iter(field)
    for c in it:
        if c == "\\":
            nxt = next(it, "")
            out.append({"t": "\t", "n": "\n", "r": "\r", "\\": "\\"}.get(nxt, nxt))
        else:
            out.append(c)
    return "".join(out)


class FactDb:
    """Set-valued relations of string tuples, each with a declared arity."""

    def __init__(self, schema: Optional[Mapping[str, int]] = None):
        self.schema: dict[str, int] = {}
        self.relations: dict[str, set[tuple[str, ...]]] = {}
        for name, arity in (schema or {}).items():
            self.declare(name, arity)

    def declare(self, name: str, arity: int) -> None:
        known = self.schema.get(name)
        if known is not None and known != arity:
            raise SchemaError(f"relation {name} declared with arity {known}, not {arity}")
        self.schema[name] = arity
        self.relations.setdefault(name, set())

    def add(self, name: str, tup: Iterable[str]) -> bool:
        tup = tuple(tup)
        if any(not isinstance(x, str) for x in tup):
            raise SchemaError(f"{name}{tup}: every term must be a string")
        if name not in self.schema:
            self.declare(name, len(tup))
        elif self.schema[name] != len(tup):
            raise SchemaError(f"{name} has arity {self.schema[name]}, got tuple of length {len(tup)}: {tup!r}")
        before = len(self.relations[name])
        self.relations[name].add(tup)
        return len(self.relations[name]) != before

    def add_all(self, name: str, tuples: Iterable[Iterable[str]]) -> None:
        for t in tuples:
            self.add(name, t)

    def get(self, name: str) -> frozenset:
        return frozenset(self.relations.get(name, ()))

    def __contains__(self, name: str) -> bool:
        return name in self.schema

    def __getitem__(self, name: str) -> frozenset:
        return self.get(name)

    def names(self) -> list[str]:
        return sorted(self.schema)

    def copy(self) -> "FactDb":
        out = FactDb(self.schema)
        for name, tuples in self.relations.items():
            out.relations[name] = set(tuples)
        return out

    def update(self, other: "FactDb") -> "FactDb":
        for name in other.names():
            self.declare(name, other.schema[name])
            self.relations[name] |= other.relations[name]
        return self

    def __len__(self) -> int:
        return sum(len(t) for t in self.relations.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, FactDb):
            return NotImplemented
        return self.schema == other.schema and self.relations == other.relations

    def __repr__(self) -> str:
        body = ", ".join(f"{n}/{self.schema[n]}: {len(self.relations[n])}" for n in self.names())
        return f"FactDb({body})"

    def to_dict(self) -> dict:
        return {n: sorted(self.relations[n]) for n in self.names()}

    def export(self, directory) -> None:
        """Write ``<relation>.facts`` files (TAB-separated, sorted) plus ``schema.json``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for name in self.names():
            lines = ["\t".join(_escape(f) for f in t) + "\n" for t in sorted(self.relations[name])]
            with open(d / f"{name}.facts", "w", encoding="utf-8", newline="") as fh:
                fh.writelines(lines)
        with open(d / SCHEMA_FILE, "w", encoding="utf-8") as fh:
            json.dump(self.schema, fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, directory) -> "FactDb":
        d = Path(directory)
        schema: dict[str, int] = {}
        if (d / SCHEMA_FILE).exists():
            schema = json.loads((d / SCHEMA_FILE).read_text(encoding="utf-8"))
        db = cls(schema)
        for path in sorted(d.glob("*.facts")):
            name = path.name[: -len(".facts")]
            with open(path, encoding="utf-8", newline="") as fh:
                for line in fh:
                    line = line.rstrip("\n")
                    arity = db.schema.get(name)
                    if arity == 0 or (arity is None and line == ""):
                        db.add(name, ())
                    else:
                        db.add(name, [_unescape(f) for f in line.split("\t")])
            db.declare(name, db.schema.get(name, 0))
        return db
