"""A small stratified Datalog engine with negation, disjunction and counting."""

from .ast import Atom, Const, CountConstraint, Inequality, Program, Rule, Var
from .engine import evaluate
from .factdb import FactDb
from .parser import parse_program
from .stratify import dependency_graph, stratify

__all__ = [
    "Atom",
    "Const",
    "CountConstraint",
    "FactDb",
    "Inequality",
    "Program",
    "Rule",
    "Var",
    "dependency_graph",
    "evaluate",
    "parse_program",
    "stratify",
]
