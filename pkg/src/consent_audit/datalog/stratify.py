"""Stratification of rule programs.

Edges run from a body relation to the head relation. An edge is strict
(weight 1) when the body relation occurs negated or inside an aggregate,
otherwise weight 0. A strict edge inside a strongly connected component
makes the program unstratifiable.
"""

from __future__ import annotations

import networkx as nx

from ..errors import StratificationError
from .ast import Atom, CountConstraint, Program


def dependency_graph(program: Program) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(sorted(program.edb | program.idb))
    for rule in program.rules:
        head = rule.head.relation
        for lit in rule.body:
            if isinstance(lit, Atom):
                deps = [(lit.relation, 1 if lit.negated else 0)]
            elif isinstance(lit, CountConstraint):
                deps = [(a.relation, 1) for a in lit.atoms()]
            else:
                continue
            for rel, w in deps:
                prev = g.get_edge_data(rel, head, {}).get("weight", 0)
                g.add_edge(rel, head, weight=max(prev, w))
    return g


def _find_cycle(g: nx.DiGraph, scc: set, src: str, dst: str) -> list[str]:
    if src == dst:
        return [src]
    path = nx.shortest_path(g.subgraph(scc), dst, src)
    return [src] + path[:-1]


def stratify(program: Program) -> list[frozenset[str]]:
    """Assign relations to strata, lowest first.

    EDB relations form stratum 0. IDB components get the smallest level that
    respects strict edges, then are pushed as high as their consumers allow,
    so relations nobody depends on (the violation relations in practice) all
    share the top stratum. Empty levels are dropped.
    """
    g = dependency_graph(program)
    sccs = list(nx.strongly_connected_components(g))
    for scc in sccs:
        for u, v, w in g.subgraph(scc).edges(data="weight"):
            if w:
                raise StratificationError(_find_cycle(g, scc, u, v))

    cond = nx.condensation(g, sccs)
    members = {c: frozenset(cond.nodes[c]["members"]) for c in cond.nodes}
    is_idb = {c: bool(members[c] & program.idb) for c in cond.nodes}

    def weight(cu, cv) -> int:
        return max(
            g[u][v]["weight"] for u in members[cu] for v in members[cv] if g.has_edge(u, v)
        )

    order = list(nx.lexicographical_topological_sort(cond, key=lambda c: min(members[c])))
    level: dict[int, int] = {}
    for c in order:
        base = 1 if is_idb[c] else 0
        level[c] = max([base] + [level[p] + weight(p, c) for p in cond.predecessors(c)])
    top = max(level.values(), default=0)
    for c in reversed(order):
        if not is_idb[c]:
            continue
        succ = list(cond.successors(c))
        ceiling = min((level[s] - weight(c, s) for s in succ), default=top)
        level[c] = max(level[c], ceiling)

    strata: dict[int, set] = {}
    for c, lv in level.items():
        strata.setdefault(lv, set()).update(members[c])
    return [frozenset(strata[lv]) for lv in sorted(strata)]
