"""Free-energy preserving rewrites of region graphs and candidate-region analysis."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import networkx as nx

from .elimination import graph_from_cliques, treewidth
from .factor_graph import FactorGraph
from .region_graph import (
    Region,
    RegionGraph,
    RegionGraphError,
    _maximal_subregions,
    compute_counting_numbers,
    descendants,
    refresh,
)


class TransformError(RegionGraphError):
    pass


def link_birth(rg: RegionGraph, ancestor: int, descendant: int) -> RegionGraph:
    """Add an edge from a region to one of its non-child descendants."""
    rg._check(ancestor)
    rg._check(descendant)
    if (ancestor, descendant) in rg.edges:
        raise TransformError(f"edge {ancestor}->{descendant} already exists")
    if descendant not in descendants(rg, ancestor):
        raise TransformError(f"region {descendant} is not a descendant of {ancestor}")
    out = rg.copy()
    out.edges.add((ancestor, descendant))
    return refresh(out)


# --- split ------------------------------------------------------------------

@dataclass(frozen=True)
class Part:
    vars: frozenset[int] = frozenset()
    factors: frozenset[int] = frozenset()

    @classmethod
    def of(cls, vars: Iterable[int] = (), factors: Iterable[int] = ()) -> "Part":
        return cls(frozenset(vars), frozenset(factors))


@dataclass(frozen=True)
class SplitSpec:
    target: int
    alpha1: Part
    alpha2: Part
    beta: Part


def split(rg: RegionGraph, spec: SplitSpec, fg: FactorGraph) -> RegionGraph:
    """Replace an outer region by two overlapping halves and their separator.

    Copies created along the way are merged away when the merge conditions
    hold; otherwise the split is rejected.
    """
    rg._check(spec.target)
    if rg.parents(spec.target):
        raise TransformError(f"region {spec.target} is not an outer region")
    target = rg.regions[spec.target]
    a1, a2, b = spec.alpha1, spec.alpha2, spec.beta
    if not a1.vars or not a2.vars:
        raise TransformError("both sides of a split need variables")
    if (a1.vars & a2.vars) or (a1.vars & b.vars) or (a2.vars & b.vars):
        raise TransformError("variable subsets overlap")
    if (a1.factors & a2.factors) or (a1.factors & b.factors) or (a2.factors & b.factors):
        raise TransformError("factor subsets overlap")
    if a1.vars | a2.vars | b.vars != set(target.vars) or a1.factors | a2.factors | b.factors != set(target.factors):
        raise TransformError("subsets do not partition the target region")
    # beta must separate alpha1 from alpha2 in the target's interaction graph
    g = nx.Graph()
    g.add_nodes_from(a1.vars | a2.vars)
    for a in target.factors:
        scope = [v for v in fg.factors[a].scope if v not in b.vars]
        nx.add_path(g, scope)
    for comp in nx.connected_components(g):
        if comp & a1.vars and comp & a2.vars:
            raise TransformError("beta does not separate alpha1 from alpha2")
    for part, side in ((a1, a1.vars | b.vars), (a2, a2.vars | b.vars), (b, b.vars)):
        for a in part.factors:
            if not set(fg.factors[a].scope) <= side:
                raise TransformError(f"factor {a} does not fit in its side of the split")
    r1 = Region.of(a1.vars | b.vars, a1.factors | b.factors)
    r2 = Region.of(a2.vars | b.vars, a2.factors | b.factors)
    kids = rg.children(spec.target)
    for c in kids:
        if not (rg.regions[c].issubregion(r1) or rg.regions[c].issubregion(r2)):
            raise TransformError(f"child region {c} fits in neither side of the split")

    dec = descendants(rg, spec.target)
    out = rg.copy()
    del out.regions[spec.target]
    out.edges = {(p, c) for p, c in out.edges if p != spec.target}
    id1 = out.add_region(r1)
    id2 = out.add_region(r2)
    new_ids = [id1, id2]
    served: set[int] = set()
    if b.vars:
        rb = Region.of(b.vars, b.factors)
        idb = out.add_region(rb)
        new_ids.append(idb)
        out.edges.update({(id1, idb), (id2, idb)})
        served = _maximal_subregions(out, rb, dec)
        out.edges.update((idb, c) for c in served)
    for c in kids:
        if c in served:
            continue
        for rid, r in ((id1, r1), (id2, r2)):
            if out.regions[c].issubregion(r):
                out.edges.add((rid, c))
    refresh(out)
    return _merge_new_copies(out, new_ids)


def _merge_new_copies(rg: RegionGraph, new_ids: Sequence[int]) -> RegionGraph:
    # the separator sits below the halves, so it is merged first
    for nid in reversed(new_ids):
        if nid not in rg.regions:
            continue
        twins = [r for r, reg in rg.regions.items() if r != nid and reg == rg.regions[nid]]
        for t in twins:
            if (nid, t) in rg.edges:
                rg = merge(rg, nid, t)
            elif (t, nid) in rg.edges:
                rg = merge(rg, t, nid)
            else:
                raise TransformError(f"split created copy of region {t} that cannot be merged")
            break
    if rg.has_copies():
        raise TransformError("region graph still contains copies after merging")
    return rg


def merge(rg: RegionGraph, r1: int, r2: int) -> RegionGraph:
    """Merge identical regions ``r1`` (parent) and ``r2`` (child); keeps id ``r2``."""
    rg._check(r1)
    rg._check(r2)
    if rg.regions[r1] != rg.regions[r2]:
        raise TransformError("regions are not identical")
    if (r1, r2) not in rg.edges:
        raise TransformError(f"region {r1} is not a parent of {r2}")
    d2 = descendants(rg, r2)
    if not (descendants(rg, r1) - {r2}) <= d2:
        raise TransformError("descendants of the parent copy are not descendants of the child copy")
    out = rg.copy()
    del out.regions[r1]
    edges = set()
    for p, c in out.edges:
        p = r2 if p == r1 else p
        c = r2 if c == r1 else c
        if p != c:
            edges.add((p, c))
    out.edges = edges
    return refresh(out)


def death(rg: RegionGraph, r: int) -> RegionGraph:
    """Remove a region with zero counting number, linking its parents to its children."""
    rg._check(r)
    counting = rg.counting or compute_counting_numbers(rg)
    if counting[r] != 0:
        raise TransformError(f"region {r} has counting number {counting[r]}, not 0")
    pars, kids = rg.parents(r), rg.children(r)
    out = rg.copy()
    del out.regions[r]
    out.edges = {(p, c) for p, c in out.edges if r not in (p, c)}
    out.edges.update((p, c) for p in pars for c in kids)
    return refresh(out)


# --- candidate regions -------------------------------------------------------

def _interaction_graph(region: Region, fg: FactorGraph) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(region.vars)
    for a in region.factors:
        scope = fg.factors[a].scope
        for i, u in enumerate(scope):
            for v in scope[i + 1:]:
                g.add_edge(u, v)
    return g


def _restrict(region: Region, keep: Iterable[int], fg: FactorGraph) -> Region:
    keep = set(keep)
    facs = [a for a in region.factors if set(fg.factors[a].scope) <= keep]
    return Region.of(keep, facs)


def strip_pendant_trees(candidate: Region, fg: FactorGraph) -> Region:
    """Repeatedly drop variables of degree <= 1; the 2-core with its factors.

    May return an empty region when the candidate is entirely tree-like.
    """
    core = nx.k_core(_interaction_graph(candidate, fg), 2)
    return _restrict(candidate, core.nodes, fg)


def decompose_weakly_irreducible(candidate: Region, fg: FactorGraph) -> list[Region]:
    """Strip pendant trees, then split into connected and biconnected pieces.

    Cut vertices end up in every block they join; they act as the shared
    separator of the implied split.
    """
    core = strip_pendant_trees(candidate, fg)
    if not core.vars:
        return []
    g = _interaction_graph(core, fg)
    pieces = []
    for comp in nx.connected_components(g):
        sub = g.subgraph(comp)
        for block in nx.biconnected_components(sub):
            if len(block) >= 3:
                pieces.append(_restrict(core, block, fg))
    return sorted(set(pieces))


class Width(NamedTuple):
    width: int
    exact: bool  # False: min-fill upper bound


def region_width(candidate: Region, fg: FactorGraph, child_scopes: Iterable[Iterable[int]] = ()) -> Width:
    """Treewidth of the graph where factor and child scopes are cliques."""
    child_scopes = [tuple(s) for s in child_scopes]
    for s in child_scopes:
        if not set(s) <= set(candidate.vars):
            raise ValueError(f"child scope {s} is not inside the candidate")
    cliques = [fg.factors[a].scope for a in candidate.factors] + child_scopes
    return Width(*treewidth(graph_from_cliques(candidate.vars, cliques)))
