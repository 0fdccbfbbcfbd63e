"""Elimination orderings and treewidth on small undirected graphs.

Graphs are adjacency dicts ``{vertex: set(neighbours)}``.
"""
from __future__ import annotations

import itertools
from functools import lru_cache
from typing import Hashable, Iterable, Sequence

Graph = dict[Hashable, set]

EXACT_TREEWIDTH_LIMIT = 14


def graph_from_cliques(vertices: Iterable, cliques: Iterable[Iterable]) -> Graph:
    g: Graph = {v: set() for v in vertices}
    for clique in cliques:
        for u, v in itertools.combinations(clique, 2):
            if u != v:
                g[u].add(v)
                g[v].add(u)
    return g


def _fill_cost(g: Graph, v) -> int:
    nbrs = list(g[v])
    cost = 0
    for i in range(len(nbrs)):
        for j in range(i + 1, len(nbrs)):
            if nbrs[j] not in g[nbrs[i]]:
                cost += 1
    return cost


def _eliminate(g: Graph, v) -> None:
    nbrs = g.pop(v)
    for u in nbrs:
        g[u].discard(v)
        g[u].update(nbrs - {u})


def min_fill_order(g: Graph) -> list:
    """Greedy min-fill ordering; ties go to the smallest vertex."""
    g = {v: set(n) for v, n in g.items()}
    order = []
    while g:
        v = min(g, key=lambda u: (_fill_cost(g, u), u))
        order.append(v)
        _eliminate(g, v)
    return order


def induced_width(g: Graph, order: Sequence) -> int:
    """Largest neighbourhood met while eliminating in ``order`` (-1 for empty graphs)."""
    g = {v: set(n) for v, n in g.items()}
    width = -1 if not g else 0
    for v in order:
        width = max(width, len(g[v]))
        _eliminate(g, v)
    return width


def exact_treewidth(g: Graph) -> int:
    """Treewidth by dynamic programming over vertex subsets.

    TW(S) = min over v in S of max(TW(S - v), Q(S - v, v)), where Q(S, v) counts
    vertices outside S + {v} reachable from v through S.
    """
    verts = sorted(g)
    n = len(verts)
    if n == 0:
        return -1
    index = {v: k for k, v in enumerate(verts)}
    adj = [0] * n
    for v, nbrs in g.items():
        for u in nbrs:
            adj[index[v]] |= 1 << index[u]
    full = (1 << n) - 1

    def q(s: int, v: int) -> int:
        # vertices reachable from v through s, then their neighbours outside s|v
        seen = 1 << v
        frontier = 1 << v
        while frontier:
            nxt = 0
            f = frontier
            while f:
                b = f & -f
                nxt |= adj[b.bit_length() - 1]
                f ^= b
            nxt &= s & ~seen
            seen |= nxt
            frontier = nxt
        out = 0
        f = seen
        while f:
            b = f & -f
            out |= adj[b.bit_length() - 1]
            f ^= b
        return bin(out & ~seen & ~s & full).count("1")

    @lru_cache(maxsize=None)
    def tw(s: int) -> int:
        if s == 0:
            return -1
        best = n
        f = s
        while f:
            b = f & -f
            v = b.bit_length() - 1
            rest = s ^ b
            cost = q(rest, v)
            if cost < best:
                best = min(best, max(tw(rest), cost))
            f ^= b
        return best

    return tw(full)


def treewidth(g: Graph) -> tuple[int, bool]:
    """Return ``(width, exact)``; above the exact limit a min-fill upper bound is used."""
    if len(g) <= EXACT_TREEWIDTH_LIMIT:
        return exact_treewidth(g), True
    return induced_width(g, min_fill_order(g)), False
