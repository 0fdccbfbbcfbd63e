"""Region graphs: structure, counting numbers, validity and outer-region insertion."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .factor_graph import FactorGraph


class RegionGraphError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Region:
    vars: tuple[int, ...]
    factors: tuple[int, ...] = ()

    @classmethod
    def of(cls, vars: Iterable[int], factors: Iterable[int] = ()) -> "Region":
        return cls(tuple(sorted(set(vars))), tuple(sorted(set(factors))))

    def issubregion(self, other: "Region") -> bool:
        return set(self.vars) <= set(other.vars) and set(self.factors) <= set(other.factors)

    def __str__(self) -> str:
        return f"vars={list(self.vars)} factors={list(self.factors)}"


@dataclass
class RegionGraph:
    regions: dict[int, Region] = field(default_factory=dict)
    edges: set[tuple[int, int]] = field(default_factory=set)  # (parent, child)
    counting: dict[int, int] = field(default_factory=dict)

    # -- structure ---------------------------------------------------------
    def copy(self) -> "RegionGraph":
        return RegionGraph(dict(self.regions), set(self.edges), dict(self.counting))

    def next_id(self) -> int:
        return max(self.regions, default=-1) + 1

    def add_region(self, region: Region) -> int:
        rid = self.next_id()
        self.regions[rid] = region
        return rid

    def find(self, region: Region) -> int | None:
        for rid, r in self.regions.items():
            if r == region:
                return rid
        return None

    def parents(self, r: int) -> list[int]:
        return sorted(p for p, c in self.edges if c == r)

    def children(self, r: int) -> list[int]:
        return sorted(c for p, c in self.edges if p == r)

    def outer_regions(self) -> list[int]:
        inner = {c for _, c in self.edges}
        return [r for r in sorted(self.regions) if r not in inner]

    def _check(self, r: int) -> None:
        if r not in self.regions:
            raise RegionGraphError(f"unknown region id {r}")

    def topological_order(self) -> list[int]:
        """Parents before children; ties by region id. Raises on cycles."""
        indeg = {r: 0 for r in self.regions}
        kids: dict[int, list[int]] = {r: [] for r in self.regions}
        for p, c in self.edges:
            indeg[c] += 1
            kids[p].append(c)
        ready = sorted(r for r, d in indeg.items() if d == 0)
        order = []
        queue = deque(ready)
        while queue:
            r = queue.popleft()
            order.append(r)
            for c in sorted(kids[r]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if len(order) != len(self.regions):
            raise RegionGraphError("region graph contains a cycle")
        return order

    def has_copies(self) -> bool:
        return len(set(self.regions.values())) != len(self.regions)


def _closure(rg: RegionGraph, r: int, upward: bool) -> set[int]:
    adj: dict[int, list[int]] = {}
    for p, c in rg.edges:
        a, b = (c, p) if upward else (p, c)
        adj.setdefault(a, []).append(b)
    seen: set[int] = set()
    stack = [r]
    while stack:
        for nxt in adj.get(stack.pop(), ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    seen.discard(r)
    return seen


def ancestors(rg: RegionGraph, r: int) -> set[int]:
    rg._check(r)
    return _closure(rg, r, upward=True)


def descendants(rg: RegionGraph, r: int) -> set[int]:
    rg._check(r)
    return _closure(rg, r, upward=False)


def compute_counting_numbers(rg: RegionGraph) -> dict[int, int]:
    """c_r = 1 - sum of c over all ancestors of r, evaluated top-down."""
    order = rg.topological_order()
    par: dict[int, list[int]] = {r: [] for r in rg.regions}
    for p, c in rg.edges:
        par[c].append(p)
    anc: dict[int, set[int]] = {}
    counting: dict[int, int] = {}
    for r in order:
        a: set[int] = set()
        for p in par[r]:
            a.add(p)
            a |= anc[p]
        anc[r] = a
        counting[r] = 1 - sum(counting[x] for x in a)
    return counting


def refresh(rg: RegionGraph) -> RegionGraph:
    rg.counting = compute_counting_numbers(rg)
    return rg


def from_parts(regions: dict[int, Region], edges: Iterable[tuple[int, int]]) -> RegionGraph:
    rg = RegionGraph(dict(regions), set(edges))
    for p, c in rg.edges:
        rg._check(p)
        rg._check(c)
    return refresh(rg)


# --- validity ---------------------------------------------------------------

@dataclass
class ValidityReport:
    c1_ok: bool
    c2_ok: bool
    violations: list[str]

    @property
    def ok(self) -> bool:
        return self.c1_ok and self.c2_ok


def _weakly_connected(nodes: set[int], edges: set[tuple[int, int]]) -> bool:
    if len(nodes) <= 1:
        return True
    adj: dict[int, set[int]] = {n: set() for n in nodes}
    for p, c in edges:
        if p in nodes and c in nodes:
            adj[p].add(c)
            adj[c].add(p)
    start = next(iter(nodes))
    seen = {start}
    stack = [start]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen == nodes


def check_validity(rg: RegionGraph, fg: FactorGraph) -> ValidityReport:
    """Check connectivity (C1) and unit counting sums (C2) per variable and factor."""
    counting = compute_counting_numbers(rg)
    violations = []
    c1 = c2 = True
    for rid, r in rg.regions.items():
        bad = [a for a in r.factors if a < 0 or a >= fg.num_factors]
        if bad:
            raise RegionGraphError(f"region {rid} references unknown factors {bad}")
    subjects = [("variable", i, lambda r, i=i: i in r.vars) for i in range(fg.num_vars)]
    subjects += [("factor", a, lambda r, a=a: a in r.factors) for a in range(fg.num_factors)]
    for kind, idx, contains in subjects:
        members = {rid for rid, r in rg.regions.items() if contains(r)}
        total = sum(counting[m] for m in members)
        if total != 1:
            c2 = False
            violations.append(f"C2: {kind} {idx} counting sum {total}")
        if not members:
            continue
        if not _weakly_connected(members, rg.edges):
            c1 = False
            violations.append(f"C1: {kind} {idx} subgraph disconnected")
    return ValidityReport(c1, c2, violations)


def is_extendable(rg: RegionGraph, fg: FactorGraph) -> tuple[bool, tuple[str, int] | None]:
    """True iff every RG(i) and RG(a) has exactly one leaf; otherwise a witness."""
    out_edges: dict[int, list[int]] = {r: [] for r in rg.regions}
    for p, c in rg.edges:
        out_edges[p].append(c)
    subjects = [("variable", i, lambda r, i=i: i in r.vars) for i in range(fg.num_vars)]
    subjects += [("factor", a, lambda r, a=a: a in r.factors) for a in range(fg.num_factors)]
    for kind, idx, contains in subjects:
        members = {rid for rid, r in rg.regions.items() if contains(r)}
        leaves = [m for m in members if not any(c in members for c in out_edges[m])]
        if len(leaves) != 1:
            return False, (kind, idx)
    return True, None


def bethe_region_graph(fg: FactorGraph) -> RegionGraph:
    """Two-layer graph: one outer region per factor above one region per variable.

    Single-variable factors are not given regions of their own when their
    variable also sits in a larger factor: they are carried by that
    variable's region and by every outer region covering the variable. This
    keeps the graph free of same-scope regions while every factor still sums
    to one. A variable touched only by single-variable factors gets one outer
    region per such factor above an empty variable region.
    """
    unary: dict[int, list[int]] = {i: [] for i in range(fg.num_vars)}
    coupled = set()
    for f in fg.factors:
        if len(f.scope) == 1:
            unary[f.scope[0]].append(f.id)
        else:
            coupled.update(f.scope)
    rg = RegionGraph()
    outer = []
    for f in fg.factors:
        if len(f.scope) == 1 and f.scope[0] in coupled:
            continue
        carried = [u for i in f.scope for u in unary[i]] if len(f.scope) > 1 else []
        outer.append((f.scope, rg.add_region(Region.of(f.scope, [f.id, *carried]))))
    var_region = {}
    for i in range(fg.num_vars):
        var_region[i] = rg.add_region(Region((i,), tuple(unary[i]) if i in coupled else ()))
    for scope, rid in outer:
        for i in scope:
            rg.edges.add((rid, var_region[i]))
    return refresh(rg)


def direct_subregions(rg: RegionGraph, candidate: Region) -> set[int]:
    """Existing subregions of ``candidate`` that are maximal under containment."""
    if rg.find(candidate) is not None:
        raise RegionGraphError(f"duplicate region {candidate}")
    return _maximal_subregions(rg, candidate, rg.regions.keys())


def _maximal_subregions(rg: RegionGraph, candidate: Region, pool: Iterable[int]) -> set[int]:
    subs = [r for r in pool if rg.regions[r].issubregion(candidate)]
    out = set()
    for r in subs:
        rr = rg.regions[r]
        dominated = any(
            s != r and rr.issubregion(rg.regions[s]) and rg.regions[s] != rr for s in subs
        )
        if not dominated:
            out.add(r)
    return out


@dataclass
class Insertion:
    rg: RegionGraph
    region_id: int
    extendable: bool


def add_outer_region(rg: RegionGraph, candidate: Region, fg: FactorGraph | None = None) -> Insertion:
    """Insert ``candidate`` above its direct subregions and recompute counting numbers.

    When ``fg`` is given the base graph is checked for extendability first and
    the result is re-checked; the outcome of the re-check is reported, not enforced.
    """
    if not candidate.vars:
        raise RegionGraphError("candidate region has no variables")
    if rg.find(candidate) is not None:
        raise RegionGraphError(f"duplicate region {candidate}")
    placed = set().union(*(r.factors for r in rg.regions.values())) if rg.regions else set()
    missing = set(candidate.factors) - placed
    if missing:
        raise RegionGraphError(f"candidate factors {sorted(missing)} are not in the region graph")
    if fg is not None:
        ok, witness = is_extendable(rg, fg)
        if not ok:
            raise RegionGraphError(f"base region graph is not extendable (witness {witness})")
    kids = direct_subregions(rg, candidate)
    covered_vars = set().union(*(rg.regions[k].vars for k in kids)) if kids else set()
    covered_facs = set().union(*(rg.regions[k].factors for k in kids)) if kids else set()
    if covered_vars != set(candidate.vars) or covered_facs != set(candidate.factors):
        raise RegionGraphError(
            f"candidate {candidate} is not covered by its direct subregions; "
            "it must contain the smallest region holding each of its variables and factors"
        )
    new = rg.copy()
    rid = new.add_region(candidate)
    new.edges.update((rid, k) for k in kids)
    refresh(new)
    extendable = is_extendable(new, fg)[0] if fg is not None else True
    return Insertion(new, rid, extendable)


# --- text serialization -----------------------------------------------------

def format_region_graph(rg: RegionGraph) -> str:
    lines = []
    for rid in sorted(rg.regions):
        r = rg.regions[rid]
        lines.append(f"R {rid} vars: {' '.join(map(str, r.vars))} factors: {' '.join(map(str, r.factors))}".rstrip())
    for p, c in sorted(rg.edges):
        lines.append(f"E {p} {c}")
    counting = rg.counting or compute_counting_numbers(rg)
    for rid in sorted(rg.regions):
        lines.append(f"C {rid} {counting[rid]}")
    return "\n".join(lines) + "\n"


def parse_region_graph(text: str) -> RegionGraph:
    regions: dict[int, Region] = {}
    edges = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tag = line.split()[0]
        try:
            if tag == "R":
                head, _, rest = line.partition("vars:")
                var_part, _, fac_part = rest.partition("factors:")
                rid = int(head.split()[1])
                if rid in regions:
                    raise RegionGraphError(f"line {lineno}: duplicate region id {rid}")
                regions[rid] = Region.of(map(int, var_part.split()), map(int, fac_part.split()))
            elif tag == "E":
                _, p, c = line.split()
                edges.add((int(p), int(c)))
            elif tag == "C":
                line.split()[2]  # recomputed
            else:
                raise RegionGraphError(f"line {lineno}: unknown record {tag!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, RegionGraphError):
                raise
            raise RegionGraphError(f"line {lineno}: malformed record: {raw!r}") from exc
    return from_parts(regions, edges)


def write_region_graph(rg: RegionGraph, path: str | Path) -> None:
    Path(path).write_text(format_region_graph(rg))


def read_region_graph(path: str | Path) -> RegionGraph:
    return parse_region_graph(Path(path).read_text())
