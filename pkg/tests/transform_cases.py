"""Hand-built (RG1, transform, RG2) cases with matched beliefs."""
from dataclasses import dataclass, field

import numpy as np

from regionpursuit.factor_graph import FactorGraph, ising_model, make_rng
from regionpursuit.pursuit import cycle_region
from regionpursuit.region_graph import Region, RegionGraph, add_outer_region, bethe_region_graph, from_parts
from regionpursuit.transforms import Part, SplitSpec, death, link_birth, merge, split
from regionpursuit.factor_graph import grid_edges

from helpers import region_marginals


@dataclass
class Case:
    name: str
    kind: str
    fg: FactorGraph
    rg1: RegionGraph
    rg2: RegionGraph
    split_target: tuple | None = None  # (region id in rg1, vars A1+B, vars A2+B, vars B)
    extra: dict = field(default_factory=dict)

    @property
    def copy_free(self) -> bool:
        return not self.rg1.has_copies() and not self.rg2.has_copies()


def _fid(fg, *scope):
    scope = tuple(sorted(scope))
    return next(f.id for f in fg.factors if f.scope == scope)


def _model(n, edges, seed, w=0.8, a=0.5):
    rng = make_rng(seed)
    return ising_model(n, rng.normal(0, a, n), edges, rng.normal(0, w, len(edges)))


def _whole(fg):
    return Region.of(range(fg.num_vars), range(fg.num_factors))


def _expand(marg, sub, full):
    shape = [marg.shape[sub.index(v)] if v in sub else 1 for v in full]
    order = sorted(sub, key=full.index)
    perm = [sub.index(v) for v in order]
    return np.transpose(marg, perm).reshape(shape)


def split_belief(q, target_vars, a1b, a2b, b):
    """q_{A1B} q_{A2B} / q_B on the target's variables."""
    def marg(vs):
        axes = tuple(a for a in range(q.ndim) if a not in vs)
        return q.sum(axis=axes)
    full = list(target_vars)
    out = _expand(marg(a1b), sorted(a1b), full) * _expand(marg(a2b), sorted(a2b), full)
    if b:
        out = out / _expand(marg(b), sorted(b), full)
    return out


def matched_beliefs(case: Case, q):
    b1 = region_marginals(case.rg1, q)
    b2 = region_marginals(case.rg2, q)
    if case.split_target is not None:
        rid, a1b, a2b, b = case.split_target
        b1[rid] = split_belief(q, case.rg1.regions[rid].vars, a1b, a2b, b)
    return b1, b2


def random_joint(fg, seed):
    p = make_rng(seed).uniform(0.05, 1.0, size=fg.cardinalities)
    return p / p.sum()


def _split_case(name, fg, target_vars, a1, a2, beta):
    """Whole-model outer region on top of Bethe, then split into a1+beta / a2+beta."""
    ins = add_outer_region(bethe_region_graph(fg), _whole(fg), fg)
    rg1, target = ins.rg, ins.region_id

    def facs(vs, used):
        return {f.id for f in fg.factors if set(f.scope) <= vs and f.id not in used}

    fb = facs(set(beta), set()) if beta else set()
    # every factor inside beta goes to beta; the rest to the side that contains it
    f1 = facs(set(a1) | set(beta), fb)
    f2 = facs(set(a2) | set(beta), fb | f1)
    spec = SplitSpec(target, Part.of(a1, f1), Part.of(a2, f2), Part.of(beta, fb))
    rg2 = split(rg1, spec, fg)
    return Case(
        name, "split", fg, rg1, rg2,
        split_target=(target, sorted(set(a1) | set(beta)), sorted(set(a2) | set(beta)), sorted(beta)),
    )


def build_cases() -> list[Case]:
    cases = []

    # two disjoint pairs, empty separator
    fg = _model(4, [(0, 1), (2, 3)], 1)
    cases.append(_split_case("split_disjoint_pairs", fg, None, [0, 1], [2, 3], []))

    # path a-b-c split at b
    fg = _model(3, [(0, 1), (1, 2)], 2)
    cases.append(_split_case("split_path_at_middle", fg, None, [0], [2], [1]))

    # 2x3 grid split at the middle column into two squares
    fg = _model(6, grid_edges(2, 3), 3, w=0.6)
    cases.append(_split_case("split_ladder_into_squares", fg, None, [0, 3], [2, 5], [1, 4]))

    # explicit merge of a copy chain on a 3-chain
    fg = _model(3, [(0, 1), (1, 2)], 4)
    u = [_fid(fg, i) for i in range(3)]
    regions = {
        0: Region.of([0, 1], [u[0], u[1], _fid(fg, 0, 1)]),
        1: Region.of([1, 2], [u[1], u[2], _fid(fg, 1, 2)]),
        2: Region.of([0], [u[0]]),
        3: Region.of([1], [u[1]]),
        4: Region.of([1], [u[1]]),
        5: Region.of([2], [u[2]]),
    }
    rg1 = from_parts(regions, [(0, 2), (0, 4), (1, 4), (4, 3), (1, 5)])
    rg2 = merge(rg1, 4, 3)
    cases.append(Case("merge_copy_pair", "merge", fg, rg1, rg2, extra={"c_before": rg1.counting[4] + rg1.counting[3]}))

    # 2x2 grid with its square: kill the four zero-counting edge regions
    fg = _model(4, grid_edges(2, 2), 5)
    ins = add_outer_region(bethe_region_graph(fg), cycle_region(fg, (0, 1, 3, 2)), fg)
    rg = ins.rg
    for r in sorted(r for r in rg.regions if len(rg.regions[r].vars) == 2):
        rg = death(rg, r)
    cases.append(Case("death_square_edges", "death", fg, ins.rg, rg))

    # triangle with a pendant variable: the pendant's region has a single parent
    fg = _model(4, [(0, 1), (0, 2), (1, 2), (2, 3)], 6, w=0.5)
    rg1 = bethe_region_graph(fg)
    pend = rg1.find(Region.of([3], [_fid(fg, 3)]))
    cases.append(Case("death_pendant_variable", "death", fg, rg1, death(rg1, pend)))

    # 3x3 Kikuchi squares; link a square directly to the centre variable
    fg = _model(9, grid_edges(3, 3), 7, w=0.4)
    rg1 = bethe_region_graph(fg)
    for sq in [(0, 1, 4, 3), (1, 2, 5, 4), (3, 4, 7, 6), (4, 5, 8, 7)]:
        ins = add_outer_region(rg1, cycle_region(fg, sq), fg)
        rg1 = ins.rg
    sq0 = rg1.find(cycle_region(fg, (0, 1, 4, 3)))
    v4 = rg1.find(Region.of([4], [_fid(fg, 4)]))
    cases.append(Case("link_birth_kikuchi", "link_birth", fg, rg1, link_birth(rg1, sq0, v4)))
    return cases
