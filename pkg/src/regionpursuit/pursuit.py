"""Sequential region pursuit: candidate loops, local free-energy scores, selection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import networkx as nx
import numpy as np

from .exact import ExactResult, avg_l1_error
from .factor_graph import FactorGraph, make_rng
from .gbp import (
    BeliefSet,
    GBPOptions,
    GBPState,
    MessageSystem,
    node_marginals,
    region_free_energy,
    rg_free_energy,
    run_gbp,
)
from .region_graph import (
    Region,
    RegionGraph,
    RegionGraphError,
    add_outer_region,
    ancestors,
    bethe_region_graph,
    check_validity,
    descendants,
    direct_subregions,
    is_extendable,
)
from .transforms import decompose_weakly_irreducible, region_width

STRATEGIES = ("OPT", "RP", "RP_PLUS", "RP_MINUS", "RAND")
LOCAL_SCOPES = ("affected", "descendants")


class PursuitError(RuntimeError):
    pass


@dataclass
class PursuitConfig:
    W: int = 2
    K: int = 4
    k: int = 1
    max_loop_len: int = 4
    gbp_opts: GBPOptions = field(default_factory=GBPOptions)
    strategy: str = "RP"
    seed: int = 0
    local_scope: str = "affected"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.k < 1 or self.k > max(self.K, 1):
            raise ValueError("need 1 <= k <= K")
        if self.W < 2:
            raise ValueError("W must be at least 2")
        if self.max_loop_len < 3:
            raise ValueError("max_loop_len must be at least 3")
        if self.local_scope not in LOCAL_SCOPES:
            raise ValueError(f"local_scope must be one of {LOCAL_SCOPES}")


def region_key(region: Region) -> tuple:
    return (region.vars, region.factors)


# --- candidates --------------------------------------------------------------------

def _canonical_cycle(cycle: Sequence[int]) -> tuple[int, ...]:
    cyc = list(cycle)
    k = cyc.index(min(cyc))
    cyc = cyc[k:] + cyc[:k]
    if len(cyc) > 2 and cyc[-1] < cyc[1]:
        cyc = [cyc[0]] + cyc[:0:-1]
    return tuple(cyc)


def enumerate_chordless_cycles(fg: FactorGraph, max_len: int) -> list[tuple[int, ...]]:
    """Chordless cycles of length 3..max_len in the pairwise interaction graph."""
    g = nx.Graph()
    g.add_nodes_from(range(fg.num_vars))
    g.add_edges_from(fg.interaction_edges())
    cycles = {_canonical_cycle(c) for c in nx.chordless_cycles(g, length_bound=max_len) if len(c) >= 3}
    return sorted(cycles, key=lambda c: (len(c), c))


def cycle_region(fg: FactorGraph, cycle: Sequence[int]) -> Region:
    vs = set(cycle)
    return Region.of(vs, (f.id for f in fg.factors if set(f.scope) <= vs))


def candidate_pool(
    fg: FactorGraph,
    rg: RegionGraph,
    config: PursuitConfig,
    cycles: Sequence[Sequence[int]] | None = None,
) -> list[Region]:
    """Weakly irreducible loop regions of width <= W not yet in the region graph."""
    if cycles is None:
        cycles = enumerate_chordless_cycles(fg, config.max_loop_len)
    present = set(rg.regions.values())
    pool: set[Region] = set()
    for cyc in cycles:
        for piece in decompose_weakly_irreducible(cycle_region(fg, cyc), fg):
            if piece in present or piece in pool:
                continue
            kids = direct_subregions(rg, piece)
            width = region_width(piece, fg, [rg.regions[c].vars for c in kids])
            if width.width <= config.W:
                pool.add(piece)
    return sorted(pool, key=region_key)


# --- scores --------------------------------------------------------------------------

@dataclass
class Snapshot:
    """Converged GBP solution on a region graph, shared by all candidate scores."""
    rg: RegionGraph
    state: GBPState
    beliefs: BeliefSet
    free_energy: float


def snapshot(rg: RegionGraph, fg: FactorGraph, state: GBPState, beliefs: BeliefSet) -> Snapshot:
    return Snapshot(rg, state, beliefs, rg_free_energy(rg, fg, beliefs))


def local_delta_f(
    rg: RegionGraph,
    fg: FactorGraph,
    state: GBPState,
    candidate: Region,
    opts: GBPOptions | None = None,
    beliefs: BeliefSet | None = None,
    scope: str = "affected",
) -> float:
    """Free-energy change from inserting ``candidate`` with incoming messages frozen.

    Only messages sent from inside S (the new region and its descendants) are
    iterated. With ``scope="affected"`` the change is summed over every region
    whose belief reads one of those messages, S plus its ancestors, which is the
    exact change of the whole region free energy under the frozen messages.
    ``scope="descendants"`` sums over S alone. Returns NaN when the local
    iteration does not converge.
    """
    if scope not in LOCAL_SCOPES:
        raise ValueError(f"unknown scope {scope!r}")
    opts = opts or GBPOptions()
    if beliefs is None:
        base = MessageSystem(rg, fg)
        beliefs = base.beliefs(base.pack(state.messages))
    ins = add_outer_region(rg, candidate)
    new, cid = ins.rg, ins.region_id
    inside = descendants(new, cid) | {cid}
    terms = set(inside)
    if scope == "affected":
        for r in inside - {cid}:
            terms |= ancestors(new, r)
    system = MessageSystem(new, fg)
    logm = system.pack(state.messages)
    active = [k for k, (p, _) in enumerate(system.edges) if p in inside]
    if not system.iterate(logm, opts, active).converged:
        return math.nan
    post = 0.0
    for r in terms:
        c = new.counting[r]
        if c:
            b = {r: np.exp(system.log_belief(logm, r)).reshape(system.shape[r])}
            post += c * region_free_energy(new, fg, b, r)
    pre = sum(rg.counting[r] * region_free_energy(rg, fg, beliefs, r) for r in terms - {cid} if rg.counting[r])
    return abs(post - pre)


def full_rerun(
    snap: Snapshot, fg: FactorGraph, candidate: Region, opts: GBPOptions
) -> tuple[RegionGraph, GBPState, BeliefSet]:
    new = add_outer_region(snap.rg, candidate).rg
    state, beliefs = run_gbp(new, fg, opts, init=snap.state)
    return new, state, beliefs


def score_candidates(
    strategy: str,
    snap: Snapshot,
    fg: FactorGraph,
    pool: Sequence[Region],
    opts: GBPOptions,
    exact: ExactResult | None = None,
    local_scope: str = "affected",
) -> dict[Region, float]:
    """Per-candidate score for the strategy; NaN marks an unusable candidate."""
    scores: dict[Region, float] = {}
    if strategy == "RAND":
        return {c: math.nan for c in pool}
    if strategy == "OPT" and exact is None:
        raise PursuitError("OPT needs the exact oracle")
    for cand in pool:
        if strategy in ("RP", "RP_MINUS"):
            scores[cand] = local_delta_f(snap.rg, fg, snap.state, cand, opts, snap.beliefs, local_scope)
            continue
        new, state, beliefs = full_rerun(snap, fg, cand, opts)
        if not state.converged:
            scores[cand] = math.nan
        elif strategy == "RP_PLUS":
            scores[cand] = abs(rg_free_energy(new, fg, beliefs) - snap.free_energy)
        else:
            scores[cand] = avg_l1_error(node_marginals(new, beliefs, fg.num_vars), exact)
    return scores


def select_regions(
    pool: Sequence[Region],
    scores: dict[Region, float] | None,
    strategy: str,
    k: int,
    rng: np.random.Generator | None = None,
) -> list[Region]:
    """Top-k by the strategy's criterion; ties by canonical region order."""
    if not pool:
        raise PursuitError("empty candidate pool")
    ordered = sorted(pool, key=region_key)
    if strategy == "RAND":
        rng = rng if rng is not None else make_rng(0)
        picks = rng.choice(len(ordered), size=min(k, len(ordered)), replace=False)
        return [ordered[j] for j in picks]
    if scores is None:
        raise PursuitError(f"strategy {strategy} needs scores")
    valid = [c for c in ordered if c in scores and not math.isnan(scores[c])]
    if strategy in ("RP", "RP_PLUS"):
        valid.sort(key=lambda c: -scores[c])
    elif strategy in ("RP_MINUS", "OPT"):
        valid.sort(key=lambda c: scores[c])
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    return valid[:k]


# --- the loop ------------------------------------------------------------------------

@dataclass
class PursuitRecord:
    iteration: int
    strategy: str
    chosen: list[Region]
    score: float
    free_energy: float
    l1_error: float
    gbp_iters: int
    converged: bool
    scores: dict[Region, float] = field(default_factory=dict)

    def csv_row(self) -> dict:
        return {
            "iteration": self.iteration,
            "strategy": self.strategy,
            "chosen_region": ";".join(" ".join(map(str, r.vars)) for r in self.chosen),
            "score": self.score,
            "free_energy": self.free_energy,
            "l1_error": self.l1_error,
            "gbp_iters": self.gbp_iters,
            "converged": self.converged,
        }


@dataclass
class PursuitTrace:
    strategy: str
    records: list[PursuitRecord] = field(default_factory=list)
    region_graph: RegionGraph | None = None

    def chosen_sequence(self) -> list[tuple[Region, ...]]:
        return [tuple(r.chosen) for r in self.records[1:]]

    def errors(self) -> list[float]:
        return [r.l1_error for r in self.records]


CSV_FIELDS = ["iteration", "strategy", "chosen_region", "score", "free_energy", "l1_error", "gbp_iters", "converged"]


def region_pursuit(fg: FactorGraph, config: PursuitConfig, exact: ExactResult | None = None) -> PursuitTrace:
    """Grow a region graph from the Bethe approximation, K regions at most.

    Each round rebuilds the candidate pool (decomposition and width are
    re-checked against the current graph), scores it by the configured
    strategy, adds the k best, and re-runs GBP warm-started without removing
    zero-counting regions. ``exact`` enables the L1 column and OPT.
    """
    opts = config.gbp_opts
    rng = make_rng(config.seed)
    rg = bethe_region_graph(fg)
    if not is_extendable(rg, fg)[0]:
        raise PursuitError("base region graph is not extendable")
    state, beliefs = run_gbp(rg, fg, opts)
    snap = snapshot(rg, fg, state, beliefs)

    def l1(rg_, b_) -> float:
        return avg_l1_error(node_marginals(rg_, b_, fg.num_vars), exact) if exact is not None else math.nan

    trace = PursuitTrace(config.strategy)
    trace.records.append(
        PursuitRecord(0, config.strategy, [], math.nan, snap.free_energy, l1(rg, beliefs), state.iteration, state.converged)
    )
    cycles = enumerate_chordless_cycles(fg, config.max_loop_len)
    added = 0
    while added < config.K:
        pool = candidate_pool(fg, snap.rg, config, cycles)
        if not pool:
            break
        scores = score_candidates(config.strategy, snap, fg, pool, opts, exact, config.local_scope)
        chosen = select_regions(pool, scores, config.strategy, min(config.k, config.K - added), rng)
        if not chosen:
            break  # every candidate failed to converge this round
        rg = snap.rg
        for region in chosen:
            rg = add_outer_region(rg, region, fg).rg
        report = check_validity(rg, fg)
        if not report.ok:
            raise RegionGraphError(f"region graph invalid after insertion: {report.violations}")
        state, beliefs = run_gbp(rg, fg, opts, init=snap.state)
        snap = snapshot(rg, fg, state, beliefs)
        added += len(chosen)
        chosen_scores = [scores.get(c, math.nan) for c in chosen]
        trace.records.append(
            PursuitRecord(
                len(trace.records),
                config.strategy,
                list(chosen),
                float(np.mean(chosen_scores)) if chosen_scores else math.nan,
                snap.free_energy,
                l1(rg, beliefs),
                state.iteration,
                state.converged,
                scores,
            )
        )
    trace.region_graph = snap.rg
    return trace
