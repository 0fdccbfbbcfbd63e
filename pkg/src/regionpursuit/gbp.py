"""Parent-to-child generalized belief propagation on region graphs.

Messages live on region-graph edges as normalized log tables over the child's
variables. The belief of region r multiplies its own factors with every
message (g -> b) where b is r or one of its descendants and g is outside that
set. A message update rescales the old message by the ratio of the parent's
marginal to the child's belief.

Internally all messages sit in one flat array and every region owns a
gather table listing which message entries feed each of its entries; the
sweeps themselves run in the compiled loops of ``_kernels``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, NamedTuple

import numpy as np

from . import _kernels as _k
from .factor_graph import FactorGraph, make_rng
from .region_graph import RegionGraph, compute_counting_numbers

BELIEF_FLOOR = 1e-300
MESSAGE_FLOOR = 1e-30
_LOG_BELIEF_FLOOR = math.log(BELIEF_FLOOR)
_LOG_MESSAGE_FLOOR = math.log(MESSAGE_FLOOR)

SCHEDULES = ("topdown_roundrobin", "random_permutation")
DAMPING_MODES = ("sweep", "edge")

Edge = tuple[int, int]
BeliefSet = dict[int, np.ndarray]


@dataclass
class GBPOptions:
    damping: float = 0.5
    tolerance: float = 1e-9
    max_iters: int = 2000
    schedule: str = "topdown_roundrobin"
    seed: int = 0
    init: str = "uniform"  # or "random"
    damping_mode: str = "sweep"  # or "edge"
    fallback_damping: tuple[float, ...] = (0.7, 0.85, 0.95)

    def __post_init__(self):
        if not 0.0 <= self.damping < 1.0:
            raise ValueError("damping must lie in [0, 1)")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.init not in ("uniform", "random"):
            raise ValueError(f"unknown init {self.init!r}")
        if any(not 0.0 <= d < 1.0 for d in self.fallback_damping):
            raise ValueError("fallback damping values must lie in [0, 1)")
        if self.damping_mode not in DAMPING_MODES:
            raise ValueError(f"unknown damping_mode {self.damping_mode!r}")


class IterResult(NamedTuple):
    iterations: int  # sweeps over all attempts
    converged: bool
    residuals: list[float]  # of the final attempt
    clamps: int
    damping: float


@dataclass
class GBPState:
    messages: dict[Edge, np.ndarray]  # normalized, strictly positive, shaped like the child
    iteration: int = 0
    converged: bool = False
    max_residual: float = math.inf
    residuals: list[float] = field(default_factory=list)
    clamp_count: int = 0
    damping: float = 0.5  # damping of the final attempt
    zero_count_regions: list[int] = field(default_factory=list)

    def diagnostics_rows(self) -> list[dict]:
        return [
            {"iteration": k + 1, "max_residual": r, "clamp_count": self.clamp_count}
            for k, r in enumerate(self.residuals)
        ]


def _normalize_log(x: np.ndarray) -> np.ndarray:
    mx = np.max(x)
    return x - (mx + math.log(np.exp(x - mx).sum()))


@lru_cache(maxsize=4096)
def _position_index(shape_r: tuple[int, ...], positions: tuple[int, ...]) -> np.ndarray:
    if not positions:
        return np.zeros(int(np.prod(shape_r)), dtype=np.int64)
    coords = np.indices(shape_r).reshape(len(shape_r), -1)
    idx = np.ravel_multi_index(tuple(coords[list(positions)]), tuple(shape_r[k] for k in positions))
    idx = idx.astype(np.int64)
    idx.setflags(write=False)
    return idx


def _sub_index(vars_r: tuple[int, ...], shape_r: tuple[int, ...], vars_b: tuple[int, ...]) -> np.ndarray:
    """For each flat entry of region r, the flat entry of the sub-scope table b."""
    return _position_index(tuple(shape_r), tuple(vars_r.index(v) for v in vars_b))


def descendant_sets(rg: RegionGraph) -> dict[int, set[int]]:
    kids: dict[int, list[int]] = {r: [] for r in rg.regions}
    for p, c in rg.edges:
        kids[p].append(c)
    dec: dict[int, set[int]] = {}
    for r in reversed(rg.topological_order()):
        d: set[int] = set()
        for c in kids[r]:
            d.add(c)
            d |= dec[c]
        dec[r] = d
    return dec


def u_set(rg: RegionGraph, r: int, dec: dict[int, set[int]] | None = None) -> set[Edge]:
    """Message slots (g -> b) entering r or its descendants from outside that set."""
    rg._check(r)
    dec = dec if dec is not None else descendant_sets(rg)
    inside = dec[r] | {r}
    return {(p, c) for p, c in rg.edges if c in inside and p not in inside}


class MessageSystem:
    """Flat-array compilation of a (region graph, factor graph) pair."""

    def __init__(self, rg: RegionGraph, fg: FactorGraph):
        self.rg = rg
        self.fg = fg
        self.order = rg.topological_order()
        pos = {r: k for k, r in enumerate(self.order)}
        self.pos = pos
        nreg = len(self.order)
        self.vars = {r: rg.regions[r].vars for r in rg.regions}
        self.shape = {r: tuple(fg.cardinalities[v] for v in self.vars[r]) for r in rg.regions}
        size = np.array([int(np.prod(self.shape[r])) for r in self.order], dtype=np.int64)
        self.size_arr = size
        self.size = {r: int(size[pos[r]]) for r in self.order}

        lp_chunks = []
        for r in self.order:
            lp = np.zeros(self.size[r])
            for a in rg.regions[r].factors:
                f = fg.factors[a]
                lp = lp + f.log_table.ravel()[_sub_index(self.vars[r], self.shape[r], f.scope)]
            lp_chunks.append(lp)
        self.lp_start = np.zeros(nreg, dtype=np.int64)
        self.lp_start[1:] = np.cumsum(size)[:-1]
        self.lp_data = np.concatenate(lp_chunks) if lp_chunks else np.zeros(0)

        kids: dict[int, list[int]] = {r: [] for r in rg.regions}
        parents: dict[int, list[int]] = {r: [] for r in rg.regions}
        for p, c in rg.edges:
            kids[p].append(c)
            parents[c].append(p)
        # top-down schedule: parents in topological order, children by id
        self.edges: list[Edge] = [(p, c) for p in self.order for c in sorted(kids[p])]
        self.edge_index = {e: k for k, e in enumerate(self.edges)}
        ne = len(self.edges)
        self.e_parent = np.array([pos[p] for p, _ in self.edges], dtype=np.int64)
        self.e_child = np.array([pos[c] for _, c in self.edges], dtype=np.int64)
        self.offsets = np.zeros(ne + 1, dtype=np.int64)
        for k, (_, c) in enumerate(self.edges):
            self.offsets[k + 1] = self.offsets[k] + self.size[c]
        mi = [_sub_index(self.vars[p], self.shape[p], self.vars[c]) for p, c in self.edges]
        self.mi_start = np.zeros(ne, dtype=np.int64)
        if ne:
            self.mi_start[1:] = np.cumsum([len(m) for m in mi])[:-1]
        self.mi_data = np.concatenate(mi) if mi else np.zeros(0, dtype=np.int64)

        self.dec: dict[int, set[int]] = {}
        for r in reversed(self.order):
            d: set[int] = set()
            for c in kids[r]:
                d.add(c)
                d |= self.dec[c]
            self.dec[r] = d
        g_chunks = []
        self.g_start = np.zeros(nreg, dtype=np.int64)
        self.g_rows = np.zeros(nreg, dtype=np.int64)
        total = 0
        for k_r, r in enumerate(self.order):
            inside = self.dec[r] | {r}
            slots = sorted(
                self.edge_index[(p, b)] for b in inside for p in parents[b] if p not in inside
            )
            self.g_start[k_r] = total
            self.g_rows[k_r] = len(slots)
            for k in slots:
                g_chunks.append(self.offsets[k] + _sub_index(self.vars[r], self.shape[r], self.vars[self.edges[k][1]]))
            total += len(slots) * self.size[r]
        self.g_data = np.concatenate(g_chunks) if g_chunks else np.zeros(0, dtype=np.int64)
        width = int(size.max()) if nreg else 1
        self._bufs = [np.empty(width) for _ in range(4)]

    # -- message storage ---------------------------------------------------
    def uniform_messages(self) -> np.ndarray:
        logm = np.empty(self.offsets[-1])
        for k, (_, c) in enumerate(self.edges):
            logm[self.offsets[k]:self.offsets[k + 1]] = -math.log(self.size[c])
        return logm

    def random_messages(self, seed: int) -> np.ndarray:
        rng = make_rng(seed)
        logm = rng.normal(size=self.offsets[-1])
        for k in range(len(self.edges)):
            sl = slice(self.offsets[k], self.offsets[k + 1])
            logm[sl] = _normalize_log(logm[sl])
        return logm

    def pack(self, messages: dict[Edge, np.ndarray], base: np.ndarray | None = None) -> np.ndarray:
        logm = self.uniform_messages() if base is None else base.copy()
        for e, m in messages.items():
            k = self.edge_index.get(e)
            if k is None:
                continue
            m = np.asarray(m, dtype=float).ravel()
            if m.size != self.size[e[1]]:
                continue
            logm[self.offsets[k]:self.offsets[k + 1]] = _normalize_log(np.log(np.maximum(m, MESSAGE_FLOOR)))
        return logm

    def unpack(self, logm: np.ndarray) -> dict[Edge, np.ndarray]:
        return {
            e: np.exp(logm[self.offsets[k]:self.offsets[k + 1]]).reshape(self.shape[e[1]])
            for k, e in enumerate(self.edges)
        }

    # -- beliefs and updates -------------------------------------------------
    def log_belief(self, logm: np.ndarray, r: int) -> np.ndarray:
        out = np.empty(self.size[r])
        _k.log_belief(
            self.pos[r], logm, self.lp_data, self.lp_start, self.size_arr,
            self.g_data, self.g_start, self.g_rows, out,
        )
        return out

    def beliefs(self, logm: np.ndarray) -> BeliefSet:
        return {r: np.exp(self.log_belief(logm, r)).reshape(self.shape[r]) for r in self.order}

    def proposal(self, logm: np.ndarray, k: int) -> tuple[np.ndarray, int]:
        """Undamped normalized log message for edge k and the number of clamped entries."""
        scratch = logm.copy()
        _, clamps = self.sweep(scratch, 0.0, [k])
        return scratch[self.offsets[k]:self.offsets[k + 1]].copy(), clamps

    def sweep(
        self,
        logm: np.ndarray,
        damping: float,
        active: list[int] | np.ndarray | None = None,
        rng: np.random.Generator | None = None,
        mode: str = "edge",
    ) -> tuple[float, int]:
        """One in-place pass over the active edges; returns (max residual, clamps).

        ``mode="edge"`` damps every message as it is updated. ``mode="sweep"``
        runs an undamped pass on a copy and then mixes the whole proposal with
        the previous messages, which damps the sweep map itself.
        """
        if mode == "sweep" and damping > 0.0:
            proposal = logm.copy()
            _, clamps = self.sweep(proposal, 0.0, active, rng)
            return float(_k.mix(logm, proposal, self.offsets, float(damping))), clamps
        ks = np.arange(len(self.edges), dtype=np.int64) if active is None else np.asarray(active, dtype=np.int64)
        if rng is not None:
            ks = ks[rng.permutation(len(ks))]
        bp, bc, bm, bn = self._bufs
        res, clamps = _k.sweep(
            ks, logm, self.e_parent, self.e_child, self.offsets, self.mi_data, self.mi_start,
            self.lp_data, self.lp_start, self.size_arr, self.g_data, self.g_start, self.g_rows,
            float(damping), rng is None, _LOG_BELIEF_FLOOR, _LOG_MESSAGE_FLOOR, bp, bc, bm, bn,
        )
        return float(res), int(clamps)

    def iterate(
        self,
        logm: np.ndarray,
        opts: GBPOptions,
        active: list[int] | None = None,
    ) -> IterResult:
        """Sweep until the residual drops below tolerance.

        A run that exhausts ``max_iters`` restarts from the same initial
        messages with each stronger damping in ``opts.fallback_damping``.
        """
        if active is not None and len(active) == 0:
            return IterResult(0, True, [], 0, opts.damping)
        start = logm.copy()
        ladder = [opts.damping] + [d for d in opts.fallback_damping if d > opts.damping]
        total = clamps = 0
        residuals: list[float] = []
        for attempt, damping in enumerate(ladder):
            if attempt:
                logm[:] = start
            rng = make_rng(opts.seed) if opts.schedule == "random_permutation" else None
            residuals = []
            for _ in range(opts.max_iters):
                res, n = self.sweep(logm, damping, active, rng, opts.damping_mode)
                residuals.append(res)
                clamps += n
                total += 1
                if res < opts.tolerance:
                    return IterResult(total, True, residuals, clamps, damping)
        return IterResult(total, False, residuals, clamps, ladder[-1])


def _initial_messages(system: MessageSystem, opts: GBPOptions, init: GBPState | None) -> np.ndarray:
    base = system.random_messages(opts.seed) if opts.init == "random" else system.uniform_messages()
    if init is None:
        return base
    return system.pack(init.messages, base)


def run_gbp(
    rg: RegionGraph,
    fg: FactorGraph,
    opts: GBPOptions | None = None,
    init: GBPState | None = None,
    update_only: Iterable[Edge] | None = None,
    system: MessageSystem | None = None,
) -> tuple[GBPState, BeliefSet]:
    """Iterate message updates until the largest log-message change falls below tolerance.

    ``init`` warm-starts from earlier messages (edges absent from it start
    uniform). ``update_only`` restricts updates to a subset of edges; all
    other messages stay frozen. Non-convergence is reported in the state.
    """
    opts = opts or GBPOptions()
    system = system or MessageSystem(rg, fg)
    logm = _initial_messages(system, opts, init)
    active = None
    if update_only is not None:
        active = sorted(system.edge_index[e] for e in update_only)
    iters, converged, residuals, clamps, damping = system.iterate(logm, opts, active)
    counting = rg.counting or compute_counting_numbers(rg)
    state = GBPState(
        messages=system.unpack(logm),
        iteration=iters,
        converged=converged,
        max_residual=residuals[-1] if residuals else 0.0,
        residuals=residuals,
        clamp_count=clamps,
        damping=damping,
        zero_count_regions=sorted(r for r, c in counting.items() if c == 0),
    )
    return state, system.beliefs(logm)


def compute_belief(rg: RegionGraph, fg: FactorGraph, state: GBPState, r: int) -> np.ndarray:
    rg._check(r)
    system = MessageSystem(rg, fg)
    logm = system.pack(state.messages)
    return np.exp(system.log_belief(logm, r)).reshape(system.shape[r])


def update_message(
    rg: RegionGraph, fg: FactorGraph, state: GBPState, edge: Edge, damping: float = 0.0
) -> np.ndarray:
    """New (damped) message for one edge; the state is not modified."""
    if edge not in rg.edges:
        raise ValueError(f"edge {edge} is not in the region graph")
    system = MessageSystem(rg, fg)
    logm = system.pack(state.messages)
    k = system.edge_index[edge]
    new, _ = system.proposal(logm, k)
    if damping > 0.0:
        new = _normalize_log((1.0 - damping) * new + damping * logm[system.offsets[k]:system.offsets[k + 1]])
    return np.exp(new).reshape(system.shape[edge[1]])


# --- free energy ---------------------------------------------------------------

def region_log_potential(rg: RegionGraph, fg: FactorGraph, r: int) -> np.ndarray:
    reg = rg.regions[r]
    shape = tuple(fg.cardinalities[v] for v in reg.vars)
    lp = np.zeros(int(np.prod(shape)))
    for a in reg.factors:
        f = fg.factors[a]
        lp = lp + f.log_table.ravel()[_sub_index(reg.vars, shape, f.scope)]
    return lp.reshape(shape)


def region_energy_entropy(rg: RegionGraph, fg: FactorGraph, beliefs: BeliefSet, r: int) -> tuple[float, float]:
    b = np.asarray(beliefs[r], dtype=float)
    lp = region_log_potential(rg, fg, r)
    pos = b > 0
    energy = -float(np.sum(b[pos] * lp[pos]))
    entropy = -float(np.sum(b[pos] * np.log(b[pos])))
    return energy, entropy


def region_free_energy(rg: RegionGraph, fg: FactorGraph, beliefs: BeliefSet, r: int) -> float:
    """Average energy minus entropy of region r under its belief (0 log 0 = 0)."""
    energy, entropy = region_energy_entropy(rg, fg, beliefs, r)
    return energy - entropy


def rg_free_energy(rg: RegionGraph, fg: FactorGraph, beliefs: BeliefSet, counting: dict[int, int] | None = None) -> float:
    counting = counting or rg.counting or compute_counting_numbers(rg)
    return float(sum(c * region_free_energy(rg, fg, beliefs, r) for r, c in counting.items() if c != 0))


def rg_entropy(rg: RegionGraph, fg: FactorGraph, beliefs: BeliefSet) -> float:
    counting = rg.counting or compute_counting_numbers(rg)
    return float(sum(c * region_energy_entropy(rg, fg, beliefs, r)[1] for r, c in counting.items() if c != 0))


def node_marginals(rg: RegionGraph, beliefs: BeliefSet, num_vars: int) -> list[np.ndarray]:
    """Marginal of each variable read from the smallest region containing it."""
    out = []
    for i in range(num_vars):
        holders = [r for r, reg in rg.regions.items() if i in reg.vars]
        if not holders:
            raise ValueError(f"variable {i} appears in no region")
        r = min(holders, key=lambda h: (len(rg.regions[h].vars), h))
        vars_r = rg.regions[r].vars
        b = np.asarray(beliefs[r])
        axes = tuple(k for k, v in enumerate(vars_r) if v != i)
        m = b.sum(axis=axes) if axes else b
        out.append(m / m.sum())
    return out


def marginalize(belief: np.ndarray, vars_from: tuple[int, ...], vars_to: tuple[int, ...]) -> np.ndarray:
    axes = tuple(k for k, v in enumerate(vars_from) if v not in vars_to)
    return belief.sum(axis=axes) if axes else belief


def consistency_violation(rg: RegionGraph, beliefs: BeliefSet) -> float:
    """Largest |sum_{parent \\ child} b_parent - b_child| over all edges."""
    worst = 0.0
    for p, c in rg.edges:
        m = marginalize(beliefs[p], rg.regions[p].vars, rg.regions[c].vars)
        worst = max(worst, float(np.max(np.abs(m - beliefs[c]))))
    return worst
