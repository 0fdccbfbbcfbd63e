"""Exact inference used as ground truth: enumeration and variable elimination."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .elimination import graph_from_cliques, induced_width, min_fill_order
from .factor_graph import FactorGraph

MAX_BRUTE_FORCE_STATES = 2**22
MAX_INDUCED_WIDTH = 22


class OracleInfeasible(RuntimeError):
    """The exact computation would exceed the configured size limits."""


@dataclass
class ExactResult:
    node_marginals: list[np.ndarray]
    log_partition: float
    method: str  # "brute_force" | "variable_elimination"


def log_joint_table(fg: FactorGraph) -> np.ndarray:
    """Unnormalized log joint as a dense array with one axis per variable."""
    n_states = int(np.prod(fg.cardinalities, dtype=float))
    if n_states > MAX_BRUTE_FORCE_STATES:
        raise OracleInfeasible(f"state space of {n_states} exceeds {MAX_BRUTE_FORCE_STATES}")
    n = fg.num_vars
    out = np.zeros(fg.cardinalities)
    for f in fg.factors:
        shape = [1] * n
        for v in f.scope:
            shape[v] = fg.cardinalities[v]
        out = out + f.log_table.reshape(shape)
    return out


def exact_brute_force(fg: FactorGraph) -> ExactResult:
    lj = log_joint_table(fg)
    log_z = float(logsumexp(lj))
    p = np.exp(lj - log_z)
    axes = tuple(range(fg.num_vars))
    marginals = [p.sum(axis=axes[:i] + axes[i + 1:]) for i in range(fg.num_vars)]
    marginals = [m / m.sum() for m in marginals]
    return ExactResult(marginals, log_z, "brute_force")


def exact_entropy(fg: FactorGraph) -> float:
    lj = log_joint_table(fg)
    log_p = lj - logsumexp(lj)
    p = np.exp(log_p)
    return float(-np.sum(np.where(p > 0, p * log_p, 0.0)))


# --- log-domain tables for elimination ---------------------------------------

@dataclass(frozen=True)
class _LogTable:
    vars: tuple[int, ...]  # sorted
    values: np.ndarray


def _product(tables: Sequence[_LogTable], cards: Sequence[int]) -> _LogTable:
    scope = tuple(sorted(set().union(*(t.vars for t in tables))))
    pos = {v: k for k, v in enumerate(scope)}
    out = np.zeros([cards[v] for v in scope])
    for t in tables:
        shape = [1] * len(scope)
        for v in t.vars:
            shape[pos[v]] = cards[v]
        out = out + t.values.reshape(shape)
    return _LogTable(scope, out)


def _sum_out(t: _LogTable, v: int) -> _LogTable:
    axis = t.vars.index(v)
    return _LogTable(t.vars[:axis] + t.vars[axis + 1:], logsumexp(t.values, axis=axis))


def _eliminate_var(tables: list[_LogTable], v: int, cards) -> list[_LogTable]:
    touching = [t for t in tables if v in t.vars]
    rest = [t for t in tables if v not in t.vars]
    if touching:
        rest.append(_sum_out(_product(touching, cards), v))
    return rest


def interaction_graph(fg: FactorGraph):
    return graph_from_cliques(range(fg.num_vars), (f.scope for f in fg.factors))


def exact_variable_elimination(fg: FactorGraph, order: Sequence[int] | None = None) -> ExactResult:
    """Marginals and log Z by variable elimination.

    One elimination run per query variable; runs share the factor sets produced
    by the common prefix of the global ordering.
    """
    g = interaction_graph(fg)
    if not order:
        order = min_fill_order(g)
    order = list(order)
    if sorted(order) != list(range(fg.num_vars)):
        raise ValueError("ordering must be a permutation of all variables")
    # keeping one query variable alive adds at most one to every clique
    width = induced_width(g, order) + 1
    if width > MAX_INDUCED_WIDTH:
        raise OracleInfeasible(f"induced width {width} exceeds cap {MAX_INDUCED_WIDTH}")
    cards = fg.cardinalities
    tables = [_LogTable(f.scope, np.asarray(f.log_table)) for f in fg.factors]
    # prefixes[k] = factor set after eliminating order[:k]
    prefixes = [tables]
    for v in order:
        prefixes.append(_eliminate_var(prefixes[-1], v, cards))
    log_z = float(sum(np.asarray(t.values).sum() for t in prefixes[-1]))
    marginals: list[np.ndarray] = [None] * fg.num_vars  # type: ignore[list-item]
    for k, q in enumerate(order):
        current = prefixes[k]
        for v in order[k + 1:]:
            current = _eliminate_var(current, v, cards)
        joint = _product(current, cards) if current else _LogTable((q,), np.zeros(cards[q]))
        assert joint.vars == (q,)
        m = np.exp(joint.values - logsumexp(joint.values))
        marginals[q] = m / m.sum()
    return ExactResult(marginals, log_z, "variable_elimination")


def exact_inference(fg: FactorGraph) -> ExactResult:
    """Brute force for small models, variable elimination otherwise."""
    if np.prod(fg.cardinalities, dtype=float) <= 2**16:
        return exact_brute_force(fg)
    return exact_variable_elimination(fg)


def avg_l1_error(approx: Sequence[np.ndarray], exact: ExactResult | Sequence[np.ndarray]) -> float:
    """Mean over variables of the L1 distance between marginal vectors."""
    ref = exact.node_marginals if isinstance(exact, ExactResult) else exact
    if len(approx) != len(ref):
        raise ValueError(f"dimension mismatch: {len(approx)} vs {len(ref)} variables")
    total = 0.0
    for a, p in zip(approx, ref):
        a = np.asarray(a, dtype=float)
        p = np.asarray(p, dtype=float)
        if a.shape != p.shape:
            raise ValueError(f"dimension mismatch: marginal shapes {a.shape} vs {p.shape}")
        total += float(np.abs(a - p).sum())
    return total / len(ref)
