"""Discrete factor graphs, the experimental model families, and UAI-style I/O.

A model is a list of nonnegative factor tables over sorted variable scopes.
Tables are kept both in the linear domain (for I/O) and in the log domain,
which is what every inference routine consumes.

Random generators draw from ``numpy.random.Philox``, a counter-based 64-bit
generator, so a given ``(params, seed)`` pair gives identical models on any
platform running the same numpy.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

GENERATOR_VERSION = "1"


class ModelError(ValueError):
    """Raised for malformed factor graphs or assignments."""


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class Factor:
    id: int
    scope: tuple[int, ...]
    table: np.ndarray = field(repr=False)  # shape = cardinalities of scope
    log_table: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class FactorGraph:
    cardinalities: tuple[int, ...]
    factors: tuple[Factor, ...]

    @property
    def num_vars(self) -> int:
        return len(self.cardinalities)

    @property
    def num_factors(self) -> int:
        return len(self.factors)

    def var_factors(self, i: int) -> list[int]:
        return [f.id for f in self.factors if i in f.scope]

    def interaction_edges(self, factor_ids: Iterable[int] | None = None) -> set[tuple[int, int]]:
        """Variable pairs sharing a factor (each factor scope is a clique)."""
        ids = range(self.num_factors) if factor_ids is None else factor_ids
        edges = set()
        for a in ids:
            for u, v in itertools.combinations(self.factors[a].scope, 2):
                edges.add((u, v))
        return edges


def build_factor_graph(
    cardinalities: Sequence[int],
    factors: Sequence[tuple[Sequence[int], Sequence[float] | np.ndarray]],
) -> FactorGraph:
    """Validate and assemble a factor graph.

    ``factors`` holds ``(scope, table)`` pairs. The table is either flat in
    row-major order over the scope as given (last variable fastest) or already
    shaped. Unsorted scopes are transposed into sorted order.
    """
    cards = tuple(int(d) for d in cardinalities)
    if any(d < 2 for d in cards):
        raise ModelError("every variable needs at least 2 states")
    built = []
    mentioned = set()
    for fid, (scope, table) in enumerate(factors):
        scope = [int(v) for v in scope]
        if not scope:
            raise ModelError(f"factor {fid}: empty scope")
        if len(set(scope)) != len(scope):
            raise ModelError(f"factor {fid}: duplicate variable in scope")
        if any(v < 0 or v >= len(cards) for v in scope):
            raise ModelError(f"factor {fid}: scope references unknown variable")
        arr = np.asarray(table, dtype=float)
        shape = tuple(cards[v] for v in scope)
        if arr.size != int(np.prod(shape)):
            raise ModelError(
                f"factor {fid}: size mismatch (table has {arr.size} entries, scope needs {int(np.prod(shape))})"
            )
        arr = arr.reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise ModelError(f"factor {fid}: non-finite table entry")
        if np.any(arr < 0):
            raise ModelError(f"factor {fid}: negative table entry")
        if not np.any(arr > 0):
            raise ModelError(f"factor {fid}: table has no positive entry")
        perm = np.argsort(scope)
        arr = np.ascontiguousarray(np.transpose(arr, perm))
        sorted_scope = tuple(scope[p] for p in perm)
        with np.errstate(divide="ignore"):
            log_arr = np.log(arr)
        arr.setflags(write=False)
        log_arr.setflags(write=False)
        built.append(Factor(fid, sorted_scope, arr, log_arr))
        mentioned.update(sorted_scope)
    isolated = sorted(set(range(len(cards))) - mentioned)
    if isolated:
        raise ModelError(f"isolated variable(s) {isolated}: no factor mentions them")
    return FactorGraph(cards, tuple(built))


def _check_assignment(fg: FactorGraph, x: Sequence[int]) -> None:
    if len(x) != fg.num_vars:
        raise ModelError(f"assignment has length {len(x)}, model has {fg.num_vars} variables")
    for i, s in enumerate(x):
        if not 0 <= s < fg.cardinalities[i]:
            raise ModelError(f"state {s} out of range for variable {i}")


def log_unnormalized_joint(fg: FactorGraph, x: Sequence[int]) -> float:
    _check_assignment(fg, x)
    return float(sum(f.log_table[tuple(x[v] for v in f.scope)] for f in fg.factors))


def unnormalized_joint(fg: FactorGraph, x: Sequence[int]) -> float:
    """Product of all factor entries at assignment ``x``."""
    return float(np.exp(log_unnormalized_joint(fg, x)))


# --- model families ---------------------------------------------------------

SPIN = np.array([-1.0, 1.0])  # state 0 <-> -1, state 1 <-> +1


def ising_pair_table(w: float) -> np.ndarray:
    return np.exp(w * np.outer(SPIN, SPIN))


def ising_unary_table(a: float) -> np.ndarray:
    return np.exp(a * SPIN)


def ising_model(
    num_vars: int,
    unary: Sequence[float],
    pairs: Sequence[tuple[int, int]],
    weights: Sequence[float],
) -> FactorGraph:
    """Binary spin model with one unary factor per node followed by pairwise factors."""
    factors = [((i,), ising_unary_table(a)) for i, a in enumerate(unary)]
    factors += [((i, j), ising_pair_table(w)) for (i, j), w in zip(pairs, weights)]
    return build_factor_graph([2] * num_vars, factors)


def grid_edges(n: int, m: int) -> list[tuple[int, int]]:
    edges = []
    for r in range(n):
        for c in range(m):
            v = r * m + c
            if c + 1 < m:
                edges.append((v, v + 1))
            if r + 1 < n:
                edges.append((v, v + m))
    return edges


def _uniform_weights(rng, num_vars, edges, w_max, a_max, cluster_boost):
    alpha = rng.uniform(0.0, a_max, size=num_vars)
    w = rng.uniform(0.0, w_max, size=len(edges))
    if cluster_boost:
        size = max(2, -(-num_vars // 3))
        cluster = set(rng.choice(num_vars, size=size, replace=False).tolist())
        alpha = np.array([a * 2 if i in cluster else a for i, a in enumerate(alpha)])
        w = np.array([x * 2 if (i in cluster and j in cluster) else x for (i, j), x in zip(edges, w)])
    return alpha, w


def gen_grid(n: int, m: int, w_max: float, a_max: float, seed: int, cluster_boost: bool = False) -> FactorGraph:
    """Square n x m grid of spins, weights uniform on [0, w_max] and [0, a_max].

    Variables are numbered row-major. Factors: n*m unary, then grid edges.
    With ``cluster_boost`` the weights inside a random third of the nodes are doubled.
    """
    if n < 2 or m < 2:
        raise ModelError("grid needs n, m >= 2")
    edges = grid_edges(n, m)
    alpha, w = _uniform_weights(make_rng(seed), n * m, edges, w_max, a_max, cluster_boost)
    return ising_model(n * m, alpha, edges, w)


def gen_fully_connected(n: int, w_max: float, a_max: float, seed: int, cluster_boost: bool = False) -> FactorGraph:
    if n < 3:
        raise ModelError("fully connected model needs n >= 3")
    edges = list(itertools.combinations(range(n), 2))
    alpha, w = _uniform_weights(make_rng(seed), n, edges, w_max, a_max, cluster_boost)
    return ising_model(n, alpha, edges, w)


def gen_loop(n: int, w_std: float, msg_std: float, seed: int) -> FactorGraph:
    """Single cycle of n spins with Gaussian log-domain couplings and fields.

    The fields play the role of fixed messages entering the loop from outside.
    """
    if n < 3:
        raise ModelError("loop needs n >= 3")
    rng = make_rng(seed)
    w = rng.normal(0.0, 1.0, size=n) * w_std
    alpha = rng.normal(0.0, 1.0, size=n) * msg_std
    edges = [(i, (i + 1) % n) for i in range(n)]
    return ising_model(n, alpha, edges, w)


# --- UAI-style text format --------------------------------------------------

def write_uai(fg: FactorGraph, path: str | Path) -> None:
    lines = ["MARKOV", str(fg.num_vars), " ".join(map(str, fg.cardinalities)), str(fg.num_factors)]
    for f in fg.factors:
        lines.append(" ".join(map(str, (len(f.scope),) + f.scope)))
    for f in fg.factors:
        lines.append("")
        lines.append(str(f.table.size))
        lines.append(" ".join(f"{v:.17g}" for v in f.table.ravel()))
    Path(path).write_text("\n".join(lines) + "\n")


def read_uai(path: str | Path) -> FactorGraph:
    tokens = Path(path).read_text().split()
    if not tokens or tokens[0].upper() != "MARKOV":
        raise ModelError("expected MARKOV header")
    pos = 1

    def take() -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise ModelError("unexpected end of model file")
        pos += 1
        return tokens[pos - 1]

    try:
        nvars = int(take())
        cards = [int(take()) for _ in range(nvars)]
        nfac = int(take())
        scopes = []
        for _ in range(nfac):
            k = int(take())
            scopes.append([int(take()) for _ in range(k)])
        tables = []
        for _ in range(nfac):
            count = int(take())
            tables.append([float(take()) for _ in range(count)])
    except ValueError as exc:
        raise ModelError(f"malformed model file: {exc}") from exc
    if pos != len(tokens):
        raise ModelError("trailing data in model file")
    return build_factor_graph(cards, list(zip(scopes, tables)))
