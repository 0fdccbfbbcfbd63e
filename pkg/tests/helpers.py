"""Model builders and belief utilities shared by the tests."""
import itertools

import networkx as nx
import numpy as np

from regionpursuit.exact import log_joint_table
from regionpursuit.factor_graph import build_factor_graph, ising_model, make_rng
from regionpursuit.region_graph import check_validity


def random_tree_model(n, seed, w_scale=1.5, a_scale=1.0):
    """Ising model on a random labelled tree with couplings of both signs."""
    rng = make_rng(seed)
    g = nx.random_labeled_tree(n, seed=int(rng.integers(2**31)))
    edges = sorted(tuple(sorted(e)) for e in g.edges)
    w = rng.normal(0.0, w_scale, size=len(edges))
    a = rng.normal(0.0, a_scale, size=n)
    return ising_model(n, a, edges, w)


def random_model(n, seed, p_edge=0.4, max_card=3, triples=1):
    """Random discrete model: unaries, pairwise factors on a random graph and a few triple factors."""
    rng = make_rng(seed)
    cards = [int(rng.integers(2, max_card + 1)) for _ in range(n)]
    factors = [((i,), rng.uniform(0.2, 2.0, size=cards[i])) for i in range(n)]
    for i, j in itertools.combinations(range(n), 2):
        if rng.random() < p_edge:
            factors.append(((i, j), np.exp(rng.normal(0, 1, size=cards[i] * cards[j]))))
    for _ in range(triples if n >= 3 else 0):
        scope = sorted(rng.choice(n, size=3, replace=False).tolist())
        size = int(np.prod([cards[v] for v in scope]))
        factors.append((scope, np.exp(rng.normal(0, 0.7, size=size))))
    return build_factor_graph(cards, factors)


def joint(fg):
    lj = log_joint_table(fg)
    p = np.exp(lj - lj.max())
    return p / p.sum()


def region_marginals(rg, p):
    """Belief set of marginals of a joint ``p`` (one axis per variable)."""
    n = p.ndim
    out = {}
    for r, reg in rg.regions.items():
        axes = tuple(a for a in range(n) if a not in reg.vars)
        out[r] = p.sum(axis=axes)
    return out


def assert_counting_sums(rg, fg):
    """Integer check that every variable and factor has counting-number sum 1."""
    for i in range(fg.num_vars):
        assert sum(rg.counting[r] for r, reg in rg.regions.items() if i in reg.vars) == 1, f"variable {i}"
    for a in range(fg.num_factors):
        assert sum(rg.counting[r] for r, reg in rg.regions.items() if a in reg.factors) == 1, f"factor {a}"
    assert all(isinstance(c, int) for c in rg.counting.values())
    assert check_validity(rg, fg).ok


def mix_beliefs(beliefs, target, size):
    """Move each belief toward ``target`` so the largest log change is about ``size``.

    Both sets are consistent marginal families, so every convex mixture is too.
    """
    worst = max(float(np.max(np.abs(target[r] / beliefs[r] - 1.0))) for r in beliefs)
    eps = size / worst
    return {r: (1.0 - eps) * beliefs[r] + eps * target[r] for r in beliefs}
