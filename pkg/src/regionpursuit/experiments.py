"""Batch experiments: loop error correlation and strategy comparisons on generated models."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exact import ExactResult, avg_l1_error, exact_brute_force, exact_entropy
from .factor_graph import FactorGraph, gen_loop, make_rng
from .gbp import GBPOptions, node_marginals, rg_entropy, rg_free_energy, run_gbp
from .pursuit import (
    CSV_FIELDS,
    PursuitConfig,
    PursuitTrace,
    add_outer_region,
    candidate_pool,
    enumerate_chordless_cycles,
    region_pursuit,
    score_candidates,
    select_regions,
    snapshot,
)
from .region_graph import bethe_region_graph


# --- loop correlation --------------------------------------------------------------

@dataclass
class LoopTrial:
    trial: int
    w_std: float
    msg_std: float
    seed: int
    exact_free_energy: float
    bethe_free_energy: float
    exact_entropy: float
    bethe_entropy: float
    free_energy_error: float
    entropy_error: float
    l1_error: float
    converged: bool


LOOP_FIELDS = list(LoopTrial.__dataclass_fields__) + ["corr_free_energy_l1", "corr_entropy_l1"]


def loop_trial(n: int, w_std: float, msg_std: float, seed: int, trial: int = 0, opts: GBPOptions | None = None) -> LoopTrial:
    """Bethe approximation of one random loop against brute force."""
    fg = gen_loop(n, w_std, msg_std, seed)
    exact = exact_brute_force(fg)
    rg = bethe_region_graph(fg)
    state, beliefs = run_gbp(rg, fg, opts)
    f_bethe = rg_free_energy(rg, fg, beliefs)
    h_bethe = rg_entropy(rg, fg, beliefs)
    f_exact = -exact.log_partition
    h_exact = exact_entropy(fg)
    return LoopTrial(
        trial=trial,
        w_std=w_std,
        msg_std=msg_std,
        seed=seed,
        exact_free_energy=f_exact,
        bethe_free_energy=f_bethe,
        exact_entropy=h_exact,
        bethe_entropy=h_bethe,
        free_energy_error=abs(f_bethe - f_exact),
        entropy_error=abs(h_bethe - h_exact),
        l1_error=avg_l1_error(node_marginals(rg, beliefs, fg.num_vars), exact),
        converged=state.converged,
    )


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Pearson correlation; NaN when undefined (fewer than two points or zero variance)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 2 or np.std(x) == 0 or np.std(y) == 0:
        return math.nan
    return float(np.corrcoef(x, y)[0, 1])


def loop_correlation(
    n: int = 5,
    trials: int = 100,
    w_std: tuple[float, float] = (0.0, 5.0),
    msg_std: tuple[float, float] = (1.0, 1.0),
    seed: int = 0,
    opts: GBPOptions | None = None,
) -> tuple[list[LoopTrial], dict[str, float]]:
    """Sample ``trials`` loops with the stds swept linearly across their ranges.

    Returns the per-trial rows and the correlations of the free-energy and
    entropy errors with the marginal error.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    ws = np.linspace(w_std[0], w_std[1], trials)
    ms = np.linspace(msg_std[0], msg_std[1], trials)
    seeds = make_rng(seed).integers(0, 2**31 - 1, size=trials)
    rows = [loop_trial(n, float(w), float(m), int(s), t, opts) for t, (w, m, s) in enumerate(zip(ws, ms, seeds))]
    l1 = [r.l1_error for r in rows]
    summary = {
        "corr_free_energy_l1": pearson([r.free_energy_error for r in rows], l1),
        "corr_entropy_l1": pearson([r.entropy_error for r in rows], l1),
    }
    return rows, summary


def write_loop_csv(path: str | Path, rows: Iterable[LoopTrial], summary: dict[str, float]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOOP_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in asdict(r).items()})
        w.writerow({"trial": "summary", **{k: _fmt(v) for k, v in summary.items()}})


# --- strategy comparisons ------------------------------------------------------------

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def run_strategies(
    fg: FactorGraph,
    strategies: Sequence[str],
    config: PursuitConfig,
    exact: ExactResult | None = None,
    rand_draws: int = 10,
) -> dict[str, list[PursuitTrace]]:
    """One trace per strategy; RAND gets ``rand_draws`` traces seeded from ``config.seed``."""
    out: dict[str, list[PursuitTrace]] = {}
    for s in strategies:
        if s == "RAND":
            seeds = [config.seed + d for d in range(rand_draws)]
        else:
            seeds = [config.seed]
        out[s] = [region_pursuit(fg, _with(config, strategy=s, seed=sd), exact) for sd in seeds]
    return out


def _with(config: PursuitConfig, **changes) -> PursuitConfig:
    fields = {k: getattr(config, k) for k in config.__dataclass_fields__}
    fields.update(changes)
    return PursuitConfig(**fields)


def mean_errors(traces: Sequence[PursuitTrace]) -> list[float]:
    """Per-iteration mean L1 error over traces, truncated to the shortest trace."""
    n = min(len(t.records) for t in traces)
    return [float(np.mean([t.records[i].l1_error for t in traces])) for i in range(n)]


def _mean(values: Sequence):
    """Mean that returns the common value untouched when all draws agree (shared baseline row)."""
    if all(v == values[0] for v in values):
        return values[0]
    return float(np.mean(values))


def trace_rows(traces: Sequence[PursuitTrace]) -> list[dict]:
    """CSV rows for one strategy; several traces are averaged per iteration."""
    if len(traces) == 1:
        return [{k: _fmt(v) for k, v in r.csv_row().items()} for r in traces[0].records]
    n = min(len(t.records) for t in traces)
    rows = []
    for i in range(n):
        recs = [t.records[i] for t in traces]
        rows.append({
            "iteration": i,
            "strategy": recs[0].strategy,
            "chosen_region": "",
            "score": "",
            "free_energy": _fmt(_mean([r.free_energy for r in recs])),
            "l1_error": _fmt(_mean([r.l1_error for r in recs])),
            "gbp_iters": _fmt(_mean([r.gbp_iters for r in recs])),
            "converged": all(r.converged for r in recs),
        })
    return rows


def write_trace_csv(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def selection_agreement(fg: FactorGraph, config: PursuitConfig, iterations: int, other: str = "RP_PLUS") -> tuple[int, int]:
    """How often RP and ``other`` pick the same region from the same region graph.

    Follows RP's own trajectory; at each step both strategies score the same
    pool from the same converged state. Returns (agreements, comparisons).
    """
    opts = config.gbp_opts
    rg = bethe_region_graph(fg)
    state, beliefs = run_gbp(rg, fg, opts)
    snap = snapshot(rg, fg, state, beliefs)
    cycles = enumerate_chordless_cycles(fg, config.max_loop_len)
    agree = total = 0
    for _ in range(iterations):
        pool = candidate_pool(fg, snap.rg, config, cycles)
        if not pool:
            break
        rp = select_regions(pool, score_candidates("RP", snap, fg, pool, opts, local_scope=config.local_scope), "RP", 1)
        if not rp:
            break
        alt = select_regions(pool, score_candidates(other, snap, fg, pool, opts), other, 1)
        agree += rp == alt
        total += 1
        rg = add_outer_region(snap.rg, rp[0], fg).rg
        state, beliefs = run_gbp(rg, fg, opts, init=snap.state)
        snap = snapshot(rg, fg, state, beliefs)
    return agree, total
