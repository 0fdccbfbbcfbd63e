"""Command-line driver: generate models, run GBP, pursue regions, apply transforms.

Exit codes: 0 success, 1 usage, 2 validation failure, 3 infeasible oracle.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import transforms
from .exact import OracleInfeasible, exact_inference
from .experiments import loop_correlation, run_strategies, trace_rows, write_loop_csv, write_trace_csv
from .factor_graph import (
    GENERATOR_VERSION,
    ModelError,
    gen_fully_connected,
    gen_grid,
    gen_loop,
    read_uai,
    write_uai,
)
from .gbp import SCHEDULES, GBPOptions, node_marginals, rg_free_energy, run_gbp
from .pursuit import LOCAL_SCOPES, STRATEGIES, PursuitConfig
from .region_graph import (
    RegionGraphError,
    bethe_region_graph,
    check_validity,
    is_extendable,
    read_region_graph,
    write_region_graph,
)

log = logging.getLogger("regionpursuit")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_ORACLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- subcommands ---------------------------------------------------------------------

def cmd_generate(args) -> int:
    fam, dims = args.family, args.dims
    expected = {"grid": 2, "fc": 1, "loop": 1}[fam]
    if len(dims) != expected:
        raise UsageError(f"{fam} takes {expected} size argument(s)")
    if fam == "grid":
        fg = gen_grid(dims[0], dims[1], args.w_max, args.a_max, args.seed, args.cluster_boost)
        name = f"grid_{dims[0]}x{dims[1]}_s{args.seed}"
        params = {"n": dims[0], "m": dims[1], "w_max": args.w_max, "a_max": args.a_max, "cluster_boost": args.cluster_boost}
    elif fam == "fc":
        fg = gen_fully_connected(dims[0], args.w_max, args.a_max, args.seed, args.cluster_boost)
        name = f"fc_{dims[0]}_s{args.seed}"
        params = {"n": dims[0], "w_max": args.w_max, "a_max": args.a_max, "cluster_boost": args.cluster_boost}
    else:
        fg = gen_loop(dims[0], args.w_std, args.msg_std, args.seed)
        name = f"loop_{dims[0]}_s{args.seed}"
        params = {"n": dims[0], "w_std": args.w_std, "msg_std": args.msg_std}
    path = Path(args.output) if args.output else args.out_dir / f"{name}.uai"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_uai(fg, path)
    meta = {"family": fam, "seed": args.seed, "params": params, "generator_version": GENERATOR_VERSION}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(path)
    return EXIT_OK


def _load_rg(args, fg):
    if not args.rg:
        return bethe_region_graph(fg)
    rg = read_region_graph(args.rg)
    report = check_validity(rg, fg)
    if not report.ok:
        for v in report.violations:
            print(f"violation: {v}", file=sys.stderr)
        raise RegionGraphError("region graph is not valid for this model")
    return rg


def _gbp_opts(args) -> GBPOptions:
    return GBPOptions(
        damping=args.damping,
        tolerance=args.tolerance,
        max_iters=args.max_iters,
        schedule=args.schedule,
        seed=args.seed,
        damping_mode=args.damping_mode,
    )


def cmd_run_gbp(args) -> int:
    fg = read_uai(args.model)
    rg = _load_rg(args, fg)
    state, beliefs = run_gbp(rg, fg, _gbp_opts(args))
    marg = node_marginals(rg, beliefs, fg.num_vars)
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "beliefs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variable", "state", "belief"])
        for i, b in enumerate(marg):
            for s, p in enumerate(b):
                w.writerow([i, s, repr(float(p))])
    summary = {
        "free_energy": rg_free_energy(rg, fg, beliefs),
        "converged": state.converged,
        "iterations": state.iteration,
        "max_residual": state.max_residual,
        "clamp_count": state.clamp_count,
        "damping": state.damping,
    }
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(summary))
        w.writerow([repr(v) if isinstance(v, float) else v for v in summary.values()])
    with open(out / "diagnostics.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["iteration", "max_residual", "clamp_count"], lineterminator="\n")
        w.writeheader()
        w.writerows(state.diagnostics_rows())
    if not state.converged:
        log.warning("GBP did not converge (max residual %.3g)", state.max_residual)
    print(out / "beliefs.csv")
    return EXIT_OK


def cmd_pursue(args) -> int:
    fg = read_uai(args.model)
    strategies = [s.strip().upper() for s in args.strategies.split(",") if s.strip()]
    bad = [s for s in strategies if s not in STRATEGIES]
    if bad or not strategies:
        raise UsageError(f"unknown strategies {bad}; choose from {','.join(STRATEGIES)}")
    exact = None
    if not args.no_l1 or "OPT" in strategies:
        exact = exact_inference(fg)  # raises OracleInfeasible
    config = PursuitConfig(
        W=args.W, K=args.K, k=args.k, max_loop_len=args.max_loop_len, gbp_opts=_gbp_opts(args),
        strategy=strategies[0], seed=args.seed, local_scope=args.local_scope,
    )
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    runs = run_strategies(fg, strategies, config, exact, args.rand_draws)
    for s, traces in runs.items():
        path = out / f"trace_{s}.csv"
        write_trace_csv(path, trace_rows(traces))
        if s != "RAND" and traces[0].region_graph is not None:
            write_region_graph(traces[0].region_graph, out / f"rg_{s}.txt")
        print(path)
    return EXIT_OK


def cmd_loop_correlation(args) -> int:
    rows, summary = loop_correlation(
        n=args.n, trials=args.trials, w_std=tuple(args.w_std), msg_std=tuple(args.msg_std), seed=args.seed
    )
    args.out_dir.mkdir(parents=True, exist_ok=True)
    path = args.out_dir / "loop_correlation.csv"
    write_loop_csv(path, rows, summary)
    print(path)
    for k, v in summary.items():
        print(f"{k}: {v:.4f}")
    return EXIT_OK


def _part(d: dict) -> transforms.Part:
    return transforms.Part.of(d.get("vars", ()), d.get("factors", ()))


def apply_transform(rg, fg, spec: dict):
    op = spec.get("op")
    if op == "split":
        s = transforms.SplitSpec(int(spec["target"]), _part(spec["alpha1"]), _part(spec["alpha2"]), _part(spec.get("beta", {})))
        return transforms.split(rg, s, fg)
    if op == "merge":
        return transforms.merge(rg, int(spec["parent"]), int(spec["child"]))
    if op == "death":
        return transforms.death(rg, int(spec["region"]))
    if op == "link_birth":
        return transforms.link_birth(rg, int(spec["ancestor"]), int(spec["descendant"]))
    raise UsageError(f"unknown transform op {op!r}")


def cmd_transform(args) -> int:
    fg = read_uai(args.model)
    rg = read_region_graph(args.rg)
    try:
        spec = json.loads(Path(args.spec).read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"bad transform spec: {e}") from e
    new = apply_transform(rg, fg, spec)
    report = check_validity(new, fg)
    if not report.ok:
        raise RegionGraphError(f"transform produced an invalid region graph: {report.violations}")
    path = Path(args.output) if args.output else args.out_dir / "transformed.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_region_graph(new, path)
    print(path)
    return EXIT_OK


def cmd_check(args) -> int:
    fg = read_uai(args.model)
    rg = read_region_graph(args.rg) if args.rg else bethe_region_graph(fg)
    report = check_validity(rg, fg)
    ext, witness = is_extendable(rg, fg)
    print(f"regions: {len(rg.regions)}  edges: {len(rg.edges)}")
    print(f"C1 connected: {report.c1_ok}")
    print(f"C2 counting sums: {report.c2_ok}")
    for v in report.violations:
        print(f"  violation: {v}")
    print(f"extendable: {ext}" + (f" (fails at {witness[0]} {witness[1]})" if witness else ""))
    return EXIT_OK if report.ok else EXIT_INVALID


# --- parser --------------------------------------------------------------------------

def _add_gbp_flags(p):
    p.add_argument("--damping", type=float, default=0.5)
    p.add_argument("--damping-mode", choices=("sweep", "edge"), default="sweep")
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--schedule", choices=SCHEDULES, default=SCHEDULES[0])


def _common_flags(p, defaults: bool) -> None:
    # subcommands repeat the global flags without defaults so a value given
    # before the subcommand is not overwritten
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--out-dir", type=Path, default=d(Path(".")))
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    _common_flags(common, defaults=False)

    p = _Parser(prog="regionpursuit", description=__doc__.splitlines()[0])
    _common_flags(p, defaults=True)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="write a random model as UAI plus a JSON sidecar")
    g.add_argument("family", choices=("grid", "fc", "loop"))
    g.add_argument("dims", type=int, nargs="+")
    g.add_argument("--w-max", type=float, default=1.0)
    g.add_argument("--a-max", type=float, default=0.5)
    g.add_argument("--w-std", type=float, default=1.0)
    g.add_argument("--msg-std", type=float, default=1.0)
    g.add_argument("--cluster-boost", action="store_true")
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run-gbp", parents=[common], help="run GBP and write beliefs and diagnostics")
    r.add_argument("model")
    r.add_argument("--rg", help="region graph file; Bethe when omitted")
    _add_gbp_flags(r)
    r.set_defaults(func=cmd_run_gbp)

    q = sub.add_parser("pursue", parents=[common], help="run region pursuit strategies")
    q.add_argument("model")
    q.add_argument("--strategies", default="RP")
    q.add_argument("--W", type=int, default=2)
    q.add_argument("--K", type=int, default=4)
    q.add_argument("--k", type=int, default=1)
    q.add_argument("--max-loop-len", type=int, default=4)
    q.add_argument("--rand-draws", type=int, default=10)
    q.add_argument("--local-scope", choices=LOCAL_SCOPES, default=LOCAL_SCOPES[0])
    q.add_argument("--no-l1", action="store_true", help="skip the exact oracle (no L1 column)")
    _add_gbp_flags(q)
    q.set_defaults(func=cmd_pursue)

    c = sub.add_parser("loop-correlation", parents=[common], help="Bethe error correlations on random loops")
    c.add_argument("--n", type=int, default=5)
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--w-std", type=float, nargs=2, default=(0.0, 5.0), metavar=("LO", "HI"))
    c.add_argument("--msg-std", type=float, nargs=2, default=(1.0, 1.0), metavar=("LO", "HI"))
    c.set_defaults(func=cmd_loop_correlation)

    t = sub.add_parser("transform", parents=[common], help="apply a split/merge/death/link_birth JSON spec")
    t.add_argument("model")
    t.add_argument("rg")
    t.add_argument("spec")
    t.add_argument("-o", "--output")
    t.set_defaults(func=cmd_transform)

    k = sub.add_parser("check", parents=[common], help="validity and extendability report")
    k.add_argument("model")
    k.add_argument("--rg")
    k.set_defaults(func=cmd_check)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OracleInfeasible as e:
        print(f"error: oracle infeasible: {e}", file=sys.stderr)
        return EXIT_ORACLE
    except (ModelError, RegionGraphError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
