"""Command-line surface: generate, solve, bench, validate, build-graph.

Exit codes: 0 success, 1 validation/feasibility failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from .instance import (
    EDGES_FILE,
    PEPTIDES_FILE,
    GenParams,
    InstanceError,
    build_similarity_graph,
    generate_adversarial,
    generate_synthetic,
    load_instance,
    load_peptides,
    max_degree,
    save_instance,
)
from .oracle import audit_properties

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covax",
        description="Constrained peptide-vaccine subset selection solvers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic or adversarial instance")
    gen.add_argument("--out", required=True, help="output instance directory")
    gen.add_argument("--adversarial", type=int, metavar="N",
                     help="emit the greedy-trap construction on N peptides")
    gen.add_argument("--n", type=int, help="peptide count")
    gen.add_argument("--m", type=int, help="genotype count")
    gen.add_argument("--edge-density", type=float, default=0.05)
    gen.add_argument("--binding-sparsity", type=float, default=0.2)
    gen.add_argument("--prob-lo", type=float, default=0.05)
    gen.add_argument("--prob-hi", type=float, default=0.95)
    gen.add_argument("--weight-law", choices=["uniform", "dirichlet"], default="uniform")
    gen.add_argument("--seed", type=int, default=0)

    solve = sub.add_parser("solve", help="run one algorithm on an instance")
    solve.add_argument("--instance", required=True)
    solve.add_argument("--algorithm", required=True,
                       help="greedy | gsemo[-w|-r|-wr] | nsga2-wr[pop=N] | mu1ea-wr[mu=N]")
    solve.add_argument("--k", type=int, required=True)
    solve.add_argument("--threshold", default=bench_mod.DEFAULT_N_RULE,
                       help="redundancy threshold N: integer or rule like 0.25k")
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--budget", default=bench_mod.DEFAULT_BUDGET_RULE,
                       help="evaluation budget: integer or rule like 20kn")
    solve.add_argument("--out", default=".", help="directory for result/trace files")

    bench = sub.add_parser("bench", help="run a benchmark grid from a JSON config")
    bench.add_argument("--config", required=True)

    val = sub.add_parser("validate", help="check instance invariants and audits")
    val.add_argument("instance")
    val.add_argument("--samples", type=int, default=100)

    graph = sub.add_parser("build-graph", help="build edges.tsv from sequences")
    graph.add_argument("instance")
    graph.add_argument("--threshold", type=int, default=6,
                       help="maximum edit distance considered similar")

    return parser


def _cmd_generate(args) -> int:
    if args.adversarial is not None:
        if args.n is not None or args.m is not None:
            raise UsageError("--adversarial excludes --n/--m")
        if args.adversarial < 4:
            raise UsageError("--adversarial needs at least 4 peptides")
        inst = generate_adversarial(args.adversarial)
    else:
        if args.n is None or args.m is None:
            raise UsageError("synthetic generation needs --n and --m")
        try:
            params = GenParams(
                n=args.n,
                m_count=args.m,
                edge_density=args.edge_density,
                binding_sparsity=args.binding_sparsity,
                prob_lo=args.prob_lo,
                prob_hi=args.prob_hi,
                weight_law=args.weight_law,
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        inst = generate_synthetic(params, args.seed)
    save_instance(inst, args.out)
    print(
        f"n={inst.n} m_count={inst.m_count} "
        f"edges={inst.graph.edge_count} max_degree={max_degree(inst)}"
    )
    return EXIT_OK


def _cmd_solve(args) -> int:
    try:
        spec = bench_mod.parse_algorithm_spec(args.algorithm)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    inst = load_instance(args.instance)
    if not (1 <= args.k <= inst.n):
        raise UsageError(f"k must lie in 1..{inst.n}, got {args.k}")
    try:
        threshold_rule = int(args.threshold)
    except ValueError:
        threshold_rule = args.threshold
    try:
        budget_rule = int(args.budget)
    except ValueError:
        budget_rule = args.budget
    threshold = bench_mod.resolve_threshold(threshold_rule, args.k)
    budget = bench_mod.resolve_budget(budget_rule, args.k, inst.n)

    start = time.perf_counter()
    trace, json_path, csv_path = bench_mod.solve_to_files(
        inst, args.instance, spec, args.k, threshold, args.seed, budget, Path(args.out)
    )
    wall_ms = (time.perf_counter() - start) * 1000.0
    print(trace.best_f)
    print(
        f"algorithm={spec.label} evals={trace.evals_used} wall_ms={wall_ms:.1f} "
        f"result={json_path} trace={csv_path}",
        file=sys.stderr,
    )
    return EXIT_OK


def _cmd_bench(args) -> int:
    config = bench_mod.load_bench_config(args.config)
    rows, summary_path = bench_mod.run_bench(config)
    for row in rows:
        print(
            f"{row.algorithm} k={row.k} N={row.threshold} seeds={row.seeds} "
            f"mean_f={row.mean_f:.6f} delta_vs_greedy={row.delta_vs_greedy:+.6f}"
        )
    print(f"summary written to {summary_path}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    inst = load_instance(args.instance)
    inst.validate()
    report = audit_properties(inst, args.samples, np.random.default_rng(0))
    problems = []
    if report.monotonicity_violations:
        problems.append(
            f"{report.monotonicity_violations} monotonicity violations "
            f"(min diff {report.min_monotone_diff:.3e})"
        )
    if report.submodularity_violations:
        problems.append(
            f"{report.submodularity_violations} submodularity violations "
            f"(min gap {report.min_submodular_gap:.3e})"
        )
    if problems:
        for p in problems:
            print(f"{args.instance}: {p}", file=sys.stderr)
        return EXIT_FAILURE
    print(
        f"OK n={inst.n} m_count={inst.m_count} edges={inst.graph.edge_count} "
        f"audit_samples={report.samples}"
    )
    return EXIT_OK


def _cmd_build_graph(args) -> int:
    root = Path(args.instance)
    ids, sequences = load_peptides(root / PEPTIDES_FILE)
    if sequences is None:
        raise InstanceError(f"{root / PEPTIDES_FILE}: missing sequences column")
    graph = build_similarity_graph(sequences, args.threshold)
    rows = sorted(
        tuple(sorted((ids[int(a)], ids[int(b)]))) for a, b in graph.edges
    )
    with open(root / EDGES_FILE, "w", encoding="utf-8") as fh:
        fh.write("# peptide_id\tpeptide_id\n")
        for a, b in rows:
            fh.write(f"{a}\t{b}\n")
    print(f"wrote {len(rows)} edges (threshold {args.threshold})")
    return EXIT_OK


_HANDLERS = {
    "generate": _cmd_generate,
    "solve": _cmd_solve,
    "bench": _cmd_bench,
    "validate": _cmd_validate,
    "build-graph": _cmd_build_graph,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"covax {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InstanceError, ValueError, OSError) as exc:
        print(f"covax {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
