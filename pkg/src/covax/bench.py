"""Run orchestration: algorithm specs, result/trace files, benchmark grids.

A benchmark runs the grid (algorithm x k x seed), writing one result JSON and
one anytime-trace CSV per cell plus a summary CSV with per-(algorithm, k)
statistics and the difference to the greedy baseline.  Cells are independent
deterministic runs and may execute in parallel (COVAX_THREADS caps workers).
"""

from __future__ import annotations

import json
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluator import is_feasible
from .greedy import optivax_p
from .instance import Instance, RunParams, load_instance
from .moea import Trace, TraceRecord, run_gsemo, run_mu_plus_one_ea, run_nsga2

DEFAULT_N_RULE = "0.25k"
DEFAULT_BUDGET_RULE = "20kn"

THREADS_ENV = "COVAX_THREADS"


@dataclass(frozen=True)
class AlgorithmSpec:
    """Parsed algorithm selector for solve/bench."""

    kind: str  # greedy | gsemo | nsga2 | mu1ea
    warm: bool = True
    use_repair: bool = True
    pop_size: int | None = None
    mu: int | None = None

    @property
    def label(self) -> str:
        if self.kind == "greedy":
            return "greedy"
        if self.kind == "gsemo":
            suffix = ("w" if self.warm else "") + ("r" if self.use_repair else "")
            return f"gsemo-{suffix}" if suffix else "gsemo"
        if self.kind == "nsga2":
            return "nsga2-wr" if self.pop_size is None else f"nsga2-wr[pop={self.pop_size}]"
        return "mu1ea-wr" if self.mu is None else f"mu1ea-wr[mu={self.mu}]"


def parse_algorithm_spec(text: str) -> AlgorithmSpec:
    """Parse specs like greedy, gsemo-wr, gsemo[warm,repair], nsga2[pop=64]."""
    raw = text.strip().lower()
    m = re.fullmatch(r"([a-z0-9-]+)(?:\[([^\]]*)\])?", raw)
    if not m:
        raise ValueError(f"unknown algorithm spec {text!r}")
    name, argtext = m.group(1), m.group(2)
    args = [a.strip() for a in argtext.split(",")] if argtext else []

    if name == "greedy":
        if args:
            raise ValueError("greedy takes no options")
        return AlgorithmSpec("greedy")

    if name in ("gsemo", "gsemo-r", "gsemo-w", "gsemo-wr"):
        warm = "-" in name and "w" in name.split("-")[-1]
        use_repair = "-" in name and "r" in name.split("-")[-1]
        for a in args:
            if a == "warm":
                warm = True
            elif a == "repair":
                use_repair = True
            else:
                raise ValueError(f"unknown gsemo option {a!r}")
        return AlgorithmSpec("gsemo", warm=warm, use_repair=use_repair)

    if name in ("nsga2", "nsga2-wr"):
        pop = None
        for a in args:
            m2 = re.fullmatch(r"(?:pop=)?(\d+)", a)
            if not m2:
                raise ValueError(f"unknown nsga2 option {a!r}")
            pop = int(m2.group(1))
        return AlgorithmSpec("nsga2", pop_size=pop)

    if name in ("mu1ea", "mu1ea-wr"):
        mu = None
        for a in args:
            m2 = re.fullmatch(r"(?:mu=)?(\d+)", a)
            if not m2:
                raise ValueError(f"unknown mu1ea option {a!r}")
            mu = int(m2.group(1))
        return AlgorithmSpec("mu1ea", mu=mu)

    raise ValueError(f"unknown algorithm name {name!r}")


def resolve_threshold(rule: str | int, k: int) -> int:
    """Redundancy threshold: explicit integer or '<coef>k' (floored).

    Values above k are clamped to k (the cap is inert beyond the subset
    size), so reported N always equals the effective N.
    """
    if isinstance(rule, int):
        value = rule
    else:
        m = re.fullmatch(r"(\d*\.?\d+)\s*k", str(rule).strip().lower())
        if not m:
            raise ValueError(
                f"bad threshold rule {rule!r} (want an integer or e.g. '0.25k')"
            )
        value = int(np.floor(float(m.group(1)) * k))
    if value < 0:
        raise ValueError("threshold must be non-negative")
    return min(value, k)


def resolve_budget(rule: str | int, k: int, n: int) -> int:
    """Evaluation budget: explicit integer or '<coef>kn'."""
    if isinstance(rule, int):
        return rule
    m = re.fullmatch(r"(\d*\.?\d+)\s*kn", str(rule).strip().lower())
    if not m:
        raise ValueError(f"bad budget rule {rule!r} (want an integer or e.g. '20kn')")
    return int(float(m.group(1)) * k * n)


def greedy_trace(inst: Instance, k: int, threshold: int, seed: int) -> Trace:
    """Run the greedy baseline and wrap it into the common trace shape."""
    records: list[TraceRecord] = []

    def on_round(evals: int, value: float, genome) -> None:
        records.append(TraceRecord(evals, value, genome.cardinality))

    genome, value, evals_used = optivax_p(inst, k, threshold, on_round=on_round)
    if not records or records[-1].evals != evals_used:
        records.append(TraceRecord(evals_used, value, genome.cardinality))
    return Trace(
        algorithm="greedy",
        seed=seed,
        config={"algorithm": "greedy", "k": k, "N": threshold, "seed": seed},
        warm_start_f=None,
        warm_start_greedy_evals=None,
        records=records,
        evals_used=evals_used,
        best_f=value,
        best_size=genome.cardinality,
        best_genome=genome,
    )


def run_algorithm(
    inst: Instance,
    spec: AlgorithmSpec,
    k: int,
    threshold: int,
    seed: int,
    eval_budget: int,
) -> Trace:
    """Dispatch one deterministic run and return its trace."""
    if spec.kind == "greedy":
        return greedy_trace(inst, k, threshold, seed)
    params = RunParams(k=k, N=threshold, seed=seed, eval_budget=eval_budget)
    if spec.kind == "gsemo":
        trace, _ = run_gsemo(inst, params, warm=spec.warm, use_repair=spec.use_repair)
        return trace
    if spec.kind == "nsga2":
        trace, _ = run_nsga2(inst, params, pop_size=spec.pop_size)
        return trace
    if spec.kind == "mu1ea":
        return run_mu_plus_one_ea(inst, params, mu=spec.mu)
    raise ValueError(f"unknown algorithm kind {spec.kind!r}")


# ---------------------------------------------------------------------------
# result / trace files
# ---------------------------------------------------------------------------

def _atomic_write(path: Path, data: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(data, encoding="utf-8")
    os.replace(tmp, path)


def trace_to_result(
    inst: Instance,
    instance_path: str,
    spec: AlgorithmSpec,
    trace: Trace,
    k: int,
    threshold: int,
    seed: int,
    eval_budget: int,
) -> dict:
    """Canonical result record; deterministic for identical runs."""
    ids = sorted(inst.peptide_ids[int(i)] for i in trace.best_genome.indices())
    result = {
        "instance": instance_path,
        "algorithm": spec.label,
        "k": k,
        "N": threshold,
        "seed": seed,
        "eval_budget": eval_budget,
        "evals_used": trace.evals_used,
        "f": trace.best_f,
        "size": trace.best_size,
        "solution": ids,
        "feasible": bool(is_feasible(trace.best_genome, k, inst.graph)),
    }
    if trace.warm_start_f is not None:
        result["warm_start_f"] = trace.warm_start_f
        result["warm_start_greedy_evals"] = trace.warm_start_greedy_evals
    return result


def write_result_json(result: dict, path: Path) -> None:
    _atomic_write(path, json.dumps(result, indent=2) + "\n")


def write_trace_csv(trace: Trace, path: Path) -> None:
    lines = ["evals,best_f,best_size"]
    lines += [f"{r.evals},{r.best_f!r},{r.best_size}" for r in trace.records]
    _atomic_write(path, "\n".join(lines) + "\n")


def file_stem(spec: AlgorithmSpec, k: int, threshold: int, seed: int) -> str:
    label = re.sub(r"[^\w.-]+", "-", spec.label).strip("-")
    return f"{label}_k{k}_N{threshold}_s{seed}"


def solve_to_files(
    inst: Instance,
    instance_path: str,
    spec: AlgorithmSpec,
    k: int,
    threshold: int,
    seed: int,
    eval_budget: int,
    out_dir: Path,
) -> tuple[Trace, Path, Path]:
    """Run one cell and write its result JSON and trace CSV atomically."""
    trace = run_algorithm(inst, spec, k, threshold, seed, eval_budget)
    result = trace_to_result(
        inst, instance_path, spec, trace, k, threshold, seed, eval_budget
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = file_stem(spec, k, threshold, seed)
    json_path = out_dir / f"{stem}.json"
    csv_path = out_dir / f"{stem}.csv"
    write_result_json(result, json_path)
    write_trace_csv(trace, csv_path)
    return trace, json_path, csv_path


# ---------------------------------------------------------------------------
# benchmark grid
# ---------------------------------------------------------------------------

@dataclass
class BenchConfig:
    instance: Path
    algorithms: list[str]
    ks: list[int]
    n_rule: str | int
    seeds: list[int]
    budget_rule: str | int
    out_dir: Path

    def __post_init__(self):
        if not self.algorithms:
            raise ValueError("config needs at least one algorithm")
        if not self.ks:
            raise ValueError("config needs at least one k")
        if not self.seeds:
            raise ValueError("config needs at least one seed")
        for text in self.algorithms:
            parse_algorithm_spec(text)


def load_bench_config(path: str | Path) -> BenchConfig:
    """Read a JSON bench config; errors carry file and location context."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValueError(f"{path}: missing config file") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a JSON object")

    def need(key, types):
        if key not in raw:
            raise ValueError(f"{path}: missing key {key!r}")
        val = raw[key]
        if not isinstance(val, types):
            raise ValueError(f"{path}: key {key!r} has wrong type")
        return val

    base = path.parent
    instance = base / str(need("instance", str))
    algorithms = [str(a) for a in need("algorithms", list)]
    ks = [int(k) for k in need("ks", list)]
    seeds = [int(s) for s in need("seeds", list)]
    n_rule = raw.get("N", DEFAULT_N_RULE)
    if not isinstance(n_rule, (str, int)):
        raise ValueError(f"{path}: key 'N' has wrong type")
    budget_rule = raw.get("eval_budget", DEFAULT_BUDGET_RULE)
    if not isinstance(budget_rule, (str, int)):
        raise ValueError(f"{path}: key 'eval_budget' has wrong type")
    out_dir = base / str(raw.get("out", "bench_out"))
    try:
        return BenchConfig(
            instance=instance,
            algorithms=algorithms,
            ks=ks,
            n_rule=n_rule,
            seeds=seeds,
            budget_rule=budget_rule,
            out_dir=out_dir,
        )
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def worker_count() -> int:
    """Worker cap from COVAX_THREADS (0 or unset means machine default)."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw or raw == "0":
        return os.cpu_count() or 1
    value = int(raw)
    if value < 0:
        raise ValueError(f"{THREADS_ENV} must be non-negative")
    return value


_WORKER_INSTANCES: dict[str, Instance] = {}


def _cached_instance(path: str) -> Instance:
    inst = _WORKER_INSTANCES.get(path)
    if inst is None:
        inst = load_instance(path)
        _WORKER_INSTANCES[path] = inst
    return inst


def _bench_cell(args: tuple[str, str, int, int, int, int, str]) -> tuple[str, int, int, float]:
    instance_path, spec_text, k, threshold, seed, budget, out_dir = args
    inst = _cached_instance(instance_path)
    spec = parse_algorithm_spec(spec_text)
    trace, _, _ = solve_to_files(
        inst, instance_path, spec, k, threshold, seed, budget, Path(out_dir)
    )
    return spec.label, k, seed, trace.best_f


@dataclass
class SummaryRow:
    algorithm: str
    k: int
    threshold: int
    seeds: int
    mean_f: float
    std_f: float
    delta_vs_greedy: float


def write_summary_csv(rows: list[SummaryRow], path: Path) -> None:
    lines = ["algorithm,k,N,seeds,mean_f,std_f,delta_vs_greedy"]
    lines += [
        f"{r.algorithm},{r.k},{r.threshold},{r.seeds},{r.mean_f!r},{r.std_f!r},{r.delta_vs_greedy!r}"
        for r in rows
    ]
    _atomic_write(path, "\n".join(lines) + "\n")


def run_bench(config: BenchConfig) -> tuple[list[SummaryRow], Path]:
    """Run the full grid and write per-cell files plus summary.csv."""
    inst = load_instance(config.instance)
    specs = [parse_algorithm_spec(text) for text in config.algorithms]
    instance_path = str(config.instance)

    cells = []
    for spec, text in zip(specs, config.algorithms):
        for k in config.ks:
            threshold = resolve_threshold(config.n_rule, k)
            budget = resolve_budget(config.budget_rule, k, inst.n)
            for seed in config.seeds:
                cells.append(
                    (instance_path, text, k, threshold, seed, budget, str(config.out_dir))
                )

    workers = min(worker_count(), len(cells))
    finals: dict[tuple[str, int, int], float] = {}
    if workers <= 1:
        results = map(_bench_cell, cells)
        for label, k, seed, best_f in results:
            finals[(label, k, seed)] = best_f
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for label, k, seed, best_f in pool.map(_bench_cell, cells):
                finals[(label, k, seed)] = best_f

    # greedy baseline per k for the delta column (greedy is deterministic,
    # so per-seed values coincide; the mean is computed identically for the
    # baseline and for listed algorithms, making greedy's own delta exactly 0)
    def mean_over_seeds(values: list[float]) -> float:
        return float(np.mean(np.asarray(values)))

    baseline: dict[int, float] = {}
    for k in config.ks:
        threshold = resolve_threshold(config.n_rule, k)
        key_values = [
            finals.get(("greedy", k, seed)) for seed in config.seeds
        ]
        if all(v is not None for v in key_values):
            baseline[k] = mean_over_seeds([float(v) for v in key_values])
        else:
            _, value, _ = optivax_p(inst, k, threshold)
            baseline[k] = mean_over_seeds([value] * len(config.seeds))

    rows: list[SummaryRow] = []
    for spec in specs:
        for k in config.ks:
            threshold = resolve_threshold(config.n_rule, k)
            values = [finals[(spec.label, k, seed)] for seed in config.seeds]
            mean_f = mean_over_seeds(values)
            std_f = float(np.std(np.asarray(values), ddof=1)) if len(values) > 1 else 0.0
            rows.append(
                SummaryRow(
                    algorithm=spec.label,
                    k=k,
                    threshold=threshold,
                    seeds=len(values),
                    mean_f=mean_f,
                    std_f=std_f,
                    delta_vs_greedy=mean_f - baseline[k],
                )
            )
    config.out_dir.mkdir(parents=True, exist_ok=True)
    summary_path = config.out_dir / "summary.csv"
    write_summary_csv(rows, summary_path)
    return rows, summary_path
