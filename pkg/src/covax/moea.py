"""Bi-objective evolutionary engines with warm-start and repair.

All engines maximize (coverage-or-sentinel, negated size) and return the best
feasible member of their final population together with an anytime trace.
Randomness is split into independent named streams (warm-start, parent
selection, mutation, crossover, repair) derived from one master seed, so
toggling a mechanism does not perturb the draws of the others.
"""

from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, NamedTuple, Sequence

import numpy as np

from .evaluator import (
    Genome,
    HitDistributionTable,
    ObjectivePair,
    bi_objective,
    eval_incremental,
    is_feasible,
)
from .greedy import optivax_p

if TYPE_CHECKING:
    from .instance import Instance, RunParams, SimilarityGraph

CROSSOVER_RATE = 0.9


class Dominance(enum.Enum):
    """Four-way objective-vector comparison.

    WEAKLY_DOMINATES means weak but not strict domination, which for a full
    comparison is exactly objective equality.
    """

    STRICTLY_DOMINATES = "strict"
    WEAKLY_DOMINATES = "weak"
    DOMINATED = "dominated"
    INCOMPARABLE = "incomparable"


def dominates(a: ObjectivePair, b: ObjectivePair) -> Dominance:
    a_ge = a.f1 >= b.f1 and a.f2 >= b.f2
    b_ge = b.f1 >= a.f1 and b.f2 >= a.f2
    if a_ge and b_ge:
        return Dominance.WEAKLY_DOMINATES
    if a_ge:
        return Dominance.STRICTLY_DOMINATES
    if b_ge:
        return Dominance.DOMINATED
    return Dominance.INCOMPARABLE


@dataclass(eq=False)
class Individual:
    """Population member: genome, objectives, cached table (feasible only)."""

    genome: Genome
    objectives: ObjectivePair
    table: HitDistributionTable | None
    birth_eval: int = 0

    @property
    def feasible(self) -> bool:
        return self.objectives.f1 >= 0.0

    @property
    def size(self) -> int:
        return self.genome.cardinality


class TraceRecord(NamedTuple):
    evals: int
    best_f: float
    best_size: int


@dataclass
class Trace:
    """Anytime record of one run: best-feasible-f whenever it improved."""

    algorithm: str
    seed: int
    config: dict
    warm_start_f: float | None
    warm_start_greedy_evals: int | None
    records: list[TraceRecord]
    evals_used: int
    best_f: float
    best_size: int
    best_genome: Genome


# ---------------------------------------------------------------------------
# variation operators
# ---------------------------------------------------------------------------

def bitwise_mutation(genome: Genome, rng: np.random.Generator) -> Genome:
    """Flip each bit independently with probability 1/n."""
    n = genome.n
    flips = rng.random(n) < (1.0 / n)
    return Genome.from_bits(genome.bits ^ flips)


def one_point_crossover(
    a: Genome, b: Genome, rng: np.random.Generator, rate: float = CROSSOVER_RATE
) -> tuple[Genome, Genome]:
    """Exchange suffixes after a uniform cut point, with the given rate."""
    if a.n != b.n:
        raise ValueError("crossover requires equal genome lengths")
    n = a.n
    if rng.random() < rate and n >= 2:
        cut = int(rng.integers(1, n))
        c1 = np.concatenate([a.bits[:cut], b.bits[cut:]])
        c2 = np.concatenate([b.bits[:cut], a.bits[cut:]])
        return Genome.from_bits(c1), Genome.from_bits(c2)
    return Genome.from_bits(a.bits.copy()), Genome.from_bits(b.bits.copy())


def _repair_bits(
    parent_bits: np.ndarray,
    bits: np.ndarray,
    graph: "SimilarityGraph",
    rng: np.random.Generator,
) -> None:
    """In-place conflict resolution scan (parent assumed pairwise-feasible).

    For each bit newly set relative to the parent (ascending order), one
    uniformly random member of its conflict neighbourhood is kept and the
    rest are cleared.  Already-feasible offspring pass through unchanged.
    """
    new_idx = np.flatnonzero((bits == 1) & (parent_bits == 0))
    for i in new_idx:
        if not bits[i]:
            continue  # cleared by an earlier conflict
        nbrs = graph.neighbors(int(i))
        if nbrs.size == 0:
            continue
        conflicts = nbrs[bits[nbrs] == 1]
        if conflicts.size == 0:
            continue
        group = np.append(conflicts, i)
        keep = group[int(rng.integers(group.size))]
        bits[group] = 0
        bits[keep] = 1


def repair(
    parent: Genome,
    offspring: Genome,
    graph: "SimilarityGraph",
    rng: np.random.Generator,
) -> Genome:
    """Resolve pairwise-constraint violations introduced relative to parent.

    The cardinality constraint is deliberately not repaired.  Raises if the
    parent itself violates the pairwise constraints.
    """
    if parent.n != offspring.n:
        raise ValueError("repair requires equal genome lengths")
    pbits = parent.bits
    if graph.edge_count:
        e = graph.edges
        if np.any(pbits[e[:, 0]] & pbits[e[:, 1]]):
            raise ValueError("repair parent violates the pairwise constraints")
    bits = offspring.bits.copy()
    _repair_bits(pbits, bits, graph, rng)
    return Genome.from_bits(bits)


# ---------------------------------------------------------------------------
# warm start
# ---------------------------------------------------------------------------

def random_feasible_solution(
    inst: "Instance", size: int, rng: np.random.Generator, restarts: int = 50
) -> Genome:
    """Uniformly grown independent set of the requested size.

    Peptides are drawn uniformly among those not banned by current picks.
    If the build gets stuck it restarts (up to ``restarts`` attempts) and
    finally settles for the largest size achieved.
    """
    n = inst.n
    best_bits = np.zeros(n, dtype=np.uint8)
    best_count = -1
    for _ in range(restarts):
        bits = np.zeros(n, dtype=np.uint8)
        banned = np.zeros(n, dtype=bool)
        count = 0
        for _ in range(size):
            allowed = np.flatnonzero((bits == 0) & ~banned)
            if allowed.size == 0:
                break
            v = int(allowed[rng.integers(allowed.size)])
            bits[v] = 1
            banned[inst.graph.neighbors(v)] = True
            count += 1
        if count > best_count:
            best_bits, best_count = bits, count
        if count == size:
            break
    return Genome.from_bits(best_bits)


class WarmStartResult(NamedTuple):
    members: list[Individual]  # evaluation order: greedy first, then sizes ascending
    greedy_value: float
    greedy_evals: int


def warm_start(
    inst: "Instance",
    k: int,
    threshold: int,
    copies_per_size: int,
    rng: np.random.Generator,
) -> WarmStartResult:
    """Greedy output plus random feasible solutions of each size below k.

    Members are returned in evaluation order with objectives and tables
    attached; dominance filtering (for archive-based engines) is left to the
    caller's population update rule.
    """
    if copies_per_size < 1:
        raise ValueError("copies_per_size must be at least 1")
    greedy_genome, greedy_value, greedy_evals = optivax_p(inst, k, threshold)
    members = []
    obj, table = bi_objective(inst, greedy_genome, k, threshold)
    members.append(Individual(greedy_genome, obj, table))
    for size in range(k):
        for _ in range(copies_per_size):
            g = random_feasible_solution(inst, size, rng)
            obj, table = bi_objective(inst, g, k, threshold)
            members.append(Individual(g, obj, table))
    return WarmStartResult(members, greedy_value, greedy_evals)


# ---------------------------------------------------------------------------
# population machinery
# ---------------------------------------------------------------------------

class GsemoArchive:
    """Mutually incomparable feasible solutions, at most one per size."""

    def __init__(self):
        self.members: list[Individual] = []

    def try_insert(self, ind: Individual) -> bool:
        """Insert unless strictly dominated; evict weakly dominated members."""
        obj = ind.objectives
        for z in self.members:
            if dominates(z.objectives, obj) is Dominance.STRICTLY_DOMINATES:
                return False
        self.members = [
            z
            for z in self.members
            if dominates(obj, z.objectives)
            not in (Dominance.STRICTLY_DOMINATES, Dominance.WEAKLY_DOMINATES)
        ]
        self.members.append(ind)
        return True

    def check_invariants(self, k: int) -> None:
        """Raise AssertionError unless incomparable, feasible, <= k+1 members."""
        if len(self.members) > k + 1:
            raise AssertionError("archive larger than k+1")
        for ind in self.members:
            if not ind.feasible:
                raise AssertionError("infeasible member in archive")
        for i, a in enumerate(self.members):
            for b in self.members[i + 1 :]:
                if dominates(a.objectives, b.objectives) is not Dominance.INCOMPARABLE:
                    raise AssertionError("comparable pair in archive")


def non_dominated_sort(pairs: Sequence[ObjectivePair]) -> list[list[int]]:
    """Fast non-dominated sorting; returns fronts as index lists."""
    count = len(pairs)
    if count == 0:
        return []
    f1 = np.array([p[0] for p in pairs])
    f2 = np.array([p[1] for p in pairs])
    ge1 = f1[:, None] >= f1[None, :]
    ge2 = f2[:, None] >= f2[None, :]
    strict = (f1[:, None] > f1[None, :]) | (f2[:, None] > f2[None, :])
    dom = ge1 & ge2 & strict  # dom[p, q]: p strictly dominates q
    dominators = dom.sum(axis=0)
    alive = np.ones(count, dtype=bool)
    fronts: list[list[int]] = []
    while alive.any():
        current = np.flatnonzero(alive & (dominators == 0))
        fronts.append([int(i) for i in current])
        alive[current] = False
        dominators = dominators - dom[current].sum(axis=0)
    return fronts


def crowding_distance(front: Sequence[ObjectivePair]) -> np.ndarray:
    """Crowding distances; boundary members per objective get +inf."""
    count = len(front)
    if count == 0:
        raise ValueError("front must be non-empty")
    dist = np.zeros(count)
    if count <= 2:
        dist[:] = np.inf
        return dist
    values = np.array([[p[0] for p in front], [p[1] for p in front]])
    for obj in values:
        order = np.argsort(obj, kind="stable")
        dist[order[0]] = np.inf
        dist[order[-1]] = np.inf
        span = obj[order[-1]] - obj[order[0]]
        if span <= 0:
            continue
        gaps = (obj[order[2:]] - obj[order[:-2]]) / span
        dist[order[1:-1]] += gaps  # inf boundaries stay inf
    return dist


@dataclass
class Nsga2Population:
    members: list[Individual]
    ranks: np.ndarray
    crowding: np.ndarray


def _environmental_selection(members: list[Individual], pop_size: int) -> Nsga2Population:
    pairs = [m.objectives for m in members]
    fronts = non_dominated_sort(pairs)
    chosen: list[int] = []
    ranks: list[int] = []
    crowd: list[float] = []
    for rank, front in enumerate(fronts):
        front_crowd = crowding_distance([pairs[i] for i in front])
        if len(chosen) + len(front) <= pop_size:
            chosen.extend(front)
            ranks.extend([rank] * len(front))
            crowd.extend(front_crowd.tolist())
        else:
            room = pop_size - len(chosen)
            order = np.argsort(-front_crowd, kind="stable")[:room]
            chosen.extend(front[i] for i in order)
            ranks.extend([rank] * room)
            crowd.extend(front_crowd[order].tolist())
        if len(chosen) >= pop_size:
            break
    return Nsga2Population(
        members=[members[i] for i in chosen],
        ranks=np.array(ranks, dtype=np.int64),
        crowding=np.array(crowd),
    )


def _tournament(pop: Nsga2Population, rng: np.random.Generator) -> Individual:
    i = int(rng.integers(len(pop.members)))
    j = int(rng.integers(len(pop.members)))
    if (pop.ranks[j], -pop.crowding[j]) < (pop.ranks[i], -pop.crowding[i]):
        return pop.members[j]
    return pop.members[i]


def best_feasible(members: Sequence[Individual]) -> Individual:
    """Feasible maximizer of f1; ties to smaller size, then lexicographic."""
    candidates = [m for m in members if m.feasible]
    if not candidates:
        raise ValueError("no feasible member present")
    return min(candidates, key=lambda m: (-m.objectives.f1, m.size, m.genome.key()))


# ---------------------------------------------------------------------------
# run bookkeeping
# ---------------------------------------------------------------------------

class _RunRecorder:
    """Counts feasible-coverage evaluations and logs best-f improvements."""

    def __init__(self, budget: int):
        self.budget = budget
        self.evals = 0
        self.best_f = -np.inf
        self.best_size = 0
        self.records: list[TraceRecord] = []

    @property
    def exhausted(self) -> bool:
        return self.evals >= self.budget

    def charge(self, obj: ObjectivePair) -> None:
        self.evals += 1
        if obj.f1 > self.best_f:
            self.best_f = obj.f1
            self.best_size = -int(obj.f2)
            self.records.append(TraceRecord(self.evals, self.best_f, self.best_size))

    def finalize(self) -> None:
        if self.records and self.records[-1].evals != self.evals:
            self.records.append(TraceRecord(self.evals, self.best_f, self.best_size))


def _rng_streams(seed: int):
    children = np.random.SeedSequence(seed).spawn(5)
    return tuple(np.random.default_rng(c) for c in children)


def _mutate_and_repair(
    parent: Genome,
    graph: "SimilarityGraph",
    mutation_rng: np.random.Generator,
    repair_rng: np.random.Generator,
    use_repair: bool,
) -> Genome:
    n = parent.n
    flips = mutation_rng.random(n) < (1.0 / n)
    bits = parent.bits ^ flips
    if use_repair:
        _repair_bits(parent.bits, bits, graph, repair_rng)
    return Genome.from_bits(bits)


def _gsemo_label(warm: bool, use_repair: bool) -> str:
    suffix = ("w" if warm else "") + ("r" if use_repair else "")
    return f"gsemo-{suffix}" if suffix else "gsemo"


# ---------------------------------------------------------------------------
# engines
# ---------------------------------------------------------------------------

def run_gsemo(
    inst: "Instance",
    params: "RunParams",
    warm: bool = True,
    use_repair: bool = True,
    max_iterations: int | None = None,
    iteration_hook: Callable[[GsemoArchive], None] | None = None,
) -> tuple[Trace, GsemoArchive]:
    """Archive-based global simple evolutionary multi-objective optimizer.

    Each iteration mutates a uniformly chosen archive member, optionally
    repairs it against its parent, and applies the archive update rule
    (insert unless strictly dominated, evict weakly dominated).  Runs until
    ``eval_budget`` feasible-coverage evaluations are consumed, or
    ``max_iterations`` parent selections when given.
    """
    k, threshold, budget = params.k, params.N, params.eval_budget
    if k > inst.n:
        raise ValueError(f"k={k} exceeds peptide count n={inst.n}")
    warm_rng, parent_rng, mutation_rng, _, repair_rng = _rng_streams(params.seed)
    rec = _RunRecorder(budget)
    archive = GsemoArchive()

    warm_f: float | None = None
    greedy_evals: int | None = None
    if warm:
        ws = warm_start(inst, k, threshold, 1, warm_rng)
        warm_f, greedy_evals = ws.greedy_value, ws.greedy_evals
        init_members = ws.members
    else:
        obj, table = bi_objective(inst, Genome.empty(inst.n), k, threshold)
        init_members = [Individual(Genome.empty(inst.n), obj, table)]
    for ind in init_members:
        rec.charge(ind.objectives)
        ind.birth_eval = rec.evals
        archive.try_insert(ind)

    graph = inst.graph
    iterations = 0
    while not rec.exhausted and (max_iterations is None or iterations < max_iterations):
        iterations += 1
        parent = archive.members[int(parent_rng.integers(len(archive.members)))]
        child = _mutate_and_repair(
            parent.genome, graph, mutation_rng, repair_rng, use_repair
        )
        if not is_feasible(child, k, graph):
            continue  # sentinel objective, costs no budget
        value, table = eval_incremental(
            inst, parent.table, parent.genome, child, threshold
        )
        ind = Individual(child, ObjectivePair(value, -float(child.cardinality)), table)
        rec.charge(ind.objectives)
        ind.birth_eval = rec.evals
        archive.try_insert(ind)
        if iteration_hook is not None:
            iteration_hook(archive)

    rec.finalize()
    best = best_feasible(archive.members)
    label = _gsemo_label(warm, use_repair)
    trace = Trace(
        algorithm=label,
        seed=params.seed,
        config={
            "algorithm": label,
            "k": k,
            "N": threshold,
            "seed": params.seed,
            "eval_budget": budget,
            "warm_start": warm,
            "repair": use_repair,
        },
        warm_start_f=warm_f,
        warm_start_greedy_evals=greedy_evals,
        records=rec.records,
        evals_used=rec.evals,
        best_f=best.objectives.f1,
        best_size=best.size,
        best_genome=best.genome,
    )
    return trace, archive


def _evaluate_nsga2_offspring(
    inst: "Instance",
    genome: Genome,
    k: int,
    threshold: int,
    parents: tuple[Individual, Individual],
    rec: _RunRecorder,
) -> Individual:
    if not is_feasible(genome, k, inst.graph):
        obj = ObjectivePair(-1.0, -float(genome.cardinality))
        return Individual(genome, obj, None, birth_eval=rec.evals)
    # incremental from the nearer parent, unless the delta is too large
    base: Individual | None = None
    base_dist = 0
    for cand in parents:
        if cand.table is None:
            continue
        dist = int(np.count_nonzero(genome.bits ^ cand.genome.bits))
        if base is None or dist < base_dist:
            base, base_dist = cand, dist
    if base is not None and base_dist <= max(1, k // 2):
        value, table = eval_incremental(
            inst, base.table, base.genome, genome, threshold
        )
        obj = ObjectivePair(value, -float(genome.cardinality))
    else:
        obj, table = bi_objective(inst, genome, k, threshold)
    rec.charge(obj)
    return Individual(genome, obj, table, birth_eval=rec.evals)


def run_nsga2(
    inst: "Instance",
    params: "RunParams",
    pop_size: int | None = None,
) -> tuple[Trace, Nsga2Population]:
    """Generational NSGA-II with warm start, crossover, mutation and repair.

    Default population size is 2(k+1); the approximation guarantee of the
    warm start needs at least 4(k+1).
    """
    k, threshold, budget = params.k, params.N, params.eval_budget
    if k > inst.n:
        raise ValueError(f"k={k} exceeds peptide count n={inst.n}")
    if pop_size is None:
        pop_size = 2 * (k + 1)
    if pop_size < 4 or pop_size % 2:
        raise ValueError("pop_size must be even and at least 4")
    warm_rng, parent_rng, mutation_rng, crossover_rng, repair_rng = _rng_streams(
        params.seed
    )
    rec = _RunRecorder(budget)

    ws = warm_start(inst, k, threshold, 2, warm_rng)
    members = ws.members
    while len(members) < pop_size:
        size = int(warm_rng.integers(0, k + 1))
        g = random_feasible_solution(inst, size, warm_rng)
        obj, table = bi_objective(inst, g, k, threshold)
        members.append(Individual(g, obj, table))
    for ind in members:
        rec.charge(ind.objectives)
        ind.birth_eval = rec.evals
    pop = _environmental_selection(members, pop_size)

    graph = inst.graph
    while not rec.exhausted:
        offspring: list[Individual] = []
        exhausted_mid_gen = False
        for _ in range(pop_size // 2):
            pa = _tournament(pop, parent_rng)
            pb = _tournament(pop, parent_rng)
            c1, c2 = one_point_crossover(pa.genome, pb.genome, crossover_rng)
            for base, child in ((pa, c1), (pb, c2)):
                if rec.exhausted:
                    exhausted_mid_gen = True
                    break
                flips = mutation_rng.random(child.n) < (1.0 / child.n)
                bits = child.bits ^ flips
                _repair_bits(base.genome.bits, bits, graph, repair_rng)
                offspring.append(
                    _evaluate_nsga2_offspring(
                        inst, Genome.from_bits(bits), k, threshold, (pa, pb), rec
                    )
                )
            if exhausted_mid_gen:
                break
        pop = _environmental_selection(pop.members + offspring, pop_size)

    rec.finalize()
    best = best_feasible(pop.members)
    trace = Trace(
        algorithm="nsga2-wr",
        seed=params.seed,
        config={
            "algorithm": "nsga2-wr",
            "k": k,
            "N": threshold,
            "seed": params.seed,
            "eval_budget": budget,
            "pop_size": pop_size,
            "crossover_rate": CROSSOVER_RATE,
        },
        warm_start_f=ws.greedy_value,
        warm_start_greedy_evals=ws.greedy_evals,
        records=rec.records,
        evals_used=rec.evals,
        best_f=best.objectives.f1,
        best_size=best.size,
        best_genome=best.genome,
    )
    return trace, pop


def run_mu_plus_one_ea(
    inst: "Instance",
    params: "RunParams",
    mu: int | None = None,
) -> Trace:
    """(mu+1)-EA ablation: GSEMO's pipeline with single-objective survival.

    The population keeps the mu best members by coverage value (ties to
    smaller size, then lexicographic genome).
    """
    k, threshold, budget = params.k, params.N, params.eval_budget
    if k > inst.n:
        raise ValueError(f"k={k} exceeds peptide count n={inst.n}")
    if mu is None:
        mu = k + 1
    if mu < 1:
        raise ValueError("mu must be at least 1")
    warm_rng, parent_rng, mutation_rng, _, repair_rng = _rng_streams(params.seed)
    rec = _RunRecorder(budget)

    ws = warm_start(inst, k, threshold, 1, warm_rng)
    members = ws.members
    while len(members) < mu:
        size = int(warm_rng.integers(0, k + 1))
        g = random_feasible_solution(inst, size, warm_rng)
        obj, table = bi_objective(inst, g, k, threshold)
        members.append(Individual(g, obj, table))
    for ind in members:
        rec.charge(ind.objectives)
        ind.birth_eval = rec.evals

    def survival_key(m: Individual):
        return (-m.objectives.f1, m.size, m.genome.key())

    # population kept sorted by survival key; offspring join via bisect
    pop = sorted(members, key=survival_key)[:mu]
    keys = [survival_key(m) for m in pop]

    graph = inst.graph
    while not rec.exhausted:
        parent = pop[int(parent_rng.integers(len(pop)))]
        child = _mutate_and_repair(parent.genome, graph, mutation_rng, repair_rng, True)
        if not is_feasible(child, k, graph):
            continue
        value, table = eval_incremental(
            inst, parent.table, parent.genome, child, threshold
        )
        ind = Individual(child, ObjectivePair(value, -float(child.cardinality)), table)
        rec.charge(ind.objectives)
        ind.birth_eval = rec.evals
        key = survival_key(ind)
        pos = bisect.bisect_right(keys, key)
        if pos < mu or len(pop) < mu:
            pop.insert(pos, ind)
            keys.insert(pos, key)
            if len(pop) > mu:
                pop.pop()
                keys.pop()

    rec.finalize()
    best = best_feasible(pop)
    return Trace(
        algorithm="mu1ea-wr",
        seed=params.seed,
        config={
            "algorithm": "mu1ea-wr",
            "k": k,
            "N": threshold,
            "seed": params.seed,
            "eval_budget": budget,
            "mu": mu,
        },
        warm_start_f=ws.greedy_value,
        warm_start_greedy_evals=ws.greedy_evals,
        records=rec.records,
        evals_used=rec.evals,
        best_f=best.objectives.f1,
        best_size=best.size,
        best_genome=best.genome,
    )
