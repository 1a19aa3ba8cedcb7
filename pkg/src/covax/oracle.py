"""Brute-force ground truth for small instances.

``enumerate_expectation`` evaluates the coverage objective directly from its
definition by enumerating all 2^|S| binding outcomes, with no convolution
shortcut, so it can audit the production evaluator.  ``brute_force_opt``
exhaustively searches the feasible subsets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .evaluator import Genome, eval_from_scratch

if TYPE_CHECKING:
    from .instance import Instance

MAX_BRUTE_FORCE_N = 24
MAX_ENUM_SUBSET = 15


@dataclass
class OracleReport:
    optimum_value: float
    optimum_genome: Genome
    candidates_examined: int


def brute_force_opt(inst: "Instance", k: int, threshold: int) -> OracleReport:
    """Exhaustive optimum over independent subsets of size <= k.

    Enumerates by branch-and-prune (extending only with higher-indexed,
    non-adjacent vertices); ties break toward smaller then lexicographically
    smaller genomes.
    """
    n = inst.n
    if n > MAX_BRUTE_FORCE_N:
        raise ValueError(f"brute force limited to n <= {MAX_BRUTE_FORCE_N}, got {n}")
    graph = inst.graph

    best_value = 0.0
    best_genome = Genome.empty(n)
    best_key = (0, best_genome.key())
    examined = 1  # the empty set

    selection: list[int] = []

    def consider(sel: list[int]) -> None:
        nonlocal best_value, best_genome, best_key, examined
        genome = Genome.from_indices(n, sel)
        value, _ = eval_from_scratch(inst, genome, threshold)
        examined += 1
        key = (len(sel), genome.key())
        if value > best_value or (value == best_value and key < best_key):
            best_value = value
            best_genome = genome
            best_key = key

    def extend(start: int, blocked: np.ndarray) -> None:
        if len(selection) == k:
            return
        for v in range(start, n):
            if blocked[v]:
                continue
            selection.append(v)
            consider(selection)
            child_blocked = blocked.copy()
            child_blocked[graph.neighbors(v)] = True
            extend(v + 1, child_blocked)
            selection.pop()

    if k > 0:
        extend(0, np.zeros(n, dtype=bool))
    return OracleReport(best_value, best_genome, examined)


def enumerate_expectation(
    inst: "Instance", subset: Genome | Sequence[int] | np.ndarray, threshold: int
) -> float:
    """Direct expectation by full outcome enumeration, no convolution.

    For each genotype, walks all 2^|S| display outcomes, weighting each by
    its probability and crediting min(hit count, threshold).
    """
    if isinstance(subset, Genome):
        members = subset.indices()
    else:
        members = np.asarray(sorted(int(v) for v in subset), dtype=np.int64)
    s = members.size
    if s > MAX_ENUM_SUBSET:
        raise ValueError(f"enumeration limited to |S| <= {MAX_ENUM_SUBSET}, got {s}")

    # hit counts per outcome index, bit b of the index <-> member b displayed
    counts = np.zeros(1, dtype=np.int64)
    for _ in range(s):
        counts = np.concatenate([counts, counts + 1])
    credit = np.minimum(counts, threshold).astype(np.float64)

    total = 0.0
    for m in range(inst.m_count):
        outcome_probs = np.ones(1)
        for v in members:
            p = inst.binding_prob(int(v), m)
            outcome_probs = np.concatenate(
                [outcome_probs * (1.0 - p), outcome_probs * p]
            )
        total += float(inst.weights[m]) * float(outcome_probs @ credit)
    return total


@dataclass
class AuditReport:
    samples: int
    monotonicity_violations: int
    submodularity_violations: int
    min_monotone_diff: float
    min_submodular_gap: float


def audit_properties(
    inst: "Instance", samples: int, rng: np.random.Generator
) -> AuditReport:
    """Spot-check monotonicity and diminishing returns on random triples.

    Each sample draws X subset of Y, v outside Y and a random threshold,
    then checks both marginal gains are non-negative (within 1e-12) and the
    gain on X is at least the gain on Y (within 1e-9).  Expected violation
    count: zero (both are proven properties of the objective).
    """
    n = inst.n
    mono_viol = 0
    sub_viol = 0
    min_diff = np.inf
    min_gap = np.inf
    for _ in range(samples):
        v = int(rng.integers(n))
        others = np.array([i for i in range(n) if i != v])
        y_size = int(rng.integers(0, min(n - 1, 12) + 1))
        y_members = rng.choice(others, size=y_size, replace=False)
        x_size = int(rng.integers(0, y_size + 1))
        x_members = rng.permutation(y_members)[:x_size]
        threshold = int(rng.integers(0, y_size + 2))

        f_x, _ = eval_from_scratch(inst, Genome.from_indices(n, x_members), threshold)
        f_xv, _ = eval_from_scratch(
            inst, Genome.from_indices(n, list(x_members) + [v]), threshold
        )
        f_y, _ = eval_from_scratch(inst, Genome.from_indices(n, y_members), threshold)
        f_yv, _ = eval_from_scratch(
            inst, Genome.from_indices(n, list(y_members) + [v]), threshold
        )
        gain_x = f_xv - f_x
        gain_y = f_yv - f_y
        min_diff = min(min_diff, gain_x, gain_y)
        if gain_x < -1e-12 or gain_y < -1e-12:
            mono_viol += 1
        gap = gain_x - gain_y
        min_gap = min(min_gap, gap)
        if gap < -1e-9:
            sub_viol += 1
    return AuditReport(
        samples=samples,
        monotonicity_violations=mono_viol,
        submodularity_violations=sub_viol,
        min_monotone_diff=float(min_diff),
        min_submodular_gap=float(min_gap),
    )
