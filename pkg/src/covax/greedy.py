"""Greedy baseline: iterative best-marginal-gain selection under both
constraint families (cardinality and pairwise dissimilarity)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np

from .evaluator import Genome, HitDistributionTable, eval_from_scratch, marginal_gain

if TYPE_CHECKING:
    from .instance import Instance

# Gains at or below this are treated as zero: padding the solution with
# useless peptides would only shrink the feasible neighbourhood.
GAIN_EPS = 1e-15


@dataclass
class GreedyState:
    """Snapshot of the selection loop (selected and banned are disjoint)."""

    selected: Genome
    banned: np.ndarray
    table: HitDistributionTable
    value: float


def optivax_p(
    inst: "Instance",
    k: int,
    threshold: int,
    on_round: Callable[[int, float, Genome], None] | None = None,
) -> tuple[Genome, float, int]:
    """Best-marginal-gain greedy; returns (genome, value, evaluations used).

    Each round scans every non-banned candidate (ties break to the lowest
    peptide index), adds the maximizer and bans its graph neighbours; stops
    at k picks, when candidates run out, or when the best gain is ~zero.
    Reported values come from ascending-order from-scratch evaluations, so
    they are bit-identical to any later re-evaluation of the same genome.
    ``on_round`` is called after each accepted pick with the cumulative
    evaluation count, current value and current genome.
    """
    n = inst.n
    if not (0 <= k <= n):
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    selected = np.zeros(n, dtype=np.uint8)
    value, table = eval_from_scratch(inst, Genome.empty(n), threshold)
    state = GreedyState(
        selected=Genome.empty(n),
        banned=np.zeros(n, dtype=bool),
        table=table,
        value=value,
    )
    evals_used = 0

    for _ in range(k):
        best_v = -1
        best_gain = GAIN_EPS
        for v in range(n):
            if selected[v] or state.banned[v]:
                continue
            gain = marginal_gain(inst, state.table, state.value, v, threshold)
            evals_used += 1
            if gain > best_gain:
                best_gain = gain
                best_v = v
        if best_v < 0:
            break
        selected[best_v] = 1
        state.selected = Genome.from_bits(selected.copy())
        state.banned[inst.graph.neighbors(best_v)] = True
        state.value, state.table = eval_from_scratch(inst, state.selected, threshold)
        if on_round is not None:
            on_round(evals_used, state.value, state.selected)

    return state.selected, state.value, evals_used
