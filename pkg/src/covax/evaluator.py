"""Coverage objective: truncated Poisson-binomial evaluation machinery.

The expected-coverage value of a peptide subset is computed per genotype from
the distribution of its hit count (a Poisson binomial built by iterated
convolution), truncated at the redundancy threshold.  Tables cache these
distributions so that neighbouring subsets can be evaluated by updating only
the peptides that changed and only the genotype rows they actually bind.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple, Sequence

import numpy as np

from . import _kernels

if TYPE_CHECKING:
    from .instance import Instance, SimilarityGraph

# f1 sentinel for solutions violating the cardinality or pairwise constraints.
INFEASIBLE_F1 = -1.0


@dataclass(frozen=True, eq=False)
class Genome:
    """Fixed-length bit vector over the peptide universe."""

    bits: np.ndarray
    cardinality: int

    @staticmethod
    def from_bits(bits: np.ndarray | Sequence[int]) -> "Genome":
        arr = np.ascontiguousarray(bits, dtype=np.uint8)
        arr.setflags(write=False)
        return Genome(bits=arr, cardinality=int(arr.sum()))

    @staticmethod
    def empty(n: int) -> "Genome":
        return Genome.from_bits(np.zeros(n, dtype=np.uint8))

    @staticmethod
    def from_indices(n: int, indices: Sequence[int] | np.ndarray) -> "Genome":
        bits = np.zeros(n, dtype=np.uint8)
        bits[list(indices)] = 1
        return Genome.from_bits(bits)

    @property
    def n(self) -> int:
        return self.bits.size

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.bits).astype(np.int64)

    def key(self) -> bytes:
        return self.bits.tobytes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Genome):
            return NotImplemented
        return self.bits.size == other.bits.size and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"Genome(n={self.n}, size={self.cardinality})"


class ObjectivePair(NamedTuple):
    """(coverage or -1 sentinel, negated subset size)."""

    f1: float
    f2: float


class HitDistributionTable:
    """Per-genotype hit-count distributions for one peptide subset.

    ``probs[r, j]`` is the probability that exactly ``j`` of the member
    peptides bind genotype ``r`` (columns beyond the support width stay 0).
    ``row_exp`` caches each row's truncated expectation for ``threshold``.
    Tables follow a copy-on-write discipline: once attached to an individual
    they are never mutated, updates go through copies.
    """

    __slots__ = ("probs", "row_exp", "members", "threshold")

    def __init__(
        self,
        probs: np.ndarray,
        row_exp: np.ndarray,
        members: np.ndarray,
        threshold: int,
    ):
        self.probs = probs
        self.row_exp = row_exp
        self.members = members
        self.threshold = int(threshold)

    @staticmethod
    def empty(m_count: int, threshold: int, capacity: int = 1) -> "HitDistributionTable":
        probs = np.zeros((m_count, max(1, capacity)))
        probs[:, 0] = 1.0
        return HitDistributionTable(
            probs=probs,
            row_exp=np.zeros(m_count),
            members=np.zeros(0, dtype=np.int64),
            threshold=threshold,
        )

    @property
    def m_count(self) -> int:
        return self.probs.shape[0]

    @property
    def support_size(self) -> int:
        return self.members.size

    def contains(self, v: int) -> bool:
        pos = np.searchsorted(self.members, v)
        return bool(pos < self.members.size and self.members[pos] == v)

    def copy(self) -> "HitDistributionTable":
        return HitDistributionTable(
            probs=self.probs.copy(),
            row_exp=self.row_exp.copy(),
            members=self.members.copy(),
            threshold=self.threshold,
        )

    def distribution(self, r: int) -> np.ndarray:
        """Copy of genotype ``r``'s distribution over 0..support_size hits."""
        return self.probs[r, : self.support_size + 1].copy()

    def row_sum_error(self) -> float:
        return _kernels.row_sum_error(self.probs, self.support_size)

    def _ensure_capacity(self, width: int) -> None:
        if self.probs.shape[1] < width:
            grown = np.zeros((self.m_count, max(width, self.probs.shape[1] + 4)))
            grown[:, : self.probs.shape[1]] = self.probs
            self.probs = grown

    def __repr__(self) -> str:
        return (
            f"HitDistributionTable(m={self.m_count}, support={self.support_size}, "
            f"N={self.threshold})"
        )


def is_feasible(genome: Genome, k: int, graph: "SimilarityGraph") -> bool:
    """True iff size <= k and the selection is an independent set."""
    if genome.cardinality > k:
        return False
    bits = genome.bits
    for v in genome.indices():
        nbrs = graph.neighbors(int(v))
        if nbrs.size and bits[nbrs].any():
            return False
    return True


def _add_inplace(table: HitDistributionTable, inst: "Instance", v: int) -> None:
    support = table.support_size
    table._ensure_capacity(support + 2)
    rows, probs = inst.binding_column(v)
    _kernels.convolve_add(table.probs, support, rows, probs)
    table.members = np.insert(table.members, np.searchsorted(table.members, v), v)
    _kernels.update_row_exp(
        table.probs, table.support_size, rows, table.threshold, table.row_exp
    )


def _remove_inplace(table: HitDistributionTable, inst: "Instance", v: int) -> None:
    support = table.support_size
    rows, probs = inst.binding_column(v)
    bad = _kernels.convolve_remove(
        table.probs, support, rows, probs, _kernels.REMOVE_REBUILD_TOL
    )
    pos = np.searchsorted(table.members, v)
    table.members = np.delete(table.members, pos)
    if bad.any():
        # deconvolution drifted on these rows; rebuild them exactly
        _kernels.rebuild_rows(
            table.probs,
            rows[bad],
            table.members,
            inst.bind_indptr,
            inst.bind_geno,
            inst.bind_prob,
        )
    _kernels.update_row_exp(
        table.probs, table.support_size, rows, table.threshold, table.row_exp
    )


def eval_from_scratch(
    inst: "Instance", genome: Genome, threshold: int
) -> tuple[float, HitDistributionTable]:
    """Full evaluation by iterated convolution in ascending peptide order."""
    members = genome.indices()
    # headroom keeps later single-peptide adds from reallocating the table
    table = HitDistributionTable.empty(
        inst.m_count, threshold, capacity=members.size + 3
    )
    support = 0
    for v in members:
        rows, probs = inst.binding_column(int(v))
        _kernels.convolve_add(table.probs, support, rows, probs)
        support += 1
    table.members = members
    all_rows = np.arange(inst.m_count, dtype=np.int64)
    _kernels.update_row_exp(table.probs, support, all_rows, threshold, table.row_exp)
    value = _kernels.weighted_total(inst.weights, table.row_exp)
    return value, table


def apply_add(
    table: HitDistributionTable, inst: "Instance", v: int
) -> HitDistributionTable:
    """New table with peptide ``v`` convolved in; the input is untouched."""
    if table.contains(v):
        raise ValueError(f"peptide {v} already in table support")
    out = table.copy()
    _add_inplace(out, inst, v)
    return out


def apply_remove(
    table: HitDistributionTable, inst: "Instance", v: int
) -> HitDistributionTable:
    """New table with peptide ``v`` deconvolved out; the input is untouched."""
    if not table.contains(v):
        raise ValueError(f"peptide {v} not in table support")
    out = table.copy()
    _remove_inplace(out, inst, v)
    return out


def _clone_single_change(
    inst: "Instance", parent: HitDistributionTable, v: int, is_add: bool
) -> HitDistributionTable:
    # One streaming pass per genotype row (copy + update + expectation);
    # arithmetic is identical to copy-then-update, only memory traffic
    # differs.  The destination is written completely, so np.empty is safe.
    m = parent.m_count
    support = parent.support_size
    new_support = support + 1 if is_add else support - 1
    dst = np.empty((m, new_support + 3))
    exp_dst = np.empty(m)
    pvec = np.zeros(m)
    rows, probs = inst.binding_column(v)
    pvec[rows] = probs
    pos = np.searchsorted(parent.members, v)
    if is_add:
        _kernels.clone_add(
            parent.probs, dst, support, pvec, parent.threshold, parent.row_exp, exp_dst
        )
        members = np.insert(parent.members, pos, v)
        return HitDistributionTable(dst, exp_dst, members, parent.threshold)
    bad = _kernels.clone_remove(
        parent.probs,
        dst,
        support,
        pvec,
        parent.threshold,
        parent.row_exp,
        exp_dst,
        _kernels.REMOVE_REBUILD_TOL,
    )
    members = np.delete(parent.members, pos)
    if bad.any():
        bad_rows = np.flatnonzero(bad).astype(np.int64)
        _kernels.rebuild_rows(
            dst, bad_rows, members, inst.bind_indptr, inst.bind_geno, inst.bind_prob
        )
        _kernels.update_row_exp(dst, new_support, bad_rows, parent.threshold, exp_dst)
    return HitDistributionTable(dst, exp_dst, members, parent.threshold)


def eval_incremental(
    inst: "Instance",
    parent_table: HitDistributionTable,
    parent_genome: Genome,
    child_genome: Genome,
    threshold: int,
) -> tuple[float, HitDistributionTable]:
    """Evaluate ``child_genome`` by updating the parent's cached table.

    Adds are applied before removals, each touching only the genotype rows
    the peptide binds.  The result matches eval_from_scratch within 1e-9.
    """
    if threshold != parent_table.threshold:
        raise ValueError("threshold differs from the parent table's")
    if not np.array_equal(parent_genome.indices(), parent_table.members):
        raise ValueError("parent table does not correspond to parent genome")
    pbits, cbits = parent_genome.bits, child_genome.bits
    adds = np.flatnonzero((cbits == 1) & (pbits == 0))
    removes = np.flatnonzero((pbits == 1) & (cbits == 0))
    if adds.size == 0 and removes.size == 0:
        value = _kernels.weighted_total(inst.weights, parent_table.row_exp)
        return value, parent_table
    if adds.size + removes.size == 1:
        if adds.size:
            table = _clone_single_change(inst, parent_table, int(adds[0]), True)
        else:
            table = _clone_single_change(inst, parent_table, int(removes[0]), False)
    else:
        table = parent_table.copy()
        for v in adds:
            _add_inplace(table, inst, int(v))
        for v in removes:
            _remove_inplace(table, inst, int(v))
    value = _kernels.weighted_total(inst.weights, table.row_exp)
    return value, table


def bi_objective(
    inst: "Instance",
    genome: Genome,
    k: int,
    threshold: int,
    table_in: HitDistributionTable | None = None,
) -> tuple[ObjectivePair, HitDistributionTable | None]:
    """(f1, f2) of the bi-objective reformulation.

    Infeasible genomes short-circuit to the -1 sentinel without touching the
    coverage kernel; feasible ones are evaluated incrementally when a related
    table is supplied.
    """
    if not is_feasible(genome, k, inst.graph):
        return ObjectivePair(INFEASIBLE_F1, -float(genome.cardinality)), None
    if table_in is None:
        value, table = eval_from_scratch(inst, genome, threshold)
    else:
        parent = Genome.from_indices(genome.n, table_in.members)
        value, table = eval_incremental(inst, table_in, parent, genome, threshold)
    return ObjectivePair(value, -float(genome.cardinality)), table


def marginal_gain(
    inst: "Instance",
    table: HitDistributionTable,
    current_value: float,
    v: int,
    threshold: int,
) -> float:
    """f(S + v) - f(S), computed transiently without mutating ``table``."""
    if table.contains(v):
        raise ValueError(f"peptide {v} already in table support")
    if threshold != table.threshold:
        raise ValueError("threshold differs from the table's")
    rows, probs = inst.binding_column(v)
    return _kernels.add_gain(
        table.probs,
        table.row_exp,
        table.support_size,
        rows,
        probs,
        threshold,
        inst.weights,
    )
