"""Problem instances: data model, TSV ingestion, validation and generators.

An instance bundles the peptide universe, the weighted genotype set, the
sparse peptide-genotype binding probabilities and the pairwise-similarity
conflict graph.  Instances are immutable after construction and safe to share
across workers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# Removal of a peptide divides by (1 - p), so probabilities must stay
# strictly below 1; programmatic construction may clamp to this ceiling.
PROB_CEIL = 1.0 - 1e-9

PEPTIDES_FILE = "peptides.tsv"
GENOTYPES_FILE = "genotypes.tsv"
BINDINGS_FILE = "bindings.tsv"
EDGES_FILE = "edges.tsv"


class InstanceError(ValueError):
    """Malformed instance data; the message carries file/line context."""


def format_decimal(x: float) -> str:
    """Canonical decimal text: 12 significant digits, no exponent in [1e-4, 1)."""
    return f"{x:.12g}"


def quantize(x: float) -> float:
    """Round to the canonical decimal text so save/load round-trips exactly."""
    return float(format_decimal(x))


class SimilarityGraph:
    """Undirected conflict graph over peptide indices, no self-loops."""

    __slots__ = ("n", "edges", "_indptr", "_indices")

    def __init__(self, n: int, edges: Iterable[tuple[int, int]]):
        self.n = int(n)
        seen = set()
        for a, b in edges:
            a, b = int(a), int(b)
            if a == b:
                raise InstanceError(f"self-loop on vertex {a}")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise InstanceError(f"edge ({a}, {b}) out of range for n={self.n}")
            seen.add((min(a, b), max(a, b)))
        self.edges = np.array(sorted(seen), dtype=np.int64).reshape(-1, 2)
        deg = np.zeros(self.n, dtype=np.int64)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        self._indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(deg, out=self._indptr[1:])
        self._indices = np.zeros(len(self.edges) * 2, dtype=np.int64)
        cursor = self._indptr[:-1].copy()
        for a, b in self.edges:
            self._indices[cursor[a]] = b
            cursor[a] += 1
            self._indices[cursor[b]] = a
            cursor[b] += 1
        # neighbor lists sorted for binary search and reproducible iteration
        for v in range(self.n):
            lo, hi = self._indptr[v], self._indptr[v + 1]
            self._indices[lo:hi] = np.sort(self._indices[lo:hi])

    def neighbors(self, v: int) -> np.ndarray:
        return self._indices[self._indptr[v] : self._indptr[v + 1]]

    def degree(self, v: int) -> int:
        return int(self._indptr[v + 1] - self._indptr[v])

    def max_degree(self) -> int:
        if self.n == 0:
            return 0
        return int(np.max(self._indptr[1:] - self._indptr[:-1]))

    def has_edge(self, a: int, b: int) -> bool:
        nbrs = self.neighbors(a)
        pos = np.searchsorted(nbrs, b)
        return bool(pos < nbrs.size and nbrs[pos] == b)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SimilarityGraph):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.edges, other.edges)

    def __repr__(self) -> str:
        return f"SimilarityGraph(n={self.n}, edges={self.edge_count})"


@dataclass(eq=False)
class Instance:
    """Immutable peptide vaccine design instance.

    ``bind_pep``/``bind_geno``/``bind_prob`` hold the sparse binding triplets
    sorted by (peptide, genotype); missing pairs mean probability exactly 0.
    """

    peptide_ids: list[str]
    genotype_ids: list[str]
    weights: np.ndarray
    bind_pep: np.ndarray
    bind_geno: np.ndarray
    bind_prob: np.ndarray
    graph: SimilarityGraph
    peptide_sequences: list[str] | None = None
    bind_indptr: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bind_pep = np.asarray(self.bind_pep, dtype=np.int64)
        self.bind_geno = np.asarray(self.bind_geno, dtype=np.int64)
        self.bind_prob = np.asarray(self.bind_prob, dtype=np.float64)
        order = np.lexsort((self.bind_geno, self.bind_pep))
        self.bind_pep = self.bind_pep[order]
        self.bind_geno = self.bind_geno[order]
        self.bind_prob = self.bind_prob[order]
        self.bind_indptr = np.searchsorted(
            self.bind_pep, np.arange(self.n + 1), side="left"
        ).astype(np.int64)
        self.validate()
        for arr in (self.weights, self.bind_pep, self.bind_geno, self.bind_prob):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return len(self.peptide_ids)

    @property
    def m_count(self) -> int:
        return len(self.genotype_ids)

    def validate(self) -> None:
        """Check every structural invariant; raise InstanceError on failure."""
        if len(set(self.peptide_ids)) != self.n:
            raise InstanceError("duplicate peptide id")
        if len(set(self.genotype_ids)) != self.m_count:
            raise InstanceError("duplicate genotype id")
        if self.m_count == 0:
            raise InstanceError("instance has no genotypes")
        if self.weights.shape != (self.m_count,):
            raise InstanceError("weights length does not match genotype count")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise InstanceError("weights must be finite and non-negative")
        if float(self.weights.sum()) <= 0.0:
            raise InstanceError("weights must sum to a positive value")
        if self.peptide_sequences is not None and len(self.peptide_sequences) != self.n:
            raise InstanceError("sequence list length does not match peptide count")
        if self.bind_prob.size:
            if not np.all(np.isfinite(self.bind_prob)):
                raise InstanceError("probability out of range [0, 1)")
            if np.any(self.bind_prob < 0.0) or np.any(self.bind_prob >= 1.0):
                raise InstanceError("probability out of range [0, 1)")
            if np.any(self.bind_pep < 0) or np.any(self.bind_pep >= self.n):
                raise InstanceError("binding references unknown peptide index")
            if np.any(self.bind_geno < 0) or np.any(self.bind_geno >= self.m_count):
                raise InstanceError("binding references unknown genotype index")
            pair_keys = self.bind_pep * self.m_count + self.bind_geno
            if np.unique(pair_keys).size != pair_keys.size:
                raise InstanceError("duplicate binding entry")
        if self.graph.n != self.n:
            raise InstanceError("graph size does not match peptide count")

    def binding_column(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        """Nonzero (genotype indices, probabilities) for peptide ``v``."""
        lo, hi = self.bind_indptr[v], self.bind_indptr[v + 1]
        return self.bind_geno[lo:hi], self.bind_prob[lo:hi]

    def binding_prob(self, v: int, m: int) -> float:
        genos, probs = self.binding_column(v)
        pos = np.searchsorted(genos, m)
        if pos < genos.size and genos[pos] == m:
            return float(probs[pos])
        return 0.0

    def __eq__(self, other) -> bool:
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.peptide_ids == other.peptide_ids
            and self.genotype_ids == other.genotype_ids
            and self.peptide_sequences == other.peptide_sequences
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.bind_pep, other.bind_pep)
            and np.array_equal(self.bind_geno, other.bind_geno)
            and np.array_equal(self.bind_prob, other.bind_prob)
            and self.graph == other.graph
        )

    def __repr__(self) -> str:
        return (
            f"Instance(n={self.n}, m_count={self.m_count}, "
            f"bindings={self.bind_prob.size}, edges={self.graph.edge_count})"
        )


def build_instance(
    peptide_ids: Sequence[str],
    genotype_ids: Sequence[str],
    weights: Sequence[float],
    bindings: Iterable[tuple[int, int, float]],
    edges: Iterable[tuple[int, int]],
    sequences: Sequence[str] | None = None,
    clamp_probs: bool = False,
) -> Instance:
    """Assemble an Instance from index-based triplets.

    With ``clamp_probs`` probabilities at or above 1 are clamped to
    ``PROB_CEIL`` (a warning is emitted); otherwise they are rejected.
    """
    pep, geno, prob = [], [], []
    for p_idx, g_idx, p in bindings:
        if clamp_probs and p >= 1.0:
            warnings.warn(
                f"binding probability {p} clamped to {PROB_CEIL}", stacklevel=2
            )
            p = PROB_CEIL
        pep.append(p_idx)
        geno.append(g_idx)
        prob.append(p)
    n = len(peptide_ids)
    return Instance(
        peptide_ids=list(peptide_ids),
        genotype_ids=list(genotype_ids),
        weights=np.asarray(weights, dtype=np.float64),
        bind_pep=np.asarray(pep, dtype=np.int64),
        bind_geno=np.asarray(geno, dtype=np.int64),
        bind_prob=np.asarray(prob, dtype=np.float64),
        graph=SimilarityGraph(n, edges),
        peptide_sequences=list(sequences) if sequences is not None else None,
    )


@dataclass(frozen=True)
class RunParams:
    """Solver run parameters; N above k is clamped to k (inert beyond)."""

    k: int
    N: int
    seed: int
    eval_budget: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if self.N < 0:
            raise ValueError("N must be non-negative")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.eval_budget < 1:
            raise ValueError("eval_budget must be positive")
        if self.N > self.k:
            object.__setattr__(self, "N", self.k)


@dataclass(frozen=True)
class GenParams:
    """Synthetic instance generator parameters."""

    n: int
    m_count: int
    edge_density: float = 0.05
    binding_sparsity: float = 0.2
    prob_lo: float = 0.05
    prob_hi: float = 0.95
    weight_law: str = "uniform"

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.m_count < 1:
            raise ValueError("m_count must be positive")
        if not (0.0 <= self.edge_density <= 1.0):
            raise ValueError("edge_density must lie in [0, 1]")
        if not (0.0 <= self.binding_sparsity <= 1.0):
            raise ValueError("binding_sparsity must lie in [0, 1]")
        if not (0.0 <= self.prob_lo <= self.prob_hi < 1.0):
            raise ValueError("need 0 <= prob_lo <= prob_hi < 1")
        if self.weight_law not in ("uniform", "dirichlet"):
            raise ValueError("weight_law must be 'uniform' or 'dirichlet'")


# ---------------------------------------------------------------------------
# TSV directory format
# ---------------------------------------------------------------------------

def _read_rows(path: Path) -> list[tuple[int, list[str]]]:
    if not path.is_file():
        raise InstanceError(f"{path}: missing file")
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            rows.append((lineno, line.split("\t")))
    return rows


def _parse_float(tok: str, path: Path, lineno: int) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise InstanceError(f"{path}:{lineno}: malformed number {tok!r}") from None
    if not np.isfinite(val):
        raise InstanceError(f"{path}:{lineno}: malformed number {tok!r}")
    return val


def load_peptides(pep_path: str | Path) -> tuple[list[str], list[str] | None]:
    """Parse a peptides.tsv file into (ids, sequences or None)."""
    pep_path = Path(pep_path)
    peptide_ids: list[str] = []
    sequences: list[str] = []
    pep_index: dict[str, int] = {}
    has_seq: bool | None = None
    for lineno, cols in _read_rows(pep_path):
        if len(cols) not in (1, 2):
            raise InstanceError(f"{pep_path}:{lineno}: expected 1 or 2 columns")
        row_has_seq = len(cols) == 2
        if has_seq is None:
            has_seq = row_has_seq
        elif has_seq != row_has_seq:
            raise InstanceError(
                f"{pep_path}:{lineno}: sequence column must be present on all rows or none"
            )
        pid = cols[0].strip()
        if not pid:
            raise InstanceError(f"{pep_path}:{lineno}: empty peptide id")
        if pid in pep_index:
            raise InstanceError(f"{pep_path}:{lineno}: duplicate peptide id {pid!r}")
        pep_index[pid] = len(peptide_ids)
        peptide_ids.append(pid)
        if row_has_seq:
            sequences.append(cols[1].strip())
    if not peptide_ids:
        raise InstanceError(f"{pep_path}: no peptides")
    return peptide_ids, (sequences if has_seq else None)


def load_instance(path: str | Path) -> Instance:
    """Load and validate an instance directory (see the TSV format in README)."""
    root = Path(path)
    if not root.is_dir():
        raise InstanceError(f"{root}: missing instance directory")

    pep_path = root / PEPTIDES_FILE
    peptide_ids, sequences = load_peptides(pep_path)
    pep_index = {pid: i for i, pid in enumerate(peptide_ids)}

    geno_path = root / GENOTYPES_FILE
    genotype_ids: list[str] = []
    weights: list[float] = []
    geno_index: dict[str, int] = {}
    for lineno, cols in _read_rows(geno_path):
        if len(cols) != 2:
            raise InstanceError(f"{geno_path}:{lineno}: expected 2 columns")
        gid = cols[0].strip()
        if not gid:
            raise InstanceError(f"{geno_path}:{lineno}: empty genotype id")
        if gid in geno_index:
            raise InstanceError(f"{geno_path}:{lineno}: duplicate genotype id {gid!r}")
        w = _parse_float(cols[1], geno_path, lineno)
        if w < 0:
            raise InstanceError(f"{geno_path}:{lineno}: negative weight")
        geno_index[gid] = len(genotype_ids)
        genotype_ids.append(gid)
        weights.append(w)
    if not genotype_ids:
        raise InstanceError(f"{geno_path}: no genotypes")

    bind_path = root / BINDINGS_FILE
    triplets: list[tuple[int, int, float]] = []
    seen_pairs: set[tuple[int, int]] = set()
    for lineno, cols in _read_rows(bind_path):
        if len(cols) != 3:
            raise InstanceError(f"{bind_path}:{lineno}: expected 3 columns")
        pid, gid, ptok = cols[0].strip(), cols[1].strip(), cols[2]
        if pid not in pep_index:
            raise InstanceError(f"{bind_path}:{lineno}: unknown peptide id {pid!r}")
        if gid not in geno_index:
            raise InstanceError(f"{bind_path}:{lineno}: unknown genotype id {gid!r}")
        p = _parse_float(ptok, bind_path, lineno)
        if not (0.0 <= p < 1.0):
            raise InstanceError(f"{bind_path}:{lineno}: probability out of range [0, 1)")
        key = (pep_index[pid], geno_index[gid])
        if key in seen_pairs:
            raise InstanceError(
                f"{bind_path}:{lineno}: duplicate binding for ({pid!r}, {gid!r})"
            )
        seen_pairs.add(key)
        triplets.append((key[0], key[1], p))

    edge_path = root / EDGES_FILE
    edges: list[tuple[int, int]] = []
    for lineno, cols in _read_rows(edge_path):
        if len(cols) != 2:
            raise InstanceError(f"{edge_path}:{lineno}: expected 2 columns")
        a, b = cols[0].strip(), cols[1].strip()
        for tok in (a, b):
            if tok not in pep_index:
                raise InstanceError(f"{edge_path}:{lineno}: unknown peptide id {tok!r}")
        if a == b:
            raise InstanceError(f"{edge_path}:{lineno}: self-loop on {a!r}")
        edges.append((pep_index[a], pep_index[b]))

    try:
        return build_instance(
            peptide_ids,
            genotype_ids,
            weights,
            triplets,
            edges,
            sequences=sequences,
        )
    except InstanceError as exc:
        raise InstanceError(f"{root}: {exc}") from None


def save_instance(inst: Instance, path: str | Path) -> None:
    """Write the four-file TSV directory; together with load this round-trips."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)

    with open(root / PEPTIDES_FILE, "w", encoding="utf-8") as fh:
        fh.write("# peptide_id[\tsequence]\n")
        for i, pid in enumerate(inst.peptide_ids):
            if inst.peptide_sequences is not None:
                fh.write(f"{pid}\t{inst.peptide_sequences[i]}\n")
            else:
                fh.write(f"{pid}\n")

    with open(root / GENOTYPES_FILE, "w", encoding="utf-8") as fh:
        fh.write("# genotype_id\tweight\n")
        for gid, w in zip(inst.genotype_ids, inst.weights):
            fh.write(f"{gid}\t{format_decimal(float(w))}\n")

    with open(root / BINDINGS_FILE, "w", encoding="utf-8") as fh:
        fh.write("# peptide_id\tgenotype_id\tprobability\n")
        for v, m, p in zip(inst.bind_pep, inst.bind_geno, inst.bind_prob):
            fh.write(
                f"{inst.peptide_ids[v]}\t{inst.genotype_ids[m]}\t"
                f"{format_decimal(float(p))}\n"
            )

    with open(root / EDGES_FILE, "w", encoding="utf-8") as fh:
        fh.write("# peptide_id\tpeptide_id\n")
        for a, b in inst.graph.edges:
            fh.write(f"{inst.peptide_ids[a]}\t{inst.peptide_ids[b]}\n")


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def _id_list(prefix: str, count: int) -> list[str]:
    width = len(str(count))
    return [f"{prefix}{i:0{width}d}" for i in range(1, count + 1)]


def generate_synthetic(params: GenParams, seed: int) -> Instance:
    """Random instance; deterministic for a fixed (params, seed) pair.

    Probabilities and weights are quantized to the canonical decimal format
    so that a save/load round-trip reproduces the instance exactly.
    """
    rng = np.random.default_rng(seed)
    n, m = params.n, params.m_count
    peptide_ids = _id_list("p", n)
    genotype_ids = _id_list("g", m)

    if params.weight_law == "uniform":
        weights = rng.uniform(0.0, 1.0, size=m)
        weights = np.maximum(weights, 1e-9)
    else:
        weights = rng.dirichlet(np.ones(m))
    weights = np.array([quantize(float(w)) for w in weights])

    mask = rng.random((n, m)) < params.binding_sparsity
    values = rng.uniform(params.prob_lo, params.prob_hi, size=(n, m))
    triplets = []
    for v in range(n):
        for g in np.flatnonzero(mask[v]):
            p = min(quantize(float(values[v, g])), quantize(PROB_CEIL))
            triplets.append((v, int(g), p))

    iu, ju = np.triu_indices(n, k=1)
    chosen = rng.random(iu.size) < params.edge_density
    edges = list(zip(iu[chosen].tolist(), ju[chosen].tolist()))

    return build_instance(peptide_ids, genotype_ids, weights, triplets, edges)


def generate_adversarial(n: int) -> Instance:
    """Greedy-trap instance: one dedicated genotype per peptide, weight 1.

    Peptide 1 binds its genotype with 0.9, peptides 2 and 3 with 0.6, all
    others with 0.2; the only edges are (1,2) and (1,3).  With disjoint
    supports and N >= k the objective is additive over peptides, so the
    best pair {2,3} (1.2) beats every pair through peptide 1 (at most 1.1),
    yet peptide 1 alone has the single largest value.
    """
    if n < 4:
        raise ValueError("adversarial construction needs n >= 4")
    peptide_ids = _id_list("v", n)
    genotype_ids = _id_list("g", n)
    weights = np.ones(n)
    probs = [0.9, 0.6, 0.6] + [0.2] * (n - 3)
    triplets = [(i, i, probs[i]) for i in range(n)]
    edges = [(0, 1), (0, 2)]
    inst = build_instance(peptide_ids, genotype_ids, weights, triplets, edges)

    from .evaluator import Genome, eval_from_scratch

    pair_value, _ = eval_from_scratch(inst, Genome.from_indices(n, [1, 2]), n)
    for vx in range(3, n):
        value, _ = eval_from_scratch(inst, Genome.from_indices(n, [0, vx]), n)
        if not value < pair_value:
            raise AssertionError("adversarial construction failed its self-check")
    return inst


# ---------------------------------------------------------------------------
# similarity graph from sequences
# ---------------------------------------------------------------------------

def levenshtein(a: str, b: str, bound: int | None = None) -> int:
    """Edit distance (insert/delete/substitute); stops early above ``bound``."""
    if a == b:
        return 0
    if len(a) > len(b):
        a, b = b, a
    if bound is not None and len(b) - len(a) > bound:
        return bound + 1
    prev = list(range(len(a) + 1))
    for j, cb in enumerate(b, start=1):
        cur = [j] + [0] * len(a)
        for i, ca in enumerate(a, start=1):
            cur[i] = min(
                prev[i] + 1,
                cur[i - 1] + 1,
                prev[i - 1] + (ca != cb),
            )
        if bound is not None and min(cur) > bound:
            return bound + 1
        prev = cur
    return prev[-1]


def build_similarity_graph(sequences: Sequence[str], threshold: int) -> SimilarityGraph:
    """Edge (i, j) iff the sequences are within ``threshold`` edits."""
    if not sequences:
        raise ValueError("sequence list must be non-empty")
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    n = len(sequences)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if levenshtein(sequences[i], sequences[j], bound=threshold) <= threshold:
                edges.append((i, j))
    return SimilarityGraph(n, edges)


def max_degree(inst: Instance) -> int:
    """Maximum vertex degree of the similarity graph (0 when edgeless)."""
    return inst.graph.max_degree()
