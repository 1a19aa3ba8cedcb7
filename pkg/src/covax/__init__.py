"""covax: constrained peptide-vaccine subset selection.

Maximizes the population-weighted expected number of peptide-MHC bindings
under a cardinality budget and pairwise-dissimilarity constraints, via a
greedy baseline and bi-objective evolutionary solvers with warm-start and
repair.  Hot kernels are numba-compiled with a pure-numpy fallback (see
``covax._kernels``).
"""

from ._kernels import ACTIVE_BACKEND
from .evaluator import (
    Genome,
    HitDistributionTable,
    ObjectivePair,
    apply_add,
    apply_remove,
    bi_objective,
    eval_from_scratch,
    eval_incremental,
    is_feasible,
    marginal_gain,
)
from .greedy import optivax_p
from .instance import (
    GenParams,
    Instance,
    InstanceError,
    RunParams,
    SimilarityGraph,
    build_instance,
    build_similarity_graph,
    generate_adversarial,
    generate_synthetic,
    load_instance,
    max_degree,
    save_instance,
)
from .moea import (
    Dominance,
    GsemoArchive,
    Individual,
    Nsga2Population,
    Trace,
    best_feasible,
    bitwise_mutation,
    crowding_distance,
    dominates,
    non_dominated_sort,
    one_point_crossover,
    repair,
    run_gsemo,
    run_mu_plus_one_ea,
    run_nsga2,
    warm_start,
)
from .oracle import OracleReport, audit_properties, brute_force_opt, enumerate_expectation

__version__ = "0.1.0"

__all__ = [
    "ACTIVE_BACKEND",
    "Dominance",
    "GenParams",
    "Genome",
    "GsemoArchive",
    "HitDistributionTable",
    "Individual",
    "Instance",
    "InstanceError",
    "Nsga2Population",
    "ObjectivePair",
    "OracleReport",
    "RunParams",
    "SimilarityGraph",
    "Trace",
    "apply_add",
    "apply_remove",
    "audit_properties",
    "best_feasible",
    "bi_objective",
    "bitwise_mutation",
    "brute_force_opt",
    "build_instance",
    "build_similarity_graph",
    "crowding_distance",
    "dominates",
    "enumerate_expectation",
    "eval_from_scratch",
    "eval_incremental",
    "generate_adversarial",
    "generate_synthetic",
    "is_feasible",
    "load_instance",
    "marginal_gain",
    "max_degree",
    "non_dominated_sort",
    "one_point_crossover",
    "optivax_p",
    "repair",
    "run_gsemo",
    "run_mu_plus_one_ea",
    "run_nsga2",
    "save_instance",
    "warm_start",
]
