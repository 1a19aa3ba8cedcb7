import numpy as np
import pytest

from covax.evaluator import Genome, eval_from_scratch
from covax.instance import (
    GenParams,
    InstanceError,
    RunParams,
    SimilarityGraph,
    build_instance,
    build_similarity_graph,
    generate_adversarial,
    generate_synthetic,
    levenshtein,
    load_instance,
    max_degree,
    save_instance,
)
from conftest import random_instance


def tiny_instance(edges=((0, 1),), sequences=None):
    return build_instance(
        peptide_ids=["a", "b", "c"],
        genotype_ids=["g1", "g2"],
        weights=[1.0, 0.5],
        bindings=[(0, 0, 0.5), (1, 0, 0.25), (2, 1, 0.75)],
        edges=edges,
        sequences=sequences,
    )


# ---------------------------------------------------------------------------
# round trips
# ---------------------------------------------------------------------------

def test_save_load_round_trip(tmp_path):
    inst = tiny_instance(sequences=["AAA", "AAC", "TTT"])
    save_instance(inst, tmp_path / "inst")
    assert load_instance(tmp_path / "inst") == inst


def test_round_trip_generated_instances(tmp_path):
    for seed in range(4):
        inst = random_instance(n=15, m=8, seed=seed)
        save_instance(inst, tmp_path / f"i{seed}")
        assert load_instance(tmp_path / f"i{seed}") == inst


def test_round_trip_empty_edges(tmp_path):
    inst = random_instance(n=6, m=3, seed=1, edge_density=0.0)
    assert inst.graph.edge_count == 0
    save_instance(inst, tmp_path / "e")
    loaded = load_instance(tmp_path / "e")
    assert loaded == inst
    assert loaded.graph.edge_count == 0


def test_save_to_bad_location_raises(tmp_path):
    blocker = tmp_path / "occupied"
    blocker.write_text("not a directory")
    with pytest.raises(OSError):
        save_instance(tiny_instance(), blocker / "inst")


def test_generated_serialization_is_byte_identical(tmp_path):
    params = GenParams(n=10, m_count=5, edge_density=0.3, binding_sparsity=0.5)
    save_instance(generate_synthetic(params, 9), tmp_path / "a")
    save_instance(generate_synthetic(params, 9), tmp_path / "b")
    for name in ("peptides.tsv", "genotypes.tsv", "bindings.tsv", "edges.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


# ---------------------------------------------------------------------------
# loader errors
# ---------------------------------------------------------------------------

def write_dir(tmp_path, peptides, genotypes, bindings, edges):
    d = tmp_path / "inst"
    d.mkdir(parents=True, exist_ok=True)
    (d / "peptides.tsv").write_text(peptides)
    (d / "genotypes.tsv").write_text(genotypes)
    (d / "bindings.tsv").write_text(bindings)
    (d / "edges.tsv").write_text(edges)
    return d


def test_load_probability_out_of_range(tmp_path):
    d = write_dir(tmp_path, "a\nb\n", "g\t1.0\n", "a\tg\t1.0\n", "")
    with pytest.raises(InstanceError, match="probability out of range"):
        load_instance(d)


def test_load_error_carries_file_and_line(tmp_path):
    d = write_dir(tmp_path, "a\nb\n", "g\t1.0\n", "# comment\na\tg\t2.5\n", "")
    with pytest.raises(InstanceError, match=r"bindings\.tsv:2"):
        load_instance(d)


def test_load_unknown_edge_id_named(tmp_path):
    d = write_dir(tmp_path, "a\nb\n", "g\t1.0\n", "", "a\tzz\n")
    with pytest.raises(InstanceError, match="zz"):
        load_instance(d)


def test_load_unknown_binding_ids(tmp_path):
    d = write_dir(tmp_path, "a\n", "g\t1.0\n", "nope\tg\t0.5\n", "")
    with pytest.raises(InstanceError, match="nope"):
        load_instance(d)
    d2 = write_dir(tmp_path / "x", "a\n", "g\t1.0\n", "a\tgg\t0.5\n", "")
    with pytest.raises(InstanceError, match="gg"):
        load_instance(d2)


def test_load_duplicate_ids(tmp_path):
    d = write_dir(tmp_path, "a\na\n", "g\t1.0\n", "", "")
    with pytest.raises(InstanceError, match="duplicate peptide id"):
        load_instance(d)
    d2 = write_dir(tmp_path / "x", "a\n", "g\t1.0\ng\t2.0\n", "", "")
    with pytest.raises(InstanceError, match="duplicate genotype id"):
        load_instance(d2)


def test_load_missing_file(tmp_path):
    d = write_dir(tmp_path, "a\n", "g\t1.0\n", "", "")
    (d / "edges.tsv").unlink()
    with pytest.raises(InstanceError, match="missing file"):
        load_instance(d)


def test_load_self_loop(tmp_path):
    d = write_dir(tmp_path, "a\nb\n", "g\t1.0\n", "", "a\ta\n")
    with pytest.raises(InstanceError, match="self-loop"):
        load_instance(d)


def test_load_mixed_sequence_presence(tmp_path):
    d = write_dir(tmp_path, "a\tAAA\nb\n", "g\t1.0\n", "", "")
    with pytest.raises(InstanceError, match="sequence column"):
        load_instance(d)


def test_load_duplicate_binding(tmp_path):
    d = write_dir(tmp_path, "a\n", "g\t1.0\n", "a\tg\t0.5\na\tg\t0.6\n", "")
    with pytest.raises(InstanceError, match="duplicate binding"):
        load_instance(d)


def test_load_negative_weight(tmp_path):
    d = write_dir(tmp_path, "a\n", "g\t-1.0\n", "", "")
    with pytest.raises(InstanceError, match="negative weight"):
        load_instance(d)


def test_load_dedups_reversed_edges(tmp_path):
    d = write_dir(tmp_path, "a\nb\n", "g\t1.0\n", "", "a\tb\nb\ta\na\tb\n")
    inst = load_instance(d)
    assert inst.graph.edge_count == 1


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def test_generate_synthetic_deterministic():
    params = GenParams(n=10, m_count=5, edge_density=0.0, binding_sparsity=1.0,
                       prob_lo=0.1, prob_hi=0.9)
    assert generate_synthetic(params, 1) == generate_synthetic(params, 1)


def test_generate_edge_density_extremes():
    none = random_instance(n=9, m=2, seed=3, edge_density=0.0)
    assert none.graph.edge_count == 0
    full = random_instance(n=9, m=2, seed=3, edge_density=1.0)
    assert full.graph.edge_count == 9 * 8 // 2


def test_generate_rejects_bad_params():
    with pytest.raises(ValueError):
        GenParams(n=1, m_count=5)
    with pytest.raises(ValueError):
        GenParams(n=5, m_count=0)
    with pytest.raises(ValueError):
        GenParams(n=5, m_count=5, prob_hi=1.0)
    with pytest.raises(ValueError):
        GenParams(n=5, m_count=5, edge_density=1.5)


def test_generate_dirichlet_weights():
    inst = random_instance(n=6, m=8, seed=2, weight_law="dirichlet")
    assert inst.weights.sum() == pytest.approx(1.0, abs=1e-9)
    inst.validate()


def test_adversarial_values_match_construction():
    inst = generate_adversarial(6)
    assert max_degree(inst) == 2
    f1, _ = eval_from_scratch(inst, Genome.from_indices(6, [0]), 6)
    assert f1 == 0.9
    pair, _ = eval_from_scratch(inst, Genome.from_indices(6, [1, 2]), 6)
    assert pair == 1.2
    trap, _ = eval_from_scratch(inst, Genome.from_indices(6, [0, 3]), 6)
    assert trap == 1.1
    assert trap < pair


def test_adversarial_requires_four():
    with pytest.raises(ValueError):
        generate_adversarial(3)


def test_adversarial_deterministic(tmp_path):
    save_instance(generate_adversarial(8), tmp_path / "a")
    save_instance(generate_adversarial(8), tmp_path / "b")
    for name in ("peptides.tsv", "genotypes.tsv", "bindings.tsv", "edges.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


# ---------------------------------------------------------------------------
# similarity graph
# ---------------------------------------------------------------------------

def test_levenshtein_cases():
    assert levenshtein("AAAA", "AAAA") == 0
    assert levenshtein("AAAA", "TTTT") == 4
    assert levenshtein("PEPTIDE", "PEPTIDES") == 1
    assert levenshtein("", "ABC") == 3
    assert levenshtein("kitten", "sitting") == 3


def test_build_similarity_graph_examples():
    g0 = build_similarity_graph(["AAAA", "AAAA"], 0)
    assert g0.edge_count == 1
    g1 = build_similarity_graph(["AAAA", "TTTT"], 3)
    assert g1.edge_count == 0
    g2 = build_similarity_graph(["PEPTIDE", "PEPTIDES"], 6)
    assert g2.edge_count == 1


def test_build_similarity_graph_monotone_in_threshold(rng):
    alphabet = list("ACDE")
    seqs = ["".join(rng.choice(alphabet, size=int(rng.integers(3, 8)))) for _ in range(10)]
    previous = set()
    for t in range(0, 8):
        g = build_similarity_graph(seqs, t)
        edges = {tuple(e) for e in g.edges.tolist()}
        assert previous <= edges
        previous = edges


def test_build_similarity_graph_huge_threshold_is_complete():
    seqs = ["AAAA", "TTTT", "CGCG", "A"]
    g = build_similarity_graph(seqs, threshold=sum(len(s) for s in seqs))
    assert g.edge_count == 4 * 3 // 2


def test_build_similarity_graph_empty_list():
    with pytest.raises(ValueError):
        build_similarity_graph([], 2)


def test_max_degree():
    assert max_degree(random_instance(n=7, m=2, seed=0, edge_density=0.0)) == 0
    complete = SimilarityGraph(5, [(i, j) for i in range(5) for j in range(i + 1, 5)])
    assert complete.max_degree() == 4
    assert max_degree(generate_adversarial(6)) == 2


def test_graph_structure():
    g = SimilarityGraph(4, [(2, 0), (0, 1), (1, 0)])
    assert g.edge_count == 2
    assert g.neighbors(0).tolist() == [1, 2]
    assert g.has_edge(0, 2) and g.has_edge(2, 0)
    assert not g.has_edge(1, 2)
    with pytest.raises(InstanceError):
        SimilarityGraph(3, [(1, 1)])


# ---------------------------------------------------------------------------
# params
# ---------------------------------------------------------------------------

def test_run_params_clamps_threshold():
    p = RunParams(k=5, N=9, seed=0, eval_budget=10)
    assert p.N == 5
    with pytest.raises(ValueError):
        RunParams(k=0, N=0, seed=0, eval_budget=10)
    with pytest.raises(ValueError):
        RunParams(k=3, N=1, seed=0, eval_budget=0)


def test_instance_invariants_on_generated():
    for seed in range(3):
        inst = random_instance(seed=seed)
        inst.validate()
        assert np.all(inst.bind_prob >= 0) and np.all(inst.bind_prob < 1)
        assert inst.weights.min() >= 0 and inst.weights.sum() > 0
        # edges unique with i < j implies symmetric, loop-free adjacency
        e = inst.graph.edges
        if len(e):
            assert np.all(e[:, 0] < e[:, 1])
