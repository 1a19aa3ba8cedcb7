import json
import os
import subprocess
import sys

import pytest

from covax.evaluator import Genome, is_feasible
from covax.instance import load_instance, save_instance
from conftest import random_instance


def covax(*args, env_extra=None, cwd=None):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "covax", *map(str, args)],
        capture_output=True,
        text=True,
        env=env,
        cwd=cwd,
    )


@pytest.fixture(scope="module")
def adv_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli") / "adv"
    proc = covax("generate", "--adversarial", 6, "--out", d)
    assert proc.returncode == 0
    return d


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def test_generate_adversarial_summary(adv_dir):
    proc = covax("generate", "--adversarial", 6, "--out", adv_dir.parent / "adv2")
    assert proc.returncode == 0
    assert "edges=2" in proc.stdout and "max_degree=2" in proc.stdout


def test_generate_synthetic_byte_identical(tmp_path):
    args = ["generate", "--n", 50, "--m", 20, "--edge-density", 0.05, "--seed", 7]
    assert covax(*args, "--out", tmp_path / "a").returncode == 0
    assert covax(*args, "--out", tmp_path / "b").returncode == 0
    for name in ("peptides.tsv", "genotypes.tsv", "bindings.tsv", "edges.tsv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_generate_rejects_tiny_n(tmp_path):
    proc = covax("generate", "--n", 1, "--m", 5, "--out", tmp_path / "x")
    assert proc.returncode == 2
    assert "usage" in proc.stderr.lower()


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def test_solve_greedy_on_adversarial(adv_dir, tmp_path):
    proc = covax("solve", "--instance", adv_dir, "--algorithm", "greedy",
                 "--k", 2, "--threshold", 2, "--out", tmp_path)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "1.1"
    result = json.loads((tmp_path / "greedy_k2_N2_s0.json").read_text())
    assert result["f"] == 1.1
    assert result["solution"] == ["v1", "v4"]
    assert result["feasible"] is True
    trace = (tmp_path / "greedy_k2_N2_s0.csv").read_text().splitlines()
    assert trace[0] == "evals,best_f,best_size"
    assert len(trace) >= 2


def test_solve_gsemo_reaches_optimum(adv_dir, tmp_path):
    proc = covax("solve", "--instance", adv_dir, "--algorithm", "gsemo-wr",
                 "--k", 2, "--threshold", 2, "--seed", 0, "--budget", "20kn",
                 "--out", tmp_path)
    assert proc.returncode == 0
    assert proc.stdout.strip() == "1.2"
    result = json.loads((tmp_path / "gsemo-wr_k2_N2_s0.json").read_text())
    assert result["warm_start_f"] == 1.1
    assert sorted(result["solution"]) == ["v2", "v3"]


def test_solve_result_passes_feasibility_recheck(adv_dir, tmp_path):
    proc = covax("solve", "--instance", adv_dir, "--algorithm", "nsga2-wr",
                 "--k", 2, "--threshold", 2, "--budget", 200, "--out", tmp_path)
    assert proc.returncode == 0
    result = json.loads((tmp_path / "nsga2-wr_k2_N2_s0.json").read_text())
    inst = load_instance(adv_dir)
    idx = [inst.peptide_ids.index(p) for p in result["solution"]]
    assert is_feasible(Genome.from_indices(inst.n, idx), 2, inst.graph)


def test_solve_usage_errors(adv_dir, tmp_path):
    assert covax("solve", "--instance", adv_dir, "--algorithm", "simulated-annealing",
                 "--k", 2, "--out", tmp_path).returncode == 2
    assert covax("solve", "--instance", adv_dir, "--algorithm", "greedy",
                 "--k", 99, "--out", tmp_path).returncode == 2
    assert covax("solve", "--instance", tmp_path / "missing", "--algorithm", "greedy",
                 "--k", 2, "--out", tmp_path).returncode == 1


def test_solve_deterministic_across_runs_and_threads(adv_dir, tmp_path):
    outputs = []
    for tag, threads in (("r1", "1"), ("r2", "1"), ("r3", "4")):
        out = tmp_path / tag
        proc = covax("solve", "--instance", adv_dir, "--algorithm", "gsemo-wr",
                     "--k", 2, "--threshold", 2, "--seed", 5, "--budget", 300,
                     "--out", out, env_extra={"COVAX_THREADS": threads})
        assert proc.returncode == 0
        outputs.append(
            (
                (out / "gsemo-wr_k2_N2_s5.json").read_bytes(),
                (out / "gsemo-wr_k2_N2_s5.csv").read_bytes(),
            )
        )
    assert outputs[0] == outputs[1] == outputs[2]


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def test_validate_ok(adv_dir):
    proc = covax("validate", adv_dir)
    assert proc.returncode == 0
    assert proc.stdout.startswith("OK")


def test_validate_corrupted_probability(tmp_path):
    inst = random_instance(n=6, m=3, seed=0)
    save_instance(inst, tmp_path / "bad")
    bindings = tmp_path / "bad" / "bindings.tsv"
    lines = bindings.read_text().splitlines()
    parts = lines[1].split("\t")
    lines[1] = "\t".join(parts[:2] + ["1.5"])
    bindings.write_text("\n".join(lines) + "\n")
    proc = covax("validate", tmp_path / "bad")
    assert proc.returncode == 1
    assert "probability out of range" in proc.stderr


def test_validate_bad_edges(tmp_path):
    inst = random_instance(n=6, m=3, seed=0)
    save_instance(inst, tmp_path / "bad")
    edges = tmp_path / "bad" / "edges.tsv"
    edges.write_text(edges.read_text() + "p1\tp1\n")
    proc = covax("validate", tmp_path / "bad")
    assert proc.returncode == 1


# ---------------------------------------------------------------------------
# build-graph
# ---------------------------------------------------------------------------

def make_sequence_instance(tmp_path):
    d = tmp_path / "seqs"
    d.mkdir()
    (d / "peptides.tsv").write_text(
        "p1\tPEPTIDE\np2\tPEPTIDES\np3\tWWWWWWWWWW\np4\tPEPTIDE\n"
    )
    (d / "genotypes.tsv").write_text("g\t1.0\n")
    (d / "bindings.tsv").write_text("p1\tg\t0.5\n")
    (d / "edges.tsv").write_text("")
    return d


def test_build_graph_writes_edges(tmp_path):
    d = make_sequence_instance(tmp_path)
    proc = covax("build-graph", d, "--threshold", 6)
    assert proc.returncode == 0
    rows = [
        line.split("\t")
        for line in (d / "edges.tsv").read_text().splitlines()
        if not line.startswith("#")
    ]
    assert ["p1", "p2"] in rows and ["p1", "p4"] in rows and ["p2", "p4"] in rows
    assert not any("p3" in r for r in rows)
    assert rows == sorted(rows)
    inst = load_instance(d)
    assert inst.graph.edge_count == 3


def test_build_graph_duplicate_sequences_threshold_zero(tmp_path):
    d = make_sequence_instance(tmp_path)
    proc = covax("build-graph", d, "--threshold", 0)
    assert proc.returncode == 0
    rows = [l for l in (d / "edges.tsv").read_text().splitlines() if not l.startswith("#")]
    assert rows == ["p1\tp4"]


def test_build_graph_requires_sequences(tmp_path):
    d = tmp_path / "noseq"
    d.mkdir()
    (d / "peptides.tsv").write_text("p1\np2\n")
    proc = covax("build-graph", d)
    assert proc.returncode == 1
    assert "missing sequences column" in proc.stderr


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def test_bench_grid(tmp_path):
    inst = random_instance(n=12, m=5, seed=4, edge_density=0.15)
    save_instance(inst, tmp_path / "inst")
    config = {
        "instance": "inst",
        "algorithms": ["greedy", "gsemo-wr"],
        "ks": [2, 3],
        "N": "0.25k",
        "seeds": [0, 1, 2],
        "eval_budget": 300,
        "out": "out",
    }
    cfg = tmp_path / "bench.json"
    cfg.write_text(json.dumps(config))
    proc = covax("bench", "--config", cfg, env_extra={"COVAX_THREADS": "2"})
    assert proc.returncode == 0, proc.stderr
    out = tmp_path / "out"
    traces = sorted(p.name for p in out.glob("*.csv") if p.name != "summary.csv")
    assert len(traces) == 12  # 2 algorithms x 2 k x 3 seeds
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0] == "algorithm,k,N,seeds,mean_f,std_f,delta_vs_greedy"
    rows = [line.split(",") for line in summary[1:]]
    assert len(rows) == 4
    greedy_rows = [r for r in rows if r[0] == "greedy"]
    assert all(float(r[6]) == 0.0 for r in greedy_rows)
    gsemo_rows = [r for r in rows if r[0] == "gsemo-wr"]
    assert all(float(r[6]) >= 0.0 for r in gsemo_rows)


def test_bench_config_error_location(tmp_path):
    cfg = tmp_path / "broken.json"
    cfg.write_text('{"instance": "x", "algorithms": [}')
    proc = covax("bench", "--config", cfg)
    assert proc.returncode == 1
    assert "broken.json:1:" in proc.stderr


def test_bench_unknown_algorithm(tmp_path):
    inst = random_instance(n=8, m=3, seed=1)
    save_instance(inst, tmp_path / "inst")
    cfg = tmp_path / "bench.json"
    cfg.write_text(json.dumps({
        "instance": "inst", "algorithms": ["mystery"], "ks": [2], "seeds": [0],
    }))
    proc = covax("bench", "--config", cfg)
    assert proc.returncode == 1
    assert "mystery" in proc.stderr
