import dataclasses
import filecmp
import itertools

import numpy as np
import pytest

from causalida.graphs import Dag, GraphError, Pdag, dag_to_cpdag
from causalida.harness import (
    BenchmarkConfig,
    EdgeFrequencyTable,
    bench,
    effect_ranking_roc,
    generate_instance,
    ida_scores,
    learn,
    parse_order,
    stability_run,
    stream,
    structural_metrics,
)
from causalida.indep import SampleTooSmallError
from causalida.sem import random_sem, sem_to_json, total_effect_paths, true_covariance


def test_config_validation():
    for bad in (dict(p=1), dict(density=1.5), dict(runs=0), dict(fraction=0.0), dict(alphas=[1.0]), dict(algorithms=["lingam"])):
        with pytest.raises(ValueError):
            BenchmarkConfig(**bad)
    cfg = BenchmarkConfig.from_dict({"p": 11, "degree": 2.0})
    assert cfg.density == pytest.approx(0.2)


def test_streams_are_independent_and_reproducible():
    a = stream(1, "subsample", 0).random(5)
    assert np.array_equal(a, stream(1, "subsample", 0).random(5))
    assert not np.array_equal(a, stream(1, "permutation", 0).random(5))
    assert not np.array_equal(a, stream(1, "subsample", 1).random(5))


def test_generate_instance_deterministic():
    cfg = BenchmarkConfig(p=6, density=0.4, n=50)
    sem_a, data_a = generate_instance(cfg, 3)
    sem_b, data_b = generate_instance(cfg, 3)
    assert sem_a == sem_b
    assert data_a.equals(data_b)
    assert sem_to_json(sem_a) != sem_to_json(generate_instance(cfg, 4)[0])


def test_generate_instance_edgeless():
    sem, data = generate_instance(BenchmarkConfig(p=5, density=0.0, n=20), 0)
    assert not sem.dag.edges
    assert data.shape == (20, 5)


def test_mean_edge_count():
    # 0.2 * C(10, 2) = 9 expected edges
    counts = [len(random_sem(10, 0.2, stream(s, "instance")).dag.edges) for s in range(1000)]
    assert np.mean(counts) == pytest.approx(9, abs=1)


def test_structural_metrics_examples():
    truth = Dag("abcd", [("a", "b"), ("b", "c"), ("d", "c")])
    assert structural_metrics(truth, truth) == {"shd": 0, "tpr": 1.0, "fpr": 0.0}
    empty = Pdag("abcd")
    m = structural_metrics(truth, empty)
    assert m["shd"] == 3 and m["tpr"] == 0.0 and m["fpr"] == 0.0
    flipped = Dag("abcd", [("b", "a"), ("b", "c"), ("d", "c")])
    assert structural_metrics(truth, flipped)["shd"] == 1
    undirected = Pdag("abcd", [("b", "c"), ("d", "c")], [("a", "b")])
    assert structural_metrics(truth, undirected) == {"shd": 1, "tpr": 1.0, "fpr": 0.0}
    extra = Dag("abcd", [("a", "b"), ("b", "c"), ("d", "c"), ("a", "d")])
    assert structural_metrics(truth, extra) == {"shd": 1, "tpr": 1.0, "fpr": pytest.approx(1 / 3)}
    with pytest.raises(GraphError):
        structural_metrics(truth, Pdag("abc"))


def test_structural_metrics_self_is_perfect():
    rng = np.random.default_rng(0)
    for _ in range(20):
        c = dag_to_cpdag(random_sem(7, 0.4, rng).dag)
        assert structural_metrics(c, c) == {"shd": 0, "tpr": 1.0, "fpr": 0.0}


def test_parse_order(tmp_path):
    nodes = ["a", "b", "c"]
    assert parse_order(None, nodes) == nodes
    assert sorted(parse_order("permute:4", nodes)) == nodes
    assert parse_order("permute:4", nodes) == parse_order("permute:4", nodes)
    f = tmp_path / "order.txt"
    f.write_text("c\nb\na\n")
    assert parse_order(str(f), nodes) == ["c", "b", "a"]
    f.write_text("c,a\n")
    with pytest.raises(GraphError):
        parse_order(str(f), nodes)


def test_single_run_matches_direct_fit():
    cfg = BenchmarkConfig(p=6, density=0.4, n=200, runs=1, fraction=1.0, permute=False)
    _, data = generate_instance(cfg, 1)
    table = stability_run(data, "pc-stable", cfg, seed=1)
    g, _ = learn(data, "pc-stable", cfg.alphas[0])
    for u, v in itertools.combinations(sorted(data.columns), 2):
        f = table.frequency(u, v)
        assert f in (0.0, 1.0)
        assert f == float(g.is_adjacent(u, v))
    assert not table.intermediate_edges()


def test_pc_stable_tables_invariant_to_permutation():
    cfg = BenchmarkConfig(p=12, density=0.25, n=100, runs=15)
    _, data = generate_instance(cfg, 2)
    with_perm = stability_run(data, "pc-stable", cfg, seed=2)
    without = stability_run(data, "pc-stable", dataclasses.replace(cfg, permute=False), seed=2)
    assert with_perm.counts == without.counts
    assert with_perm.directed == without.directed
    assert all(0 <= c <= cfg.runs for c in with_perm.counts.values())


def test_classic_pc_has_intermediate_frequency_edge():
    # pre-screened instance: all rows every run, only the ordering varies
    cfg = BenchmarkConfig(p=15, density=0.2, n=60, runs=26, fraction=1.0)
    _, data = generate_instance(cfg, 0)
    classic = stability_run(data, "pc", cfg, seed=0)
    stable = stability_run(data, "pc-stable", cfg, seed=0)
    assert classic.intermediate_edges()
    assert not stable.intermediate_edges()


def test_stability_subsample_too_small():
    cfg = BenchmarkConfig(p=3, density=0.5, n=6, runs=2, fraction=0.5)
    _, data = generate_instance(cfg, 0)
    with pytest.raises(SampleTooSmallError):
        stability_run(data, "pc", cfg, seed=0)


def test_frequency_table_frame():
    t = EdgeFrequencyTable(["a", "b", "c"], 4, {("a", "b"): 4, ("b", "c"): 1}, {("b", "c"): 1})
    assert t.frequency("b", "a") == 1.0
    assert t.intermediate_edges() == [("b", "c")]
    df = t.to_frame()
    assert list(df["count"]) == [4, 1]
    assert list(df["count_a_to_b"]) == [0, 1]


def _all_pairs(sem):
    return list(itertools.permutations(sorted(sem.nodes), 2))


def test_roc_perfect_ranking():
    sem = random_sem(8, 0.4, np.random.default_rng(1))
    scored = [(pr, abs(total_effect_paths(sem, *pr))) for pr in _all_pairs(sem)]
    roc = effect_ranking_roc(sem, scored)
    assert roc.auc == pytest.approx(1.0)
    assert roc.points[0] == (0.0, 0.0) and roc.points[-1] == (1.0, 1.0)
    assert roc.baseline == [(0.0, 0.0), (1.0, 1.0)]


def test_roc_random_scores_near_diagonal():
    rng = np.random.default_rng(2)
    aucs = []
    for _ in range(100):
        sem = random_sem(20, 0.3, rng)
        scored = [(pr, rng.random()) for pr in _all_pairs(sem)]
        aucs.append(effect_ranking_roc(sem, scored).auc)
    assert np.mean(aucs) == pytest.approx(0.5, abs=0.05)


def test_roc_empty_positive_class():
    sem = random_sem(4, 0.0, np.random.default_rng(0))
    scored = [(pr, 0.0) for pr in _all_pairs(sem)]
    with pytest.raises(ValueError):
        effect_ranking_roc(sem, scored)
    sem = random_sem(4, 1.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        effect_ranking_roc(sem, [(pr, 0.0) for pr in _all_pairs(sem)], positives=[])


def test_roc_ties_form_one_step():
    sem = random_sem(5, 1.0, np.random.default_rng(3))
    roc = effect_ranking_roc(sem, [(pr, 1.0) for pr in _all_pairs(sem)])
    assert roc.points == [(0.0, 0.0), (1.0, 1.0)]
    assert roc.auc == pytest.approx(0.5)


def test_oracle_ida_ranking_beats_random_guessing():
    # at density 0.2 roughly one instance in ten has a single large effect whose
    # direction the CPDAG leaves open, so its lower bound is 0
    cfg = BenchmarkConfig(p=10, density=0.3)
    above = 0
    for seed in range(100):
        sem = random_sem(cfg.p, cfg.density, stream(seed, "roc"))
        roc = effect_ranking_roc(sem, ida_scores(dag_to_cpdag(sem.dag), true_covariance(sem)))
        above += roc.auc > 0.5
    assert above >= 95


def test_bench_layout_and_determinism(tmp_path):
    cfg = BenchmarkConfig(p=5, density=0.4, n=100, seeds=[0, 1], runs=3, algorithms=["pc", "ges"])
    a = bench(cfg, tmp_path / "a")
    bench(cfg, tmp_path / "b", threads=2)
    names = sorted(p.name for p in (tmp_path / "a" / "seed_0").iterdir())
    assert {"sem.json", "data.csv", "truth_cpdag.json", "pc_alpha0.01.json", "ges.json",
            "ges.report.json", "pc.frequencies.csv"} <= set(names)
    assert set(a["algo"]) == {"pc", "ges"} and len(a) == 4
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    for sub in cmp.subdirs.values():
        assert not sub.diff_files and not sub.left_only and not sub.right_only
    _, mismatch, errors = filecmp.cmpfiles(
        tmp_path / "a" / "seed_0", tmp_path / "b" / "seed_0", names, shallow=False
    )
    assert not mismatch and not errors
