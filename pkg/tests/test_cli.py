import itertools
import json

import pandas as pd
import pytest

from causalida.cli import main
from causalida.graphs import Pdag, dag_to_cpdag, graph_from_json, graph_to_json
from causalida.sem import sem_to_json, simulate, true_covariance


@pytest.fixture
def ex4_files(ex4, tmp_path):
    (tmp_path / "sem.json").write_text(json.dumps(sem_to_json(ex4)))
    (tmp_path / "cpdag.json").write_text(json.dumps(graph_to_json(dag_to_cpdag(ex4.dag))))
    true_covariance(ex4).to_csv(tmp_path / "cov.csv", index=False)
    simulate(ex4, 2000, seed=1).to_csv(tmp_path / "data.csv", index=False)
    return tmp_path


def test_simulate_random_and_from_sem(ex4_files, tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--p", "5", "--n", "30", "--seed", "3", "--out-dir", str(out)]) == 0
    data = pd.read_csv(out / "data.csv")
    assert data.shape == (30, 5)
    assert (out / "sem.json").exists()
    assert main(["--seed", "3", "simulate", "--sem", str(ex4_files / "sem.json"), "--n", "10",
                 "--out", str(tmp_path / "x.csv")]) == 0
    assert list(pd.read_csv(tmp_path / "x.csv").columns) == ["X1", "X2", "X3", "X4"]


def test_simulate_is_deterministic(tmp_path):
    for d in ("a", "b"):
        main(["simulate", "--p", "4", "--n", "20", "--seed", "9", "--out-dir", str(tmp_path / d)])
    assert (tmp_path / "a" / "data.csv").read_bytes() == (tmp_path / "b" / "data.csv").read_bytes()


@pytest.mark.parametrize("algo", ["pc", "pc-stable", "ges"])
def test_learn_writes_graph_and_report(ex4_files, algo):
    out = ex4_files / f"{algo}.json"
    assert main(["learn", "--algo", algo, "--data", str(ex4_files / "data.csv"), "--out", str(out)]) == 0
    g = graph_from_json(json.loads(out.read_text()))
    assert isinstance(g, Pdag) and set(g.nodes) == {"X1", "X2", "X3", "X4"}
    report = json.loads(out.with_suffix(".report.json").read_text())
    assert report["algorithm"] == algo


def test_learn_with_order_file(ex4_files):
    order = ex4_files / "order.txt"
    order.write_text("X3\nX1\nX4\nX2\n")
    args = ["learn", "--algo", "pc", "--data", str(ex4_files / "data.csv"), "--order", str(order),
            "--out", str(ex4_files / "o.json")]
    assert main(args) == 0
    order.write_text("X3\nX1\n")
    assert main(args) == 2


def test_effects_methods(ex4_files):
    base = ["effects", "--cpdag", str(ex4_files / "cpdag.json"), "--cov", str(ex4_files / "cov.csv")]
    out = ex4_files / "eff.json"
    assert main(base + ["--x", "X1", "--y", "X3", "--out", str(out)]) == 0
    obj = json.loads(out.read_text())
    assert obj["method"] == "ida-local"
    assert any(abs(v - 6) < 1e-9 for v in obj["distinct"])
    assert main(base + ["--method", "jointida-rrc", "--x", "X1,X2", "--y", "X3", "--out", str(out)]) == 0
    obj = json.loads(out.read_text())
    assert [0.0, 2.0] in [[round(a, 9) + 0.0 for a in v] for v in obj["values"]]


def test_eval_metrics(ex4, ex4_files, tmp_path):
    out = tmp_path / "m.json"
    (tmp_path / "dag.json").write_text(json.dumps(graph_to_json(ex4.dag)))
    args = ["eval", "--truth", str(tmp_path / "dag.json"), "--estimate", str(ex4_files / "cpdag.json"), "--out", str(out)]
    assert main(args) == 0
    assert json.loads(out.read_text()) == {"shd": 0, "tpr": 1.0, "fpr": 0.0}
    assert main(args + ["--as-is"]) == 0
    assert json.loads(out.read_text())["shd"] == 2


def test_stability_csv(ex4_files):
    out = ex4_files / "freq.csv"
    args = ["stability", "--data", str(ex4_files / "data.csv"), "--runs", "3", "--permute", "--out", str(out)]
    assert main(args) == 0
    df = pd.read_csv(out)
    assert list(df.columns[:4]) == ["node_a", "node_b", "count", "frequency"]
    assert df["count"].between(0, 3).all()


def test_bench_cli(tmp_path):
    args = ["bench", "--p", "4", "--n", "60", "--runs", "2", "--instances", "2", "--algos", "pc-stable",
            "--seed", "1", "--out-dir", str(tmp_path / "b")]
    assert main(args) == 0
    summary = pd.read_csv(tmp_path / "b" / "summary.csv")
    assert len(summary) == 2 and set(summary["algo"]) == {"pc-stable"}


def test_invalid_input_exit_code(ex4_files, tmp_path, capsys):
    assert main(["learn", "--data", str(tmp_path / "missing.csv")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"nodes": ["a"], "edges": [{"from": "a", "to": "b", "type": "directed"}]}')
    assert main(["effects", "--cpdag", str(bad), "--cov", str(ex4_files / "cov.csv"), "--x", "a", "--y", "b"]) == 2
    assert main(["effects", "--cpdag", str(ex4_files / "cpdag.json"), "--x", "X1", "--y", "X3"]) == 2
    assert "invalid input" in capsys.readouterr().err


def test_budget_exit_code(tmp_path):
    nodes = [f"v{k}" for k in range(7)]
    complete = Pdag(nodes, undirected=list(itertools.combinations(nodes, 2)))
    (tmp_path / "c.json").write_text(json.dumps(graph_to_json(complete)))
    cov = pd.DataFrame(
        [[1.0 if i == j else 0.0 for j in range(7)] for i in range(7)], columns=nodes
    )
    cov.to_csv(tmp_path / "cov.csv", index=False)
    args = ["effects", "--method", "jointida-mcd", "--cpdag", str(tmp_path / "c.json"),
            "--cov", str(tmp_path / "cov.csv"), "--x", "v0,v1", "--y", "v2", "--max-dags", "50"]
    assert main(args) == 3
