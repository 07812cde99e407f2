"""Benchmark and stability pipeline on synthetic linear Gaussian SEMs."""

from __future__ import annotations

import itertools
import json
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .discovery import GaussianBic, RunReport, ges, pc
from .effects import ida_local
from .graphs import GraphError, Pdag, dag_to_cpdag, graph_to_json, is_d_separated
from .indep import FisherZ, OracleCI, SampleTooSmallError
from .sem import (
    LinearSem,
    density_for_degree,
    random_sem,
    sem_to_json,
    simulate,
    total_effect_paths,
    true_covariance,
)

__all__ = [
    "InstanceError",
    "BenchmarkConfig",
    "EdgeFrequencyTable",
    "RocCurve",
    "stream",
    "faithfulness_violations",
    "generate_instance",
    "learn",
    "structural_metrics",
    "stability_run",
    "effect_ranking_roc",
    "bench",
]

logger = logging.getLogger(__name__)

MAX_RESAMPLES = 10
FAITHFULNESS_MAX_P = 10


class InstanceError(RuntimeError):
    """No faithful instance found within the resampling budget."""


def stream(root_seed: int, name: str, *keys: int) -> np.random.Generator:
    """Independent generator for the named stream ``name`` under ``root_seed``."""
    tag = zlib.crc32(name.encode())
    return np.random.default_rng(np.random.SeedSequence([root_seed, tag, *keys]))


def _derived_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


@dataclass
class BenchmarkConfig:
    p: int = 10
    density: float = 0.2
    n: int = 1000
    alphas: list = field(default_factory=lambda: [0.01])
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    algorithms: list = field(default_factory=lambda: ["pc", "pc-stable", "ges"])
    runs: int = 10
    fraction: float = 0.5
    permute: bool = True
    max_cond: int | None = None

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("p must be at least 2")
        if not 0 <= self.density <= 1:
            raise ValueError("density must lie in [0, 1]")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if not 0 < self.fraction <= 1:
            raise ValueError("fraction must lie in (0, 1]")
        if self.n < 1:
            raise ValueError("n must be positive")
        for a in self.alphas:
            if not 0 < a < 1:
                raise ValueError("alpha must lie in (0, 1)")
        for algo in self.algorithms:
            if algo not in ("pc", "pc-stable", "ges"):
                raise ValueError(f"unknown algorithm {algo!r}")

    @classmethod
    def from_dict(cls, obj: dict) -> "BenchmarkConfig":
        obj = dict(obj)
        if "degree" in obj:
            obj["density"] = density_for_degree(obj.get("p", cls.p), obj.pop("degree"))
        return cls(**obj)


def faithfulness_violations(sem: LinearSem, tol: float = 1e-8) -> list:
    """Triples ``(i, j, s)`` where vanishing partial correlation and
    d-separation disagree at tolerance ``tol``."""
    oracle = OracleCI(true_covariance(sem), tol)
    nodes = sorted(sem.nodes)
    bad = []
    for i, j in itertools.combinations(nodes, 2):
        rest = [v for v in nodes if v not in (i, j)]
        for k in range(len(rest) + 1):
            for s in itertools.combinations(rest, k):
                if oracle.decide(i, j, s) != is_d_separated(sem.dag, {i}, {j}, set(s)):
                    bad.append((i, j, s))
    return bad


def generate_instance(cfg: BenchmarkConfig, seed: int):
    """Random SEM plus simulated data, deterministic in ``seed``.

    For ``p <= 10`` the SEM is screened for faithfulness at oracle level and
    redrawn on failure.
    """
    rng = stream(seed, "instance")
    for attempt in range(MAX_RESAMPLES + 1):
        sem = random_sem(cfg.p, cfg.density, rng)
        if cfg.p > FAITHFULNESS_MAX_P or not faithfulness_violations(sem):
            data = simulate(sem, cfg.n, _derived_seed(stream(seed, "data")))
            return sem, data
        logger.info("seed %d: unfaithful draw %d, resampling", seed, attempt)
    raise InstanceError(f"no faithful instance after {MAX_RESAMPLES} resamples (seed {seed})")


def parse_order(how: str | None, nodes: Sequence[str]) -> list:
    """``None``/``"asgiven"``, ``"permute:SEED"``, or a path to a label file."""
    nodes = list(nodes)
    if how is None or how == "asgiven":
        return nodes
    if how.startswith("permute:"):
        rng = np.random.default_rng(int(how.split(":", 1)[1]))
        return [nodes[k] for k in rng.permutation(len(nodes))]
    text = Path(how).read_text()
    order = [t.strip() for t in text.replace(",", "\n").split() if t.strip()]
    if sorted(order) != sorted(nodes):
        raise GraphError("order file must list every variable exactly once")
    return order


def learn(
    data: pd.DataFrame,
    algo: str,
    alpha: float = 0.01,
    order: Sequence[str] | None = None,
    max_cond: int | None = None,
    rank: bool = False,
):
    """Run one structure learner on ``data``; returns ``(cpdag, report)``."""
    report = RunReport()
    nodes = list(data.columns)
    if algo in ("pc", "pc-stable"):
        d = FisherZ(data, alpha, rank=rank)
        g = pc(d, nodes, algo, order, max_cond, report)
    elif algo == "ges":
        g = ges(GaussianBic(data), nodes, report=report)
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    return g, report


def structural_metrics(truth: Pdag, estimate: Pdag) -> dict:
    """SHD plus skeleton true/false positive rates.

    SHD counts pairs that are adjacent in only one graph, plus pairs adjacent
    in both whose edge type or orientation differs.
    """
    if set(truth.nodes) != set(estimate.nodes):
        raise GraphError("graphs have different node sets")

    def mark(g, u, v):
        if g.has_directed(u, v):
            return ">"
        if g.has_directed(v, u):
            return "<"
        if g.has_undirected(u, v):
            return "-"
        return None

    shd = 0
    tp = fp = 0
    nodes = sorted(truth.nodes)
    n_true = 0
    n_pairs = 0
    for u, v in itertools.combinations(nodes, 2):
        n_pairs += 1
        a, b = mark(truth, u, v), mark(estimate, u, v)
        n_true += a is not None
        if a != b:
            shd += 1
        if b is not None:
            if a is not None:
                tp += 1
            else:
                fp += 1
    negatives = n_pairs - n_true
    return {
        "shd": shd,
        "tpr": tp / n_true if n_true else 1.0,
        "fpr": fp / negatives if negatives else 0.0,
    }


@dataclass
class EdgeFrequencyTable:
    """Selection counts over ``runs`` subsample fits.

    ``counts`` is keyed by sorted node pair (skeleton edge present);
    ``directed`` by ``(tail, head)`` for edges estimated as directed.
    """

    nodes: list
    runs: int
    counts: dict
    directed: dict

    def frequency(self, u: str, v: str) -> float:
        return self.counts.get(tuple(sorted((u, v))), 0) / self.runs

    def intermediate_edges(self) -> list:
        return sorted(e for e, c in self.counts.items() if 0 < c < self.runs)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for (a, b), c in sorted(self.counts.items()):
            rows.append(
                {
                    "node_a": a,
                    "node_b": b,
                    "count": c,
                    "frequency": c / self.runs,
                    "count_a_to_b": self.directed.get((a, b), 0),
                    "count_b_to_a": self.directed.get((b, a), 0),
                }
            )
        cols = ["node_a", "node_b", "count", "frequency", "count_a_to_b", "count_b_to_a"]
        return pd.DataFrame(rows, columns=cols)


def stability_run(
    data: pd.DataFrame,
    algo: str,
    cfg: BenchmarkConfig,
    seed: int,
    alpha: float | None = None,
) -> EdgeFrequencyTable:
    """Refit ``algo`` on ``cfg.runs`` subsamples and count edge selections.

    Run ``k`` draws its rows from the subsample stream ``(seed, k)`` and, if
    ``cfg.permute`` is set, a variable ordering from the independent
    permutation stream ``(seed, k)``. The columns are permuted and the
    ordering is passed to the learner.
    """
    alpha = cfg.alphas[0] if alpha is None else alpha
    n = len(data)
    m = max(1, int(np.floor(cfg.fraction * n)))
    if algo in ("pc", "pc-stable") and m < 4:
        raise SampleTooSmallError(f"subsample of {m} rows is too small for the CI test")
    nodes = list(data.columns)
    counts, directed = {}, {}
    for k in range(cfg.runs):
        rows = np.sort(stream(seed, "subsample", k).choice(n, size=m, replace=False))
        order = nodes
        if cfg.permute:
            perm = stream(seed, "permutation", k).permutation(len(nodes))
            order = [nodes[i] for i in perm]
        sub = data.iloc[rows][order].reset_index(drop=True)
        g, _ = learn(sub, algo, alpha, order, cfg.max_cond)
        for pair in g.skeleton_pairs():
            key = tuple(sorted(pair))
            counts[key] = counts.get(key, 0) + 1
        for e in g.directed:
            directed[e] = directed.get(e, 0) + 1
    return EdgeFrequencyTable(sorted(nodes), cfg.runs, counts, directed)


@dataclass
class RocCurve:
    points: list
    auc: float
    baseline: list
    positives: int
    negatives: int
    threshold: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.points, columns=["fpr", "tpr"])


def large_effect_pairs(truth: LinearSem, pairs, quantile: float = 90.0):
    """Pairs whose |true effect| is at least the given percentile of the
    nonzero true effects among ``pairs``."""
    effects = {pr: abs(total_effect_paths(truth, *pr)) for pr in pairs}
    nonzero = [e for e in effects.values() if e > 1e-12]
    if not nonzero:
        raise ValueError("no nonzero true effects: empty positive class")
    thr = float(np.percentile(nonzero, quantile))
    return {pr for pr, e in effects.items() if e >= thr and e > 1e-12}, thr


def effect_ranking_roc(truth: LinearSem, scored, positives=None, quantile: float = 90.0) -> RocCurve:
    """ROC of ranking pairs by ``score`` (descending) against large true effects.

    ``scored`` is a list of ``((x, y), score)``. Tied scores form a single
    step of the curve. ``positives`` overrides the large-effect set.
    """
    pairs = [tuple(pr) for pr, _ in scored]
    thr = float("nan")
    if positives is None:
        positives, thr = large_effect_pairs(truth, pairs, quantile)
    positives = set(map(tuple, positives))
    labels = np.array([pr in positives for pr in pairs])
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0:
        raise ValueError("empty positive class")
    if n_neg == 0:
        raise ValueError("empty negative class")
    scores = np.array([s for _, s in scored], dtype=float)
    order = np.argsort(-scores, kind="stable")
    pts = [(0.0, 0.0)]
    tp = fp = 0
    k = 0
    while k < len(order):
        j = k
        while j < len(order) and scores[order[j]] == scores[order[k]]:
            if labels[order[j]]:
                tp += 1
            else:
                fp += 1
            j += 1
        pts.append((fp / n_neg, tp / n_pos))
        k = j
    xs, ys = zip(*pts)
    auc = float(np.trapezoid(ys, xs)) if hasattr(np, "trapezoid") else float(np.trapz(ys, xs))
    return RocCurve(pts, auc, [(0.0, 0.0), (1.0, 1.0)], n_pos, n_neg, thr)


def ida_scores(cpdag: Pdag, cov: pd.DataFrame) -> list:
    """Minimum absolute IDA effect for every ordered pair."""
    out = []
    for x, y in itertools.permutations(sorted(cpdag.nodes), 2):
        out.append(((x, y), ida_local(cpdag, cov, x, y, validate=False).min_abs()))
    return out


def _run_instance(cfg: BenchmarkConfig, seed: int) -> dict:
    sem, data = generate_instance(cfg, seed)
    truth = dag_to_cpdag(sem.dag)
    sample_cov = data.cov()
    results = []
    for algo in cfg.algorithms:
        for alpha in cfg.alphas if algo != "ges" else [None]:
            try:
                g, report = learn(data, algo, alpha if alpha is not None else 0.01, max_cond=cfg.max_cond)
                extendable = True
                try:
                    scores = ida_scores(g, sample_cov)
                except GraphError:
                    extendable, scores = False, None
            except SampleTooSmallError as exc:
                results.append({"algo": algo, "alpha": alpha, "error": str(exc)})
                continue
            roc = effect_ranking_roc(sem, scores) if scores else None
            results.append(
                {
                    "algo": algo,
                    "alpha": alpha,
                    "graph": graph_to_json(g),
                    "report": report.to_dict(),
                    "metrics": structural_metrics(truth, g),
                    "extendable": extendable,
                    "roc": roc,
                }
            )
    freq = {}
    if cfg.runs and cfg.fraction * cfg.n >= 4:
        for algo in cfg.algorithms:
            if algo in ("pc", "pc-stable"):
                freq[algo] = stability_run(data, algo, cfg, seed)
    return {"seed": seed, "sem": sem, "data": data, "truth": truth, "results": results, "freq": freq}


def _dump(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def bench(cfg: BenchmarkConfig, out_dir, threads: int = 1) -> pd.DataFrame:
    """Run every configured algorithm on every seed and write all artifacts.

    Layout: ``config.json``, ``summary.csv`` and one ``seed_<s>/`` directory
    per instance holding the SEM, data, truth CPDAG, estimated graphs, run
    reports, ROC points and stability frequency tables. Output depends only
    on ``cfg``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump(asdict(cfg), out / "config.json")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        instances = list(pool.map(lambda s: _run_instance(cfg, s), cfg.seeds))

    rows = []
    for inst in instances:
        d = out / f"seed_{inst['seed']}"
        d.mkdir(exist_ok=True)
        _dump(sem_to_json(inst["sem"]), d / "sem.json")
        inst["data"].to_csv(d / "data.csv", index=False, float_format="%.17g")
        _dump(graph_to_json(inst["truth"]), d / "truth_cpdag.json")
        for r in inst["results"]:
            tag = r["algo"] if r["alpha"] is None else f"{r['algo']}_alpha{r['alpha']:g}"
            row = {"seed": inst["seed"], "algo": r["algo"], "alpha": r["alpha"]}
            if "error" in r:
                row["error"] = r["error"]
                rows.append(row)
                continue
            _dump(r["graph"], d / f"{tag}.json")
            _dump(r["report"], d / f"{tag}.report.json")
            row.update(r["metrics"])
            row["ci_tests"] = r["report"]["ci_tests"]
            row["auc"] = r["roc"].auc if r["roc"] is not None else None
            if r["roc"] is not None:
                r["roc"].to_frame().to_csv(d / f"{tag}.roc.csv", index=False, float_format="%.17g")
            rows.append(row)
        for algo, table in inst["freq"].items():
            table.to_frame().to_csv(d / f"{algo}.frequencies.csv", index=False, float_format="%.17g")
    summary = pd.DataFrame(rows)
    summary.to_csv(out / "summary.csv", index=False, float_format="%.17g")
    return summary
