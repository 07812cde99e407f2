"""Linear Gaussian structural equation models.

A :class:`LinearSem` stores one equation per node::

    X_i <- intercept_i + sum_j weights[j, i] * X_j + eps_i,  eps_i ~ N(0, noise_variances[i])

with ``weights[j, i] != 0`` only for edges ``X_j -> X_i`` of its DAG. Covariance
matrices and data sets are labelled pandas DataFrames.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .graphs import Dag, GraphError, graph_from_json, graph_to_json, topological_order

__all__ = [
    "DegenerateInputError",
    "LinearSem",
    "simulate",
    "true_covariance",
    "interventional_mean",
    "do_intervention",
    "total_effect_paths",
    "total_effect_adjusted",
    "fit_linear_sem",
    "random_dag",
    "random_sem",
    "sem_to_json",
    "sem_from_json",
]

# singular-submatrix guard for regressions on covariance matrices
COND_LIMIT = 1e12


class DegenerateInputError(ValueError):
    """Singular covariance submatrix or otherwise unusable numeric input."""


@dataclass(frozen=True, eq=False)
class LinearSem:
    dag: Dag
    weights: np.ndarray
    noise_variances: np.ndarray
    intercepts: np.ndarray = None
    deterministic: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        p = len(self.dag.nodes)
        w = np.array(self.weights, dtype=float)
        v = np.array(self.noise_variances, dtype=float)
        if w.shape != (p, p) or v.shape != (p,):
            raise ValueError("weights must be p x p and noise_variances length p")
        c = np.zeros(p) if self.intercepts is None else np.array(self.intercepts, dtype=float)
        idx = self.index
        mask = np.zeros((p, p), dtype=bool)
        for u, t in self.dag.edges:
            mask[idx[u], idx[t]] = True
        if np.any(w[~mask] != 0):
            raise ValueError("nonzero weight on a pair that is not an edge of the DAG")
        for k, label in enumerate(self.dag.nodes):
            if label in self.deterministic:
                if v[k] != 0:
                    raise ValueError(f"deterministic node {label!r} must have variance 0")
            elif not v[k] > 0:
                raise ValueError(f"noise variance of {label!r} must be positive")
        for name, arr in (("weights", w), ("noise_variances", v), ("intercepts", c)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def nodes(self) -> tuple:
        return self.dag.nodes

    @property
    def index(self) -> dict:
        return {v: k for k, v in enumerate(self.dag.nodes)}

    def weight(self, u: str, v: str) -> float:
        idx = self.index
        return float(self.weights[idx[u], idx[v]])

    @classmethod
    def from_edges(
        cls,
        nodes: Sequence[str],
        weights: Mapping[tuple, float],
        noise_variances: Mapping[str, float] | float = 1.0,
    ) -> "LinearSem":
        """Build from ``{(from, to): weight}``; the DAG is the key set."""
        dag = Dag(nodes, list(weights))
        idx = {v: k for k, v in enumerate(dag.nodes)}
        w = np.zeros((len(nodes), len(nodes)))
        for (u, v), b in weights.items():
            w[idx[u], idx[v]] = b
        if isinstance(noise_variances, Mapping):
            var = np.array([noise_variances[v] for v in dag.nodes], dtype=float)
        else:
            var = np.full(len(nodes), float(noise_variances))
        return cls(dag, w, var)

    def __eq__(self, other):
        if not isinstance(other, LinearSem):
            return NotImplemented
        if set(self.nodes) != set(other.nodes) or self.dag != other.dag:
            return False
        perm = [other.index[v] for v in self.nodes]
        return (
            np.array_equal(self.weights, other.weights[np.ix_(perm, perm)])
            and np.array_equal(self.noise_variances, other.noise_variances[perm])
            and np.array_equal(self.intercepts, other.intercepts[perm])
            and self.deterministic == other.deterministic
        )

    __hash__ = None


def simulate(sem: LinearSem, n: int, seed: int) -> pd.DataFrame:
    """Draw ``n`` i.i.d. rows, generating variables in topological order."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    p = len(sem.nodes)
    noise = rng.standard_normal((n, p)) * np.sqrt(sem.noise_variances)
    x = np.zeros((n, p))
    idx = sem.index
    for v in topological_order(sem.dag):
        k = idx[v]
        x[:, k] = sem.intercepts[k] + x @ sem.weights[:, k] + noise[:, k]
    return pd.DataFrame(x, columns=list(sem.nodes))


def _mixing(sem: LinearSem) -> np.ndarray:
    # x = A (eps + c) with A = (I - W^T)^{-1}
    p = len(sem.nodes)
    return np.linalg.inv(np.eye(p) - sem.weights.T)


def true_covariance(sem: LinearSem) -> pd.DataFrame:
    a = _mixing(sem)
    cov = a @ np.diag(sem.noise_variances) @ a.T
    cov = (cov + cov.T) / 2
    return pd.DataFrame(cov, index=list(sem.nodes), columns=list(sem.nodes))


def interventional_mean(sem: LinearSem) -> pd.Series:
    return pd.Series(_mixing(sem) @ sem.intercepts, index=list(sem.nodes))


def do_intervention(sem: LinearSem, targets: Iterable[tuple]) -> LinearSem:
    """Replace each target's equation by a constant.

    Edges into the targets are dropped, their noise variance becomes 0 and
    the node is recorded in ``deterministic``. All other equations are kept.
    """
    targets = list(targets)
    names = [t for t, _ in targets]
    if len(set(names)) != len(names):
        raise ValueError("duplicate intervention targets")
    idx = sem.index
    for t in names:
        if t not in idx:
            raise GraphError(f"unknown node {t!r}")
    w = sem.weights.copy()
    var = sem.noise_variances.copy()
    c = sem.intercepts.copy()
    for t, value in targets:
        k = idx[t]
        w[:, k] = 0.0
        var[k] = 0.0
        c[k] = float(value)
    dag = Dag(sem.nodes, [(u, v) for u, v in sem.dag.edges if v not in names])
    return LinearSem(dag, w, var, c, sem.deterministic | frozenset(names))


def total_effect_paths(sem: LinearSem, x: str, y: str, blocked=()) -> float:
    """Sum over directed x -> y paths avoiding ``blocked`` of the weight products."""
    if x == y:
        raise ValueError("x and y must differ")
    blocked = set(blocked)
    if x in blocked or y in blocked:
        raise ValueError("x and y may not be blocked")
    idx = sem.index
    dag = sem.dag
    memo = {}

    def from_node(v):
        if v == y:
            return 1.0
        if v not in memo:
            memo[v] = sum(
                sem.weights[idx[v], idx[c]] * from_node(c)
                for c in sorted(dag.children(v))
                if c not in blocked
            )
        return memo[v]

    return float(from_node(x))


def _solve(cov: np.ndarray, rows: list, target: int) -> np.ndarray:
    sub = cov[np.ix_(rows, rows)]
    if np.linalg.cond(sub) > COND_LIMIT:
        raise DegenerateInputError("singular covariance submatrix")
    return np.linalg.solve(sub, cov[rows, target])


def total_effect_adjusted(cov: pd.DataFrame, x: str, y: str, adjust=()) -> float:
    """Coefficient of ``x`` in the population regression of ``y`` on ``{x} | adjust``.

    If ``y`` is itself in ``adjust`` (a parent of ``x``), the effect is 0.
    """
    adjust = sorted(set(adjust))
    if x in adjust:
        raise ValueError("x cannot be in the adjustment set")
    if y == x:
        raise ValueError("x and y must differ")
    if y in adjust:
        return 0.0
    labels = list(cov.columns)
    pos = {v: k for k, v in enumerate(labels)}
    for v in [x, y, *adjust]:
        if v not in pos:
            raise GraphError(f"unknown node {v!r}")
    beta = _solve(cov.to_numpy(), [pos[x]] + [pos[a] for a in adjust], pos[y])
    return float(beta[0])


def fit_linear_sem(dag: Dag, cov: pd.DataFrame) -> LinearSem:
    """Recover weights and noise variances by regressing each node on its parents."""
    labels = list(dag.nodes)
    c = cov.loc[labels, labels].to_numpy()
    p = len(labels)
    w = np.zeros((p, p))
    var = np.zeros(p)
    for k, v in enumerate(labels):
        pa = [labels.index(u) for u in sorted(dag.parents(v))]
        if pa:
            beta = _solve(c, pa, k)
            w[pa, k] = beta
            var[k] = c[k, k] - c[k, pa] @ beta
        else:
            var[k] = c[k, k]
    if np.any(var <= 0):
        raise DegenerateInputError("nonpositive residual variance")
    return LinearSem(dag, w, var)


def random_dag(p: int, density: float, rng: np.random.Generator, labels=None) -> Dag:
    """Ordered edge-inclusion model.

    Nodes get a random causal order; each pair earlier -> later is an edge
    independently with probability ``density``.
    """
    if labels is None:
        labels = [f"X{k + 1}" for k in range(p)]
    perm = rng.permutation(p)
    order = [labels[k] for k in perm]
    include = rng.random((p, p)) < density
    edges = [
        (order[i], order[j]) for i in range(p) for j in range(i + 1, p) if include[i, j]
    ]
    return Dag(labels, edges)


def random_sem(
    p: int,
    density: float,
    rng: np.random.Generator,
    weight_range=(0.5, 2.0),
    variance_range=(0.5, 1.5),
    labels=None,
) -> LinearSem:
    """Random DAG with weights uniform on +-[0.5, 2] and noise variances on [0.5, 1.5]."""
    dag = random_dag(p, density, rng, labels)
    idx = {v: k for k, v in enumerate(dag.nodes)}
    w = np.zeros((p, p))
    for u, v in sorted(dag.edges):
        w[idx[u], idx[v]] = rng.choice([-1.0, 1.0]) * rng.uniform(*weight_range)
    var = rng.uniform(*variance_range, size=p)
    return LinearSem(dag, w, var)


def density_for_degree(p: int, degree: float) -> float:
    """Edge probability giving expected neighbourhood size ``degree``."""
    if p < 2:
        return 0.0
    return min(1.0, degree / (p - 1))


def sem_to_json(sem: LinearSem) -> dict:
    obj = graph_to_json(sem.dag)
    obj["weights"] = [
        {"from": u, "to": v, "w": sem.weight(u, v)} for u, v in sem.dag.sorted_directed()
    ]
    obj["noise_variances"] = {
        v: float(x) for v, x in zip(sem.nodes, sem.noise_variances)
    }
    if np.any(sem.intercepts != 0):
        obj["intercepts"] = {v: float(x) for v, x in zip(sem.nodes, sem.intercepts)}
    if sem.deterministic:
        obj["deterministic"] = sorted(sem.deterministic)
    return obj


def sem_from_json(obj: dict) -> LinearSem:
    dag = graph_from_json(obj)
    if not isinstance(dag, Dag):
        raise GraphError("SEM graph must be fully directed")
    idx = {v: k for k, v in enumerate(dag.nodes)}
    p = len(dag.nodes)
    w = np.zeros((p, p))
    given = set()
    for e in obj.get("weights", []):
        w[idx[e["from"]], idx[e["to"]]] = float(e["w"])
        given.add((e["from"], e["to"]))
    if given != set(dag.edges):
        raise GraphError("weights must list exactly the edges of the graph")
    nv = obj["noise_variances"]
    var = np.array([float(nv[v]) for v in dag.nodes])
    c = obj.get("intercepts")
    c = None if c is None else np.array([float(c.get(v, 0.0)) for v in dag.nodes])
    return LinearSem(dag, w, var, c, frozenset(obj.get("deterministic", [])))
