"""Structure learning: SGS, PC, PC-stable and GES with a Gaussian BIC score."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .graphs import (
    BudgetExceeded,
    Dag,
    Pdag,
    _Orienter,
    _reaches,
    dag_to_cpdag,
    iter_class_members,
    meek_closure,
)
from .indep import CiDecider
from .sem import COND_LIMIT, DegenerateInputError

__all__ = [
    "SepsetMap",
    "RunReport",
    "sgs_skeleton",
    "pc_skeleton",
    "pc_stable_skeleton",
    "orient_colliders",
    "meek_closure",
    "pc",
    "GaussianBic",
    "local_score",
    "ges",
]

logger = logging.getLogger(__name__)

SGS_MAX_NODES = 12
GES_TOL = 1e-10


class SepsetMap(dict):
    """Unordered node pair -> first separating set found (a frozenset)."""

    def record(self, i, j, s):
        self[frozenset((i, j))] = frozenset(s)

    def sepset(self, i, j):
        return self.get(frozenset((i, j)))


@dataclass
class RunReport:
    algorithm: str = ""
    ci_tests: int = 0
    max_level: int = -1
    removed_per_level: dict = field(default_factory=dict)
    conflicts: list = field(default_factory=list)
    ges_moves: list = field(default_factory=list)
    truncated_classes: int = 0

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "ci_tests": self.ci_tests,
            "max_level": self.max_level,
            "removed_per_level": {str(k): v for k, v in sorted(self.removed_per_level.items())},
            "conflicts": self.conflicts,
            "ges_moves": self.ges_moves,
            "truncated_classes": self.truncated_classes,
        }


def _complete(nodes) -> dict:
    return {v: set(nodes) - {v} for v in nodes}


def _to_skeleton(nodes, adj) -> Pdag:
    return Pdag(nodes, undirected=[(u, v) for u in nodes for v in adj[u] if u < v])


def sgs_skeleton(d: CiDecider, nodes: Sequence[str]):
    """Remove i - j iff some subset of the other nodes separates them.

    Exponential in the number of nodes; meant as a reference.
    """
    nodes = list(nodes)
    if len(nodes) > SGS_MAX_NODES:
        raise BudgetExceeded(f"SGS limited to {SGS_MAX_NODES} nodes")
    labels = sorted(nodes)
    adj = _complete(labels)
    seps = SepsetMap()
    for i, j in itertools.combinations(labels, 2):
        rest = [v for v in labels if v not in (i, j)]
        found = _first_separator(
            d, i, j, (s for k in range(len(rest) + 1) for s in itertools.combinations(rest, k))
        )
        if found is not None:
            adj[i].discard(j)
            adj[j].discard(i)
            seps.record(i, j, found)
    return _to_skeleton(nodes, adj), seps


def _first_separator(d, i, j, subsets):
    for s in subsets:
        if d.decide(i, j, s):
            return s
    return None


def _any_testable(adj, level) -> bool:
    return any(len(adj[i]) - 1 >= level for i in adj if adj[i])


def pc_skeleton(
    d: CiDecider,
    nodes: Sequence[str],
    order: Sequence[str] | None = None,
    max_cond: int | None = None,
    report: RunReport | None = None,
):
    """Classic PC skeleton search.

    Pairs and conditioning sets are visited in ``order`` and an edge is
    deleted as soon as an independence is found, so later tests at the same
    level see the smaller graph. Output may depend on ``order``.
    """
    order = list(order) if order is not None else list(nodes)
    if sorted(order) != sorted(nodes):
        raise ValueError("order must be a permutation of nodes")
    rank = {v: k for k, v in enumerate(order)}
    adj = _complete(order)
    seps = SepsetMap()
    level = 0
    while _any_testable(adj, level) and (max_cond is None or level <= max_cond):
        removed = 0
        for i, j in itertools.combinations(order, 2):
            if j not in adj[i]:
                continue
            for a, b in ((i, j), (j, i)):
                cands = sorted(adj[a] - {b}, key=rank.__getitem__)
                found = _first_separator(d, i, j, itertools.combinations(cands, level))
                if found is not None:
                    adj[i].discard(j)
                    adj[j].discard(i)
                    seps.record(i, j, found)
                    removed += 1
                    break
        if report is not None:
            report.removed_per_level[level] = removed
            report.max_level = level
        level += 1
    return _to_skeleton(list(nodes), adj), seps


def pc_stable_skeleton(
    d: CiDecider,
    nodes: Sequence[str],
    max_cond: int | None = None,
    report: RunReport | None = None,
):
    """Order-independent PC skeleton.

    Adjacency sets are frozen at the start of each level and the level's
    deletions are applied together at its end. Pairs and conditioning sets
    are visited in label order, so sepsets do not depend on any input order
    either.
    """
    labels = sorted(nodes)
    adj = _complete(labels)
    seps = SepsetMap()
    level = 0
    while _any_testable(adj, level) and (max_cond is None or level <= max_cond):
        frozen = {v: sorted(a) for v, a in adj.items()}
        removals = []
        for i, j in itertools.combinations(labels, 2):
            if j not in adj[i]:
                continue
            for a, b in ((i, j), (j, i)):
                cands = [v for v in frozen[a] if v != b]
                found = _first_separator(d, i, j, itertools.combinations(cands, level))
                if found is not None:
                    removals.append((i, j, found))
                    break
        for i, j, s in removals:
            adj[i].discard(j)
            adj[j].discard(i)
            seps.record(i, j, s)
        if report is not None:
            report.removed_per_level[level] = len(removals)
            report.max_level = level
        level += 1
    return _to_skeleton(list(nodes), adj), seps


def orient_colliders(
    skel: Pdag,
    seps: SepsetMap,
    order: Sequence[str] | None = None,
    conflicts: list | None = None,
) -> Pdag:
    """Orient ``i -> k <- j`` for each unshielded triple with ``k`` outside sepset(i, j).

    Triples are visited by middle node, then by pair, in ``order`` (label
    order by default). An edge already directed the other way is never
    overwritten; such conflicts are appended to ``conflicts``.
    """
    order = list(order) if order is not None else sorted(skel.nodes)
    rank = {v: k for k, v in enumerate(order)}
    w = _Orienter(skel)
    for k in order:
        nbrs = sorted(skel.adjacent(k), key=rank.__getitem__)
        for i, j in itertools.combinations(nbrs, 2):
            if skel.is_adjacent(i, j):
                continue
            sep = seps.sepset(i, j)
            if sep is not None and k in sep:
                continue
            for t in (i, j):
                if k in w.ne[t]:
                    w.orient(t, k)
                elif t in w.ch[k]:
                    msg = {"triple": [i, k, j], "kept": [k, t]}
                    logger.debug("collider conflict %s", msg)
                    if conflicts is not None:
                        conflicts.append(msg)
    return w.to_pdag()


def pc(
    d: CiDecider,
    nodes: Sequence[str],
    variant: str = "pc-stable",
    order: Sequence[str] | None = None,
    max_cond: int | None = None,
    report: RunReport | None = None,
) -> Pdag:
    """Skeleton search, collider orientation, then R1-R3 closure.

    ``variant`` is ``"pc"`` (classic, order dependent) or ``"pc-stable"``.
    """
    if report is None:
        report = RunReport()
    report.algorithm = variant
    start = d.call_count
    if variant == "pc":
        skel, seps = pc_skeleton(d, nodes, order, max_cond, report)
        orient_order = order
    elif variant == "pc-stable":
        skel, seps = pc_stable_skeleton(d, nodes, max_cond, report)
        orient_order = None
    else:
        raise ValueError(f"unknown PC variant {variant!r}")
    report.ci_tests = d.call_count - start
    oriented = orient_colliders(skel, seps, orient_order, report.conflicts)
    return meek_closure(oriented)


class GaussianBic:
    """Decomposable Gaussian BIC score.

    ``local_score(v, pa) = loglik(v | pa) - penalty * (|pa| + 1) * log(n) / 2``
    with the log-likelihood of the Gaussian regression of ``v`` on ``pa``
    evaluated from the maximum-likelihood covariance.
    """

    def __init__(self, data: pd.DataFrame, penalty: float = 1.0):
        x = data.to_numpy(dtype=float)
        n, p = x.shape
        if n <= p:
            raise ValueError("BIC needs more samples than variables")
        cov = np.cov(x, rowvar=False, bias=True)
        self._init(pd.DataFrame(np.atleast_2d(cov), index=data.columns, columns=data.columns), n, penalty)

    @classmethod
    def from_covariance(cls, cov: pd.DataFrame, n: int, penalty: float = 1.0) -> "GaussianBic":
        self = cls.__new__(cls)
        self._init(cov, n, penalty)
        return self

    def _init(self, cov, n, penalty):
        if not penalty > 0:
            raise ValueError("penalty must be positive")
        self.labels = list(cov.columns)
        self.pos = {v: k for k, v in enumerate(self.labels)}
        self.cov = cov.to_numpy(dtype=float)
        self.n = n
        self.penalty = penalty
        self._cache = {}

    def local_score(self, v: str, parents: Iterable[str] = ()) -> float:
        parents = frozenset(parents)
        if v in parents:
            raise ValueError("a node cannot be its own parent")
        key = (v, parents)
        if key not in self._cache:
            k = self.pos[v]
            pa = [self.pos[u] for u in sorted(parents)]
            var = self.cov[k, k]
            if pa:
                sub = self.cov[np.ix_(pa, pa)]
                if np.linalg.cond(sub) > COND_LIMIT:
                    raise DegenerateInputError("singular parent covariance")
                var = var - self.cov[k, pa] @ np.linalg.solve(sub, self.cov[pa, k])
            if not var > 0:
                raise DegenerateInputError(f"nonpositive residual variance for {v!r}")
            loglik = -0.5 * self.n * (math.log(2 * math.pi) + math.log(var) + 1)
            self._cache[key] = loglik - self.penalty * (len(pa) + 1) * math.log(self.n) / 2
        return self._cache[key]

    def score(self, dag: Pdag) -> float:
        return sum(self.local_score(v, dag.parents(v)) for v in dag.nodes)


def local_score(s: GaussianBic, v: str, parents=()) -> float:
    return s.local_score(v, parents)


def _members(c: Pdag, cap: int, report: RunReport) -> list:
    out = list(itertools.islice(iter_class_members(c), cap + 1))
    if len(out) > cap:
        report.truncated_classes += 1
        out = out[:cap]
    return out


def _best_move(cands):
    # highest gain; near-ties go to the lexicographically smallest move
    if not cands:
        return None
    top = max(g for g, *_ in cands)
    return min((c for c in cands if c[0] >= top - 1e-9), key=lambda c: c[1:3])


def ges(
    s: GaussianBic,
    nodes: Sequence[str] | None = None,
    max_class: int = 500,
    report: RunReport | None = None,
) -> Pdag:
    """Greedy equivalence search.

    The neighbours of a class are the classes of the DAGs obtained by
    inserting (forward phase) or deleting (backward phase) one edge in some
    member DAG. Members are enumerated explicitly, up to ``max_class`` per
    step. Each phase applies the best-scoring move until no move improves
    the score by more than 1e-10.
    """
    nodes = list(nodes) if nodes is not None else list(s.labels)
    if report is None:
        report = RunReport()
    report.algorithm = "ges"
    cpdag = Pdag(nodes)
    current = s.score(cpdag)

    for phase in ("forward", "backward"):
        while True:
            cands = []
            for d in _members(cpdag, max_class, report):
                for mv in _moves(d, phase):
                    u, v = mv
                    pa = d.parents(v)
                    new_pa = pa | {u} if phase == "forward" else pa - {u}
                    gain = s.local_score(v, new_pa) - s.local_score(v, pa)
                    cands.append((gain, u, v, d))
            best = _best_move(cands)
            if best is None or best[0] <= GES_TOL:
                break
            gain, u, v, d = best
            if phase == "forward":
                edges = set(d.edges) | {(u, v)}
            else:
                edges = set(d.edges) - {(u, v)}
            new_dag = Dag(d.nodes, edges)
            cpdag = dag_to_cpdag(new_dag)
            new_score = s.score(new_dag)
            report.ges_moves.append(
                {"phase": phase, "edge": [u, v], "gain": gain, "score": new_score}
            )
            current = new_score
    logger.debug("ges finished with score %.6f after %d moves", current, len(report.ges_moves))
    return cpdag


def _moves(d: Dag, phase: str):
    if phase == "forward":
        ch = {v: d.children(v) for v in d.nodes}
        for u, v in itertools.permutations(sorted(d.nodes), 2):
            if not d.is_adjacent(u, v) and not _reaches(ch, v, u):
                yield u, v
    else:
        yield from d.sorted_directed()
