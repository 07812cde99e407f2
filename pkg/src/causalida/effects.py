"""Multisets of possible total effects when only the CPDAG is known.

Single interventions (IDA) are handled locally, from the CPDAG around the
intervention node, or globally by enumerating the equivalence class. Joint
interventions are computed per class member by modified Cholesky
decomposition (MCD) or by recursive composition of single effects (RRC).
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import pandas as pd

from .graphs import Dag, GraphError, Pdag, dag_to_cpdag, enumerate_dags_in_class, some_extension, topological_order
from .sem import COND_LIMIT, DegenerateInputError, LinearSem, fit_linear_sem, total_effect_adjusted, total_effect_paths

__all__ = [
    "EffectMultiset",
    "ida_local",
    "ida_global",
    "joint_effect_per_dag",
    "jointida_mcd",
    "jointida_rrc",
    "mcd_effect",
    "rrc_effect",
    "DEFAULT_MAX_DAGS",
]

DEFAULT_MAX_DAGS = 10_000
ROUND = 9


def _key(value):
    if isinstance(value, tuple):
        return tuple(round(v, ROUND) + 0.0 for v in value)
    return round(value, ROUND) + 0.0


@dataclass
class EffectMultiset:
    """Possible effects of intervening on ``targets`` on ``y``.

    ``values`` holds floats for single interventions and tuples (one entry
    per target) for joint ones. ``parent_sets[k]`` is the parent set, or
    tuple of parent sets, that produced ``values[k]``.
    """

    targets: tuple
    y: str
    values: list
    provenance: str
    parent_sets: list = field(default_factory=list)

    def __post_init__(self):
        if not self.values:
            raise ValueError("an effect multiset cannot be empty")

    def distinct(self) -> list:
        return sorted(set(_key(v) for v in self.values))

    def multiplicities(self) -> Counter:
        return Counter(_key(v) for v in self.values)

    def __contains__(self, value) -> bool:
        return _key(value) in set(self.distinct())

    def min_abs(self) -> float:
        """Smallest absolute value (per-entry minimum for vectors)."""
        arr = np.abs(np.asarray(self.values, dtype=float))
        return float(arr.min())

    def to_dict(self) -> dict:
        def enc(v):
            return list(v) if isinstance(v, tuple) else v

        def enc_ps(ps):
            if isinstance(ps, tuple):
                return [sorted(p) for p in ps]
            return sorted(ps)

        counts = self.multiplicities()
        return {
            "targets": list(self.targets),
            "y": self.y,
            "provenance": self.provenance,
            "distinct": [enc(v) for v in self.distinct()],
            "multiplicities": [counts[v] for v in self.distinct()],
            "values": [enc(v) for v in self.values],
            "parent_sets": [enc_ps(p) for p in self.parent_sets],
        }


def _check_nodes(c: Pdag, *nodes):
    for v in nodes:
        if v not in c.nodes:
            raise GraphError(f"unknown node {v!r}")


def _validate_cpdag(c: Pdag):
    if dag_to_cpdag(some_extension(c)) != c:
        raise GraphError("input is not a CPDAG")


def ida_local(c: Pdag, cov: pd.DataFrame, x: str, y: str, validate: bool = True) -> EffectMultiset:
    """One effect per locally valid parent set of ``x``.

    A subset ``S`` of the undirected neighbours of ``x`` is locally valid
    when its members are pairwise adjacent, i.e. orienting ``S -> x`` adds no
    unshielded collider at ``x``.
    """
    _check_nodes(c, x, y)
    if x == y:
        raise ValueError("x and y must differ")
    if validate:
        _validate_cpdag(c)
    pa = c.parents(x)
    ne = sorted(c.neighbors(x))
    values, sets = [], []
    for k in range(len(ne) + 1):
        for s in itertools.combinations(ne, k):
            if all(c.is_adjacent(a, b) for a, b in itertools.combinations(s, 2)):
                adjust = pa | set(s)
                values.append(total_effect_adjusted(cov, x, y, adjust))
                sets.append(frozenset(adjust))
    return EffectMultiset((x,), y, values, "local", sets)


def ida_global(
    c: Pdag, cov: pd.DataFrame, x: str, y: str, max_dags: int | None = DEFAULT_MAX_DAGS
) -> EffectMultiset:
    """One effect per member DAG, adjusting for that DAG's parents of ``x``."""
    _check_nodes(c, x, y)
    if x == y:
        raise ValueError("x and y must differ")
    values, sets = [], []
    for d in enumerate_dags_in_class(c, max_dags):
        pa = d.parents(x)
        values.append(total_effect_adjusted(cov, x, y, pa))
        sets.append(pa)
    return EffectMultiset((x,), y, values, "enumeration", sets)


def joint_effect_per_dag(model, targets: Sequence[str], y: str) -> tuple:
    """Joint effect vector via path sums in the truncated graph.

    ``model`` is a :class:`LinearSem` or a ``(dag, cov)`` pair; in the
    latter case weights are first recovered by regressing each node on its
    parents. Entry ``k`` sums weight products over directed paths from
    ``targets[k]`` to ``y`` that avoid every other target.
    """
    sem = model if isinstance(model, LinearSem) else fit_linear_sem(*model)
    targets = list(targets)
    _check_targets(sem.dag, targets, y)
    out = []
    for k, t in enumerate(targets):
        others = targets[:k] + targets[k + 1:]
        out.append(total_effect_paths(sem, t, y, blocked=others))
    return tuple(out)


def _check_targets(g: Pdag, targets, y):
    _check_nodes(g, y, *targets)
    if not targets:
        raise ValueError("at least one target is required")
    if len(set(targets)) != len(targets):
        raise ValueError("duplicate targets")
    if y in targets:
        raise ValueError("y cannot be an intervention target")


def _unit_lower(s: np.ndarray):
    # s = L diag(d) L^T with L unit lower triangular
    try:
        chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        raise DegenerateInputError("covariance is not positive definite") from None
    diag = np.diag(chol)
    return chol / diag, diag**2


def mcd_effect(dag: Dag, cov: pd.DataFrame, targets: Sequence[str], y: str) -> tuple:
    """Joint effect for one DAG by modifying Cholesky factors.

    For each target in turn the covariance is ordered as (parents, target,
    rest), factored into unit-triangular regression coefficients and
    residual variances, the target's coefficients on its parents are set to
    zero, and the covariance is recomposed. The effects are the coefficients
    of ``y`` regressed on the targets in the final covariance.
    """
    labels = list(dag.nodes)
    s = cov.loc[labels, labels].to_numpy(dtype=float)
    pos = {v: k for k, v in enumerate(labels)}
    for t in targets:
        pa = sorted(dag.parents(t))
        if not pa:
            continue
        head = [pos[u] for u in pa] + [pos[t]]
        perm = head + [k for k in range(len(labels)) if k not in head]
        lower, d = _unit_lower(s[np.ix_(perm, perm)])
        b = np.eye(len(perm)) - np.linalg.inv(lower)
        b[len(pa), :len(pa)] = 0.0
        a = np.linalg.inv(np.eye(len(perm)) - b)
        mod = a @ np.diag(d) @ a.T
        inv = np.argsort(perm)
        s = mod[np.ix_(inv, inv)]
    tk = [pos[t] for t in targets]
    sub = s[np.ix_(tk, tk)]
    if np.linalg.cond(sub) > COND_LIMIT:
        raise DegenerateInputError("singular interventional covariance")
    return tuple(float(v) for v in np.linalg.solve(sub, s[tk, pos[y]]))


def rrc_effect(dag: Dag, cov: pd.DataFrame, targets: Sequence[str], y: str) -> tuple:
    """Joint effect for one DAG from single-intervention effects.

    With ``m`` the target latest in topological order, no other target is a
    descendant of ``m``, so intervening on the rest does not change the
    effect of ``m``; every other target ``k`` loses the part of its effect
    routed through ``m``::

        E(k, r | T) = E(k, r | T - m) - E(k, m | T - m) * E(m, r | {m})

    applied recursively down to single effects, which come from covariate
    adjustment for the DAG's parents.
    """
    rank = {v: k for k, v in enumerate(topological_order(dag))}

    @lru_cache(maxsize=None)
    def single(a, r):
        return total_effect_adjusted(cov, a, r, dag.parents(a))

    @lru_cache(maxsize=None)
    def joint(k, r, group):
        m = max(group, key=rank.__getitem__)
        if m == k:
            return single(k, r)
        rest = group - {m}
        return joint(k, r, rest) - joint(k, m, rest) * single(m, r)

    group = frozenset(targets)
    return tuple(joint(t, y, group) for t in targets)


def _jointida(method, c, cov, targets, y, max_dags, provenance):
    targets = tuple(targets)
    _check_targets(c, targets, y)
    values, sets = [], []
    for d in enumerate_dags_in_class(c, max_dags):
        values.append(method(d, cov, targets, y))
        sets.append(tuple(d.parents(t) for t in targets))
    return EffectMultiset(targets, y, values, provenance, sets)


def jointida_mcd(
    c: Pdag, cov: pd.DataFrame, targets: Sequence[str], y: str, max_dags: int | None = DEFAULT_MAX_DAGS
) -> EffectMultiset:
    return _jointida(mcd_effect, c, cov, targets, y, max_dags, "enumeration")


def jointida_rrc(
    c: Pdag, cov: pd.DataFrame, targets: Sequence[str], y: str, max_dags: int | None = DEFAULT_MAX_DAGS
) -> EffectMultiset:
    return _jointida(rrc_effect, c, cov, targets, y, max_dags, "enumeration")
