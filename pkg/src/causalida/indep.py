"""Conditional independence deciders for Gaussian data.

Two kinds share one interface, ``decide(i, j, s) -> bool`` (True means
independent):

* :class:`FisherZ` tests zero partial correlation on a sample.
* :class:`OracleCI` thresholds exact partial correlations of a known
  covariance matrix.
"""

from __future__ import annotations

import math
import threading

import numpy as np
import pandas as pd
from scipy.stats import norm, spearmanr

from .sem import COND_LIMIT, DegenerateInputError

__all__ = [
    "SampleTooSmallError",
    "partial_correlation",
    "CiDecider",
    "FisherZ",
    "OracleCI",
    "decide",
]

CLAMP = 1 - 1e-12


class SampleTooSmallError(ValueError):
    """n - |s| - 3 <= 0, so the Fisher z statistic is undefined."""


def _pcor(c: np.ndarray, i: int, j: int, s) -> float:
    rows = [i, j, *s]
    sub = c[np.ix_(rows, rows)]
    if len(rows) == 2:
        r = sub[0, 1] / math.sqrt(sub[0, 0] * sub[1, 1])
    else:
        if np.linalg.cond(sub[2:, 2:]) > COND_LIMIT:
            raise DegenerateInputError("singular conditioning submatrix")
        try:
            prec = np.linalg.inv(sub)
        except np.linalg.LinAlgError:
            raise DegenerateInputError("singular submatrix") from None
        r = -prec[0, 1] / math.sqrt(prec[0, 0] * prec[1, 1])
    return float(min(1.0, max(-1.0, r)))


def partial_correlation(corr: pd.DataFrame, i: str, j: str, s=()) -> float:
    """Partial correlation of ``i`` and ``j`` given ``s`` from a correlation
    (or covariance) matrix, via inversion of the ``{i, j} | s`` block."""
    s = list(s)
    if i == j or i in s or j in s:
        raise ValueError("i, j must differ and lie outside s")
    pos = {v: k for k, v in enumerate(corr.columns)}
    return _pcor(corr.to_numpy(), pos[i], pos[j], [pos[v] for v in s])


class CiDecider:
    """Base class holding a labelled matrix and a thread-safe call counter."""

    def __init__(self, matrix: pd.DataFrame):
        self.labels = list(matrix.columns)
        self.pos = {v: k for k, v in enumerate(self.labels)}
        self._m = np.ascontiguousarray(matrix.to_numpy(dtype=float))
        self._lock = threading.Lock()
        self.call_count = 0

    def _count(self):
        with self._lock:
            self.call_count += 1

    def pcor(self, i: str, j: str, s=()) -> float:
        return _pcor(self._m, self.pos[i], self.pos[j], [self.pos[v] for v in s])

    def decide(self, i: str, j: str, s=()) -> bool:
        raise NotImplementedError


class FisherZ(CiDecider):
    """Fisher z test of zero partial correlation.

    Independent iff ``sqrt(n - |s| - 3) * |atanh(r)| <= z_{1 - alpha/2}``.
    With ``rank=True`` the Pearson matrix is replaced by
    ``2 sin(pi/6 * Spearman)``.
    """

    def __init__(self, data: pd.DataFrame, alpha: float = 0.01, rank: bool = False):
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        x = data.to_numpy(dtype=float)
        if rank:
            rho = spearmanr(x).statistic if x.shape[1] > 2 else _spearman2(x)
            corr = 2 * np.sin(np.pi / 6 * np.atleast_2d(rho))
        else:
            corr = np.corrcoef(x, rowvar=False)
        super().__init__(pd.DataFrame(corr, index=data.columns, columns=data.columns))
        self.n = x.shape[0]
        self.alpha = alpha
        self.rank = rank
        self.threshold = float(norm.ppf(1 - alpha / 2))

    @classmethod
    def from_correlation(cls, corr: pd.DataFrame, n: int, alpha: float = 0.01) -> "FisherZ":
        self = cls.__new__(cls)
        CiDecider.__init__(self, corr)
        self.n, self.alpha, self.rank = n, alpha, False
        self.threshold = float(norm.ppf(1 - alpha / 2))
        return self

    def statistic(self, i: str, j: str, s=()) -> float:
        dof = self.n - len(s) - 3
        if dof <= 0:
            raise SampleTooSmallError(f"n={self.n} too small for |s|={len(s)}")
        r = min(CLAMP, max(-CLAMP, self.pcor(i, j, s)))
        return math.sqrt(dof) * abs(math.atanh(r))

    def decide(self, i: str, j: str, s=()) -> bool:
        self._count()
        return self.statistic(i, j, s) <= self.threshold


def _spearman2(x):
    return spearmanr(x[:, 0], x[:, 1]).statistic * np.array([[0, 1], [1, 0]]) + np.eye(2)


class OracleCI(CiDecider):
    """Exact decider: independent iff ``|partial correlation| < tol``."""

    def __init__(self, cov: pd.DataFrame, tol: float = 1e-8):
        if not tol > 0:
            raise ValueError("tol must be positive")
        super().__init__(cov)
        self.tol = tol

    def decide(self, i: str, j: str, s=()) -> bool:
        self._count()
        return abs(self.pcor(i, j, s)) < self.tol


def decide(d: CiDecider, i: str, j: str, s=()) -> bool:
    return d.decide(i, j, s)
