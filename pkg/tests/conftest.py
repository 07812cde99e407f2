import numpy as np
import pytest

from causalida.harness import faithfulness_violations
from causalida.sem import LinearSem, density_for_degree, random_sem

EX4_NODES = ["X1", "X2", "X3", "X4"]
EX4_WEIGHTS = {("X4", "X1"): 2.0, ("X4", "X3"): 1.0, ("X1", "X2"): 3.0, ("X2", "X3"): 2.0}


@pytest.fixture
def ex4():
    """Linear SEM with X1 <- 2 X4, X2 <- 3 X1, X3 <- 2 X2 + X4, unit noise."""
    return LinearSem.from_edges(EX4_NODES, EX4_WEIGHTS)


@pytest.fixture
def ex3_dag():
    from causalida.graphs import Dag

    return Dag(["M", "P", "R", "S"], [("M", "P"), ("M", "R"), ("P", "S"), ("S", "R")])


def faithful_sems(count, seed, p_range=(3, 8), degree=3.0):
    """Yield ``count`` random SEMs that pass the oracle faithfulness screen."""
    rng = np.random.default_rng(seed)
    made = 0
    while made < count:
        p = int(rng.integers(p_range[0], p_range[1] + 1))
        sem = random_sem(p, density_for_degree(p, degree), rng)
        if faithfulness_violations(sem):
            continue
        made += 1
        yield sem
