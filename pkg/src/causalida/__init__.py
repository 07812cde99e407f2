"""Causal structure learning and IDA-style effect estimation for linear Gaussian SEMs."""

from .discovery import GaussianBic, RunReport, SepsetMap, ges, pc, pc_skeleton, pc_stable_skeleton, sgs_skeleton
from .effects import EffectMultiset, ida_global, ida_local, joint_effect_per_dag, jointida_mcd, jointida_rrc
from .graphs import (
    BudgetExceeded,
    CycleError,
    Dag,
    GraphError,
    Pdag,
    dag_to_cpdag,
    enumerate_dags_in_class,
    is_d_separated,
    meek_closure,
    skeleton,
    topological_order,
    unshielded_colliders,
)
from .indep import FisherZ, OracleCI, partial_correlation
from .sem import LinearSem, do_intervention, simulate, total_effect_adjusted, total_effect_paths, true_covariance

__version__ = "0.1.0"
