from .exact import (
    exact_bridge_loss,
    exact_coaching_gradient,
    exact_kl,
    exact_payoff,
    expected_gbn_gradient,
    expected_reward,
    finite_difference_error,
    lm_constraint,
    network_distribution,
    partition_Z,
    perturbation_sweep,
    relative_error,
    uniform_constraint,
)
from .space import DenseDist, EnumSpace
from .suite import CheckRecord, OracleSuite, run_oracle_suite

__all__ = [
    "exact_bridge_loss",
    "exact_coaching_gradient",
    "exact_kl",
    "exact_payoff",
    "expected_gbn_gradient",
    "expected_reward",
    "finite_difference_error",
    "lm_constraint",
    "network_distribution",
    "partition_Z",
    "perturbation_sweep",
    "relative_error",
    "uniform_constraint",
    "DenseDist",
    "EnumSpace",
    "CheckRecord",
    "OracleSuite",
    "run_oracle_suite",
]
