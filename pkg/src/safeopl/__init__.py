"""Safe off-policy learning for contextual bandits with novel actions.

The package covers the full pipeline: a synthetic logging environment,
off-policy value estimators with a high-confidence lower bound, constrained
policy training, staged deployments that reinvest earned safety margin, and
a reproducible experiment harness.
"""

__version__ = "0.1.0"

from .data import BanditDataset, LoggedSample, split_dataset, subsample
from .environment import (
    Environment,
    EnvironmentConfig,
    LoggingPolicy,
    LoggingPolicySpec,
    build_environment,
    generate_logged_data,
)
from .estimators import (
    HcopeConfig,
    SafetySpec,
    empirical_bernstein_lower_bound,
    hcope_lower_bound,
    on_policy_value,
    ope_clipped_ips,
    ope_dm,
    ope_dr,
    ope_ips,
)
from .learners import (
    LagrangianState,
    TrainConfig,
    naive_safe_exploration,
    train_opg,
    train_safe_opg,
)
from .depsue import DeploymentHistory, DeploymentPlan, run_depsue
from .evaluation import MetricReport, exact_policy_value, metric_report, novelty
from .policy import SoftmaxPolicy, create_policy
from .reward_model import RewardModel, RewardModelConfig, train_reward_model
from .rng import RngStream

__all__ = [
    "BanditDataset",
    "DeploymentHistory",
    "DeploymentPlan",
    "Environment",
    "EnvironmentConfig",
    "HcopeConfig",
    "LagrangianState",
    "LoggedSample",
    "LoggingPolicy",
    "LoggingPolicySpec",
    "MetricReport",
    "RewardModel",
    "RewardModelConfig",
    "RngStream",
    "SafetySpec",
    "SoftmaxPolicy",
    "TrainConfig",
    "build_environment",
    "create_policy",
    "empirical_bernstein_lower_bound",
    "exact_policy_value",
    "generate_logged_data",
    "hcope_lower_bound",
    "metric_report",
    "naive_safe_exploration",
    "novelty",
    "on_policy_value",
    "ope_clipped_ips",
    "ope_dm",
    "ope_dr",
    "ope_ips",
    "run_depsue",
    "split_dataset",
    "subsample",
    "train_opg",
    "train_safe_opg",
]
