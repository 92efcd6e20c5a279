"""Model selection for domain generalization.

Scores training checkpoints by a convex combination of validation
cross-entropy and cross-domain MMD, selects models through a percentile
pre-filter, and numerically verifies the risk/discrepancy trade-off curve
properties on finite problems.
"""
from ._backend import BACKEND_NAME
from .errors import (
    ConfigurationError,
    ConvergenceError,
    DGSelectError,
    InputError,
    InsufficientDomainsError,
    ParseError,
)
from .metrics import (
    DEFAULT_GAMMAS,
    FeatureBatch,
    KernelConfig,
    accuracy,
    cross_entropy,
    mmd_biased,
    multi_gamma_kernel,
    pairwise_domain_mmd,
    squared_euclidean_distances,
)
from .selection import (
    CheckpointRecord,
    MethodComparison,
    RunRecord,
    SelectionConfig,
    SelectionResult,
    compare_methods,
    group_runs,
    percentile_filter,
    select_ours,
    select_traditional,
    validation_loss,
)
from .tradeoff import (
    Channel,
    DiscreteDGProblem,
    TheoremReport,
    TradeoffCurve,
    TradeoffPoint,
    check_theorem1,
    classification_risk,
    discrepancy_kl,
    joint_yz,
    load_problem,
    minimize_scalarized,
    mix_channels,
    tradeoff_bruteforce,
    tradeoff_solver,
    write_curve_csv,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "DEFAULT_GAMMAS",
    "Channel",
    "CheckpointRecord",
    "ConfigurationError",
    "ConvergenceError",
    "DGSelectError",
    "DiscreteDGProblem",
    "FeatureBatch",
    "InputError",
    "InsufficientDomainsError",
    "KernelConfig",
    "MethodComparison",
    "ParseError",
    "RunRecord",
    "SelectionConfig",
    "SelectionResult",
    "TheoremReport",
    "TradeoffCurve",
    "TradeoffPoint",
    "accuracy",
    "check_theorem1",
    "classification_risk",
    "compare_methods",
    "cross_entropy",
    "discrepancy_kl",
    "group_runs",
    "joint_yz",
    "load_problem",
    "minimize_scalarized",
    "mix_channels",
    "mmd_biased",
    "multi_gamma_kernel",
    "pairwise_domain_mmd",
    "percentile_filter",
    "select_ours",
    "select_traditional",
    "squared_euclidean_distances",
    "tradeoff_bruteforce",
    "tradeoff_solver",
    "validation_loss",
    "write_curve_csv",
]
