"""Digital-twin synchronization scheduling and placement."""

from ._dtsync import (
    Action,
    ConfigError,
    InvalidParameter,
    MdpSpec,
    NonConvergence,
    PolicyTable,
    SolverFailure,
    TrainingFailure,
    __version__,
    average_cost_of,
    cmd_deploy,
    cmd_experiment,
    cmd_simulate,
    cmd_solve,
    default_config,
    deployment_baselines,
    enumerate_policies,
    figure_ids,
    simulate,
    solve,
    threshold_for,
    transitions,
    uniform_policy,
    validate_config,
    value_iteration,
)

__all__ = [
    "Action",
    "ConfigError",
    "InvalidParameter",
    "MdpSpec",
    "NonConvergence",
    "PolicyTable",
    "SolverFailure",
    "TrainingFailure",
    "__version__",
    "average_cost_of",
    "cmd_deploy",
    "cmd_experiment",
    "cmd_simulate",
    "cmd_solve",
    "default_config",
    "deployment_baselines",
    "enumerate_policies",
    "figure_ids",
    "simulate",
    "solve",
    "threshold_for",
    "transitions",
    "uniform_policy",
    "validate_config",
    "value_iteration",
]
