"""Optimal control of Markov jump linear systems, model-based and model-free."""

from .errors import *  # noqa: F401,F403
from .model import (
    CostWeights,
    MjlsModel,
    MjlsPlant,
    NoiseSpec,
    StepRecord,
    Trajectory,
    monte_carlo_rollouts,
    random_model,
    sample_mode_path,
    sample_next_mode,
    simulate,
    split_streams,
    stationary_distribution,
    step,
    two_mode_benchmark,
    validate_model,
)
from .qlearn import (
    LearningConfig,
    LearningReport,
    P_from_kernel,
    bar_H_from_H,
    bar_z,
    build_regression,
    collect,
    estimate_dataset_length,
    gain_from_kernel,
    H_from_bar_H,
    kernel_from_model,
    ls_solve,
    q_learning,
)
from .riccati import (
    RiccatiSolution,
    care_residual,
    expectation_operator,
    gain_from_P,
    ms_stability_radius,
    optimal_cost,
    value_iteration,
)

__version__ = "0.1.0"
