"""Regularized solvers for empirical Markov decision processes."""

from .mdp import (
    MdpModel,
    ModelValidationError,
    NonAbsorbingError,
    Policy,
    PriorSpec,
    StartWeights,
    ValueFunction,
    expected_action_rewards,
    load_model,
    policy_reward,
    policy_transition,
    save_model,
)
from .solvers import (
    SolveReport,
    SolverConfig,
    bellman_residual,
    constant_policy,
    objective,
    one_shot_policy,
    one_shot_regularized,
    policy_evaluation,
    solve_l1,
    solve_re,
    solve_shannon,
    solve_unregularized,
    visitation,
)
from .empirical import (
    SamplingConfig,
    SessionLog,
    estimate_from_logs,
    generate_synthetic_logs,
    model_distance,
    sample_transitions,
)
from .experiments import (
    SweepConfig,
    SweepResult,
    evaluate_policy_suite,
    example1_model,
    example2_model,
    run_sample_scaling,
    run_sweep,
)

__version__ = "0.1.0"
