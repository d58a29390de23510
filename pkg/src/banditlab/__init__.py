"""Bandit multiclass classification via log-barrier FTRL over a finite policy class."""

from .core import (
    BanditLabError,
    ConfigError,
    EnvError,
    InputError,
    LossVector,
    PolicyTable,
    ProtocolError,
    RoundRecord,
    RunResult,
    SimplexPoint,
    policy_cost_vector,
    shift_multiclass_loss,
)
from .environments import (
    AdversarialScript,
    HardInstanceSpec,
    StochasticMulticlassSpec,
    build_hard_class,
    hard_instance_expected_rewards,
    hard_instance_step,
    script_step,
    stochastic_step,
    validate_sparsity,
)
from .harness import (
    AggregateResult,
    ExperimentConfig,
    best_fixed_hypothesis,
    run_batch,
    run_episode,
    theoretical_bound,
)
from .learners import EXP4, LBFTRL, HyperParams, exp4_new, induced_action_dist, lbftrl_new
from .solver import SolveReport, SolverConfig, SolverError, ftrl_objective, kkt_residual, oracle_solve, solve_ftrl

__version__ = "0.1.0"
