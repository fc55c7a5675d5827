"""Regime-switching differentiable bootstrap particle filtering toolkit.

Simulates switching state-space models, runs the analytic oracle and
multi-model baselines alongside learnable bootstrap filters, and trains
the learnable filters end to end through a built-in reverse-mode autodiff
engine.
"""

from .autodiff import DomainError, Gradient, Tape, TapeError, Var, finite_diff_check
from .dataset import Dataset, generate_dataset, load, save
from .filters import (
    FilterConfig,
    FilterOutput,
    ess,
    multinomial_ancestors,
    normalize_log_weights,
    rs_weight_update,
    run_dbpf,
    run_learned_batch,
    run_mm_pf,
    run_rs_dbpf,
    run_rs_pf,
)
from .neural import (
    NeuralRegimeSet,
    RegimeNet,
    init_params,
    likelihood,
    load_params,
    log_likelihood,
    propose,
    save_params,
)
from .ssm import (
    CandidateModel,
    ModelSuite,
    RegimeDynamics,
    Trajectory,
    emit_observation,
    paper_suite,
    regime_prob,
    simulate,
    step_state,
)
from .training import (
    OptimizerState,
    TrainConfig,
    TrainResult,
    lr_at,
    sgd_momentum_step,
    train,
    trajectory_loss,
)

__version__ = "0.1.0"
