"""Bootstrapped experts running noisy gradient dynamics, fused by multiplicative weights."""

from .aggregator import (
    BoundReport,
    MixingState,
    consensus,
    hedge_bound_check,
    mixing_distribution,
    mixture_loss,
    risk_measure,
    total_loss,
    update_weights,
)
from .dataset import Dataset, SubsampleSet, bootstrap, load_csv, synthetic_logistic
from .driver import AggregationRun, RunConfig, RunResult, check_convergence, emit_outputs, run
from .dynamics import ExpertState, NoiseSchedule, TimeGrid, consensus_step, expert_step, gaussian_increment
from .model import (
    LOGISTIC,
    ModelSpec,
    analytic_gradient,
    constant_model,
    finite_difference_gradient,
    logistic_predict,
    objective,
)

__version__ = "0.1.0"
