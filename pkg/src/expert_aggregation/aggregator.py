"""Multiplicative-weights mixing over experts and the cumulative-loss bound."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .dataset import Dataset
from .errors import DegenerateWeightsError
from .model import ModelSpec, objective

BOUND_TOL = 1e-9
STEP_REL_TOL = 1e-12
RISK_CEILING = math.nextafter(1.0, 0.0)


def logsumexp(a) -> float:
    a = np.asarray(a, dtype=float)
    top = np.max(a)
    if not np.isfinite(top):
        return float(top)
    return float(top + np.log(np.sum(np.exp(a - top))))


def risk_measure(theta, model: ModelSpec, validation: Dataset, gamma: float) -> float:
    """``1 - exp(-gamma * J)`` for the validation objective ``J``.

    Saturates at the largest double below 1 so huge losses stay inside [0, 1).
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return min(-math.expm1(-gamma * objective(model, theta, validation)), RISK_CEILING)


def mixing_distribution(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise DegenerateWeightsError("all expert weights are zero")
    return w / total


def mixing_from_log(log_weights) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=float)
    if not np.any(np.isfinite(lw)):
        raise DegenerateWeightsError("all expert weights are zero")
    w = np.exp(lw - np.max(lw))
    return w / w.sum()


def consensus(thetas, pi) -> np.ndarray:
    """Mixture-weighted average of the expert estimates (rows of ``thetas``)."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    pi = np.asarray(pi, dtype=float)
    if thetas.shape[0] != pi.shape[0]:
        raise ValueError(f"{thetas.shape[0]} expert estimates but {pi.shape[0]} mixing weights")
    return pi @ thetas


def mixture_loss(pi, risks) -> float:
    return float(np.dot(pi, risks))


def total_loss(ledger: Sequence[float]) -> float:
    return float(math.fsum(ledger))


def _check_risks(risks) -> np.ndarray:
    r = np.asarray(risks, dtype=float)
    # the weight update and its bound hold on the closed interval
    if np.any(~np.isfinite(r)) or np.any(r < 0) or np.any(r > 1):
        raise ValueError(f"risks must lie in [0, 1], got {r}")
    return r


@dataclass
class MixingState:
    """Expert weights (kept as logs), the mixing distribution, and loss ledgers.

    ``log_weights`` accumulate ``r * log(beta)`` so that long runs do not
    underflow; ``sum(omega) = exp(logsumexp(log_weights))``.
    """

    log_weights: np.ndarray
    beta: float
    gamma: float
    risk_history: list = field(default_factory=list)
    loss_ledger: list = field(default_factory=list)
    log_weight_sums: list = field(default_factory=list)
    step_violations: int = 0

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if not self.log_weight_sums:
            self.log_weight_sums.append(logsumexp(self.log_weights))

    @classmethod
    def initial(cls, k: int, beta: float, gamma: float, omega0=None) -> "MixingState":
        """Uniform ``1/K`` weights unless ``omega0`` (non-negative, summing to one) is given."""
        if omega0 is None:
            omega0 = np.full(k, 1.0 / k)
        omega0 = np.asarray(omega0, dtype=float)
        if omega0.shape != (k,) or np.any(omega0 < 0) or abs(omega0.sum() - 1.0) > 1e-12:
            raise ValueError("initial weights must be K non-negative numbers summing to one")
        with np.errstate(divide="ignore"):
            return cls(np.log(omega0), beta, gamma)

    @property
    def k(self) -> int:
        return self.log_weights.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def pi(self) -> np.ndarray:
        return mixing_from_log(self.log_weights)

    @property
    def total(self) -> float:
        return total_loss(self.loss_ledger)

    @property
    def bound(self) -> float:
        return -self.log_weight_sums[-1] / (1.0 - self.beta)


def stepwise_holds(log_sum_before: float, log_sum_after: float, step_loss: float, beta: float) -> bool:
    """``sum(omega') <= sum(omega) * (1 - (1 - beta) * L_n)``, checked in log space."""
    rhs = log_sum_before + math.log1p(-(1.0 - beta) * step_loss)
    return log_sum_after <= rhs + STEP_REL_TOL


def update_weights(state: MixingState, risks) -> MixingState:
    """Record one round of risks and shrink each weight by ``beta ** r``.

    Mutates and returns ``state``.
    """
    r = _check_risks(risks)
    if r.shape != (state.k,):
        raise ValueError(f"expected {state.k} risks, got shape {r.shape}")
    step_loss = mixture_loss(state.pi, r)
    state.log_weights = state.log_weights + r * math.log(state.beta)
    before = state.log_weight_sums[-1]
    after = logsumexp(state.log_weights)
    if not stepwise_holds(before, after, step_loss, state.beta):
        state.step_violations += 1
    state.risk_history.append(r)
    state.loss_ledger.append(step_loss)
    state.log_weight_sums.append(after)
    return state


class BoundReport(NamedTuple):
    bound: float
    total_loss: float
    slack: float
    satisfied: bool


def hedge_bound_check(ledger: Sequence[float], final_weights, beta: float, log_space: bool = False) -> BoundReport:
    """Cumulative mixture loss against ``-log(sum(omega_N)) / (1 - beta)``.

    ``final_weights`` are plain weights, or log-weights when ``log_space``.
    Assumes the initial weights summed to one.
    """
    log_sum = logsumexp(final_weights) if log_space else math.log(float(np.sum(final_weights)))
    bound = -log_sum / (1.0 - beta)
    total = total_loss(ledger)
    slack = bound - total
    return BoundReport(bound, total, slack, slack >= -BOUND_TOL)


def check_state(state: MixingState) -> BoundReport:
    return hedge_bound_check(state.loss_ledger, state.log_weights, state.beta, log_space=True)
