"""Euler-Maruyama steps of the annealed-noise gradient dynamics."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import rng
from .dataset import Dataset
from .errors import EvaluationFault
from .model import ModelSpec, analytic_gradient, pointwise_gradients


@dataclass(frozen=True)
class TimeGrid:
    """Equidistant grid ``tau_n = n * delta`` on ``[0, horizon]``."""

    delta: float
    steps: int

    def __post_init__(self):
        if self.delta < 0 or self.steps < 0:
            raise ValueError("delta and steps must be non-negative")

    @classmethod
    def from_horizon(cls, horizon: float, steps: int) -> "TimeGrid":
        if steps < 1 or horizon <= 0:
            raise ValueError("need horizon > 0 and steps >= 1")
        return cls(horizon / steps, steps)

    @property
    def horizon(self) -> float:
        return self.delta * self.steps

    def tau(self, n: int) -> float:
        return n * self.delta


@dataclass(frozen=True)
class NoiseSchedule:
    """Noise scale ``epsilon / sqrt(log(tau + 2))``, decreasing towards zero."""

    epsilon: float

    def sigma(self, tau: float) -> float:
        return self.epsilon / math.sqrt(math.log(tau + 2.0))


@dataclass(frozen=True)
class ExpertState:
    """Expert ``k``'s current estimate and its private noise stream.

    The generator is shared (not copied) between successive states of the
    same expert, so stepping advances it.
    """

    k: int
    theta: np.ndarray
    noise: np.random.Generator

    @classmethod
    def create(cls, k: int, theta0, seed: int) -> "ExpertState":
        return cls(k, np.array(theta0, dtype=float), rng.stream(seed, rng.EXPERT_NOISE, k))


def gaussian_increment(state: ExpertState, delta: float, p: int) -> np.ndarray:
    """Wiener increment: ``p`` independent N(0, delta) draws from the expert's stream."""
    return state.noise.normal(0.0, math.sqrt(delta), size=p)


def _step_from(base, state, model, subsample, grid, schedule, n):
    if not 0 <= n < grid.steps:
        raise IndexError(f"step index {n} outside [0, {grid.steps})")
    try:
        drift = analytic_gradient(model, base, subsample)
    except EvaluationFault as exc:
        raise EvaluationFault(f"expert {state.k}, step {n}: {exc}") from exc
    theta = base - grid.delta * drift
    if schedule.epsilon != 0.0:
        # skipped entirely when noiseless so the deterministic path stays bit-exact
        theta = theta + schedule.sigma(grid.tau(n + 1)) * gaussian_increment(state, grid.delta, model.p)
    return replace(state, theta=model.project(theta))


def expert_step(state: ExpertState, model: ModelSpec, subsample: Dataset, grid: TimeGrid,
                schedule: NoiseSchedule, n: int) -> ExpertState:
    """Advance an expert from its own estimate."""
    return _step_from(state.theta, state, model, subsample, grid, schedule, n)


def consensus_step(consensus, state: ExpertState, model: ModelSpec, subsample: Dataset,
                   grid: TimeGrid, schedule: NoiseSchedule, n: int) -> ExpertState:
    """Advance an expert from the shared consensus estimate instead of its own."""
    return _step_from(np.asarray(consensus, dtype=float), state, model, subsample, grid, schedule, n)


def bootstrap_counts(indices: np.ndarray, d: int) -> np.ndarray:
    """``counts[k, i]`` = multiplicity of parent point ``i`` in subsample ``k``."""
    counts = np.zeros((indices.shape[0], d))
    for k, row in enumerate(indices):
        np.add.at(counts[k], row, 1.0)
    return counts


def batched_consensus_step(consensus, states: list[ExpertState], model: ModelSpec, parent: Dataset,
                           counts: np.ndarray, grid: TimeGrid, schedule: NoiseSchedule,
                           n: int) -> list[ExpertState]:
    """:func:`consensus_step` for all experts at once.

    Every expert's gradient is taken at the same base point, so the per-point
    contributions are evaluated once on the parent data and combined with the
    bootstrap multiplicities. Agrees with the per-expert path up to summation
    order.
    """
    if not 0 <= n < grid.steps:
        raise IndexError(f"step index {n} outside [0, {grid.steps})")
    base = np.asarray(consensus, dtype=float)
    try:
        contrib = pointwise_gradients(model, base, parent)
    except EvaluationFault as exc:
        raise EvaluationFault(f"step {n}: {exc}") from exc
    drift = (counts @ contrib) / counts.sum(axis=1, keepdims=True)
    out = []
    for state, g in zip(states, drift):
        theta = base - grid.delta * g
        if schedule.epsilon != 0.0:
            theta = theta + schedule.sigma(grid.tau(n + 1)) * gaussian_increment(state, grid.delta, model.p)
        out.append(replace(state, theta=model.project(theta)))
    return out
