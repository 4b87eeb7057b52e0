"""Hypotheses, losses and the empirical objective with its gradient."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import Dataset
from .errors import EvaluationFault

log = logging.getLogger(__name__)

EXP_CLAMP = 700.0


def quadratic_loss(pred, y):
    return (pred - y) ** 2


def quadratic_loss_grad(pred, y):
    return 2.0 * (pred - y)


@dataclass(frozen=True)
class ModelSpec:
    """A parametric hypothesis paired with a pointwise loss.

    ``predict(theta, x)`` maps an ``(m, q)`` input block to ``m`` predictions
    and ``jacobian(theta, x)`` returns their ``(m, p)`` partials. ``lower`` and
    ``upper`` are box bounds on theta; ``None`` means unbounded.
    """

    name: str
    p: int
    predict: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray, np.ndarray], np.ndarray]
    loss: Callable = quadratic_loss
    loss_grad: Callable = quadratic_loss_grad
    lower: tuple[float, ...] | None = None
    upper: tuple[float, ...] | None = None
    param_names: tuple[str, ...] = ()
    initial_guess: Callable[[Dataset], np.ndarray] | None = None

    def project(self, theta: np.ndarray) -> np.ndarray:
        if self.lower is None and self.upper is None:
            return theta
        lo = -np.inf if self.lower is None else np.asarray(self.lower)
        hi = np.inf if self.upper is None else np.asarray(self.upper)
        return np.clip(theta, lo, hi)

    def theta0(self, data: Dataset) -> np.ndarray:
        if self.initial_guess is None:
            return np.zeros(self.p)
        return np.asarray(self.initial_guess(data), dtype=float)


def _check_theta(model: ModelSpec, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.p,):
        raise ValueError(f"{model.name} expects {model.p} parameters, got shape {theta.shape}")
    return theta


def objective(model: ModelSpec, theta, data: Dataset) -> float:
    """Mean loss of the model at ``theta`` over ``data``."""
    theta = _check_theta(model, theta)
    pred = model.predict(theta, data.x)
    if not np.isfinite(pred).all():
        raise EvaluationFault(f"non-finite prediction from {model.name}", theta)
    return float(np.mean(model.loss(pred, data.y)))


def analytic_gradient(model: ModelSpec, theta, data: Dataset) -> np.ndarray:
    return np.mean(pointwise_gradients(model, theta, data), axis=0)


def pointwise_gradients(model: ModelSpec, theta, data: Dataset) -> np.ndarray:
    """``(d, p)`` per-point loss gradients; their mean is the objective's gradient."""
    theta = _check_theta(model, theta)
    pred = model.predict(theta, data.x)
    if not np.isfinite(pred).all():
        raise EvaluationFault(f"non-finite prediction from {model.name}", theta)
    contrib = model.loss_grad(pred, data.y)[:, None] * model.jacobian(theta, data.x)
    if not np.isfinite(contrib).all():
        raise EvaluationFault(f"non-finite gradient from {model.name}", theta)
    return contrib


def finite_difference_gradient(model: ModelSpec, theta, data: Dataset, step: float = 1e-6) -> np.ndarray:
    """Central differences with per-coordinate step ``step * max(1, |theta_i|)``."""
    if step <= 0:
        raise ValueError("finite-difference step must be positive")
    theta = _check_theta(model, theta)
    grad = np.empty(model.p)
    for i in range(model.p):
        h = step * max(1.0, abs(theta[i]))
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (objective(model, up, data) - objective(model, down, data)) / (up[i] - down[i])
    return grad


# --- logistic law -----------------------------------------------------------


def _decay(r, t):
    arg = -r * t
    if abs(r) * np.abs(t).max(initial=0.0) > EXP_CLAMP:
        log.warning("clamping exp argument of logistic law to +/-%g (r=%r)", EXP_CLAMP, float(r))
        arg = np.clip(arg, -EXP_CLAMP, EXP_CLAMP)
    return np.exp(arg)


def logistic_predict(params, t):
    """``N0*Ne / (N0 + (Ne - N0) * exp(-r t))``, elementwise in ``t``."""
    n0, ne, r = params
    t = np.asarray(t, dtype=float)
    denom = n0 + (ne - n0) * _decay(r, t)
    if not denom.all():
        raise EvaluationFault("logistic denominator vanished", np.array([n0, ne, r]))
    return n0 * ne / denom


def _logistic_jacobian(theta, x):
    n0, ne, r = theta
    t = x[:, 0]
    e = _decay(r, t)
    denom = n0 + (ne - n0) * e
    inv2 = 1.0 / denom**2
    return np.column_stack(
        [
            ne * ne * e * inv2,
            n0 * n0 * (1.0 - e) * inv2,
            n0 * ne * (ne - n0) * t * e * inv2,
        ]
    )


def logistic_initial_guess(data: Dataset) -> np.ndarray:
    """``N0 = 1``, ``r = 0.5``, and ``Ne`` = mean response over the last quarter of the time range.

    The plateau mean is used instead of the maximum, which noise biases upwards.
    """
    t = data.x[:, 0]
    late = data.y[t >= t.min() + 0.75 * (t.max() - t.min())]
    return np.array([1.0, max(float(late.mean()), 1e-9), 0.5])


LOGISTIC = ModelSpec(
    name="logistic",
    p=3,
    predict=lambda theta, x: logistic_predict(theta, x[:, 0]),
    jacobian=_logistic_jacobian,
    lower=(1e-9, 1e-9, -np.inf),
    param_names=("N0", "Ne", "r"),
    initial_guess=logistic_initial_guess,
)


def constant_model() -> ModelSpec:
    """``h(x) = theta``; with quadratic loss on ``{(x, c)}`` this is ``(theta - c)^2``."""
    return ModelSpec(
        name="constant",
        p=1,
        predict=lambda theta, x: np.full(x.shape[0], theta[0]),
        jacobian=lambda theta, x: np.ones((x.shape[0], 1)),
        param_names=("theta",),
        initial_guess=lambda data: np.zeros(1),
    )


MODELS: dict[str, ModelSpec] = {"logistic": LOGISTIC, "constant": constant_model()}


def register(model: ModelSpec) -> None:
    MODELS[model.name] = model


def get_model(name: str) -> ModelSpec:
    try:
        return MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; known: {sorted(MODELS)}") from None
