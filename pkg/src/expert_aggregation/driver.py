"""End-to-end aggregation run: bootstrap, expert dynamics, mixing, outputs."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import rng
from .aggregator import (
    BoundReport,
    MixingState,
    check_state,
    consensus,
    risk_measure,
    update_weights,
)
from .dataset import WITH_REPLACEMENT, Dataset, bootstrap
from .dynamics import (
    ExpertState,
    NoiseSchedule,
    TimeGrid,
    batched_consensus_step,
    bootstrap_counts,
    expert_step,
)
from .errors import ConfigError, EvaluationFault, RunFault
from .model import ModelSpec, get_model, objective

log = logging.getLogger(__name__)

CONSENSUS = "consensus"
PER_EXPERT = "per-expert"
HULL_TOL = 1e-12
SIMPLEX_TOL = 1e-12


@dataclass
class RunConfig:
    """Everything a run needs. Defaults are the logistic experiment's settings."""

    data: str | None = None
    x_cols: tuple[str, ...] = ("0",)
    y_col: str = "1"
    model: str = "logistic"
    experts: int = 25
    subsample_size: int | None = None
    replacement: str = WITH_REPLACEMENT
    seed: int = 0
    steps: int = 100_000
    delta: float = 1e-5
    epsilon: float = 0.001
    gamma: float = 0.01
    beta: float = 0.5
    tol: float = 1e-9
    mode: str = CONSENSUS
    theta0: tuple[float, ...] | None = None
    omega0: str | None = None
    out_dir: str | None = None
    record_experts: bool = False
    checkpoint: str | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        self.x_cols = tuple(str(c) for c in self.x_cols)
        self.y_col = str(self.y_col)
        if self.theta0 is not None:
            self.theta0 = tuple(float(v) for v in self.theta0)

    @property
    def horizon(self) -> float:
        return self.steps * self.delta

    def validate(self) -> "RunConfig":
        problems = []
        if self.experts < 1:
            problems.append("experts must be >= 1")
        if self.steps < 0:
            problems.append("steps must be >= 0")
        if self.delta < 0:
            problems.append("delta must be >= 0")
        if self.epsilon < 0:
            problems.append("epsilon must be >= 0")
        if not self.gamma > 0:
            problems.append("gamma must be > 0")
        if not 0 < self.beta < 1:
            problems.append("beta must lie in (0, 1)")
        if not self.tol > 0:
            problems.append("tol must be > 0")
        if self.subsample_size is not None and self.subsample_size < 1:
            problems.append("subsample-size must be >= 1")
        if self.mode not in (CONSENSUS, PER_EXPERT):
            problems.append(f"mode must be {CONSENSUS!r} or {PER_EXPERT!r}")
        if self.replacement not in ("with", "without"):
            problems.append("replacement must be 'with' or 'without'")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["x_cols"] = list(self.x_cols)
        if self.theta0 is not None:
            out["theta0"] = list(self.theta0)
        return out

    @classmethod
    def from_dict(cls, values: dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        clean = {}
        for key, val in values.items():
            name = key.replace("-", "_")
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            clean[name] = val
        return cls(**clean)


def _coerce(name: str, text: str):
    kind = {f.name: f.type for f in fields(RunConfig)}[name]
    text = text.strip()
    if text.lower() in ("", "none") and "None" in kind:
        return None
    try:
        if name in ("x_cols",):
            return tuple(c.strip() for c in text.split(","))
        if name == "theta0":
            return tuple(float(v) for v in text.split(","))
        if kind.startswith("bool"):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if kind.startswith("int"):
            return int(float(text)) if float(text).is_integer() else int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None
    return text


def parse_config_text(text: str) -> dict[str, Any]:
    """Flat ``key = value`` lines; ``#`` starts a comment. Keys match CLI flag names."""
    known = {f.name for f in fields(RunConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        name = key.lstrip("-").replace("-", "_")
        if name not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[name] = _coerce(name, val)
    return values


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return RunConfig.from_dict(parse_config_text(path.read_text(encoding="utf-8")))


def load_omega0(path, k: int) -> np.ndarray:
    """Initial weights: K numbers separated by commas or whitespace."""
    try:
        vals = np.array(Path(path).read_text().replace(",", " ").split(), dtype=float)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read initial weights from {path}: {exc}") from None
    if vals.shape != (k,):
        raise ConfigError(f"{path} holds {vals.size} weights, expected {k}")
    return vals


def check_convergence(prev, next_, tol: float) -> bool:
    prev = np.asarray(prev, dtype=float)
    next_ = np.asarray(next_, dtype=float)
    if prev.shape != next_.shape:
        raise ValueError(f"shape mismatch: {prev.shape} vs {next_.shape}")
    return bool(np.linalg.norm(next_ - prev) <= tol)


@dataclass
class TrajectoryRecord:
    n: int
    tau: float
    theta_bar: np.ndarray
    pi: np.ndarray
    risks: np.ndarray
    step_loss: float
    total_loss: float
    bound: float
    expert_thetas: np.ndarray | None = None

    def to_json(self) -> dict:
        out = {
            "n": self.n,
            "tau": self.tau,
            "theta_bar": self.theta_bar.tolist(),
            "pi": self.pi.tolist(),
            "risks": self.risks.tolist(),
            "step_loss": self.step_loss,
            "total_loss": self.total_loss,
            "bound": self.bound,
        }
        if self.expert_thetas is not None:
            out["expert_thetas"] = self.expert_thetas.tolist()
        return out

    @classmethod
    def from_json(cls, d: dict) -> "TrajectoryRecord":
        thetas = d.get("expert_thetas")
        return cls(
            d["n"], d["tau"], np.array(d["theta_bar"]), np.array(d["pi"]), np.array(d["risks"]),
            d["step_loss"], d["total_loss"], d["bound"],
            None if thetas is None else np.array(thetas),
        )


@dataclass
class RunResult:
    theta_star: np.ndarray
    records: list[TrajectoryRecord]
    bound: BoundReport
    converged: bool
    steps_done: int
    expert_thetas: np.ndarray
    pi: np.ndarray
    config: RunConfig
    step_violations: int
    invariant_violations: dict[str, int]
    validation_objective: float
    expert_validation_objectives: np.ndarray
    seeds: dict = field(default_factory=dict)


class AggregationRun:
    """Stateful stepper for one run.

    Each call to :meth:`step` performs one round: experts move from the
    current consensus (or from their own estimates in per-expert mode), the
    risks of the estimates they held at the start of the round update the
    weights, and the new consensus is formed.
    """

    def __init__(self, config: RunConfig, data: Dataset, model: ModelSpec | None = None,
                 omega0=None):
        self.config = config.validate()
        self.data = data
        self.model = model or get_model(config.model)
        k = config.experts
        m = config.subsample_size or data.d
        try:
            self.subsamples = bootstrap(data, k + 1, m, config.replacement, config.seed)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self.counts = bootstrap_counts(self.subsamples.indices[:-1], data.d)
        self.grid = TimeGrid(config.delta, config.steps)
        self.schedule = NoiseSchedule(config.epsilon)
        if omega0 is None and config.omega0:
            omega0 = load_omega0(config.omega0, k)
        theta0 = np.asarray(config.theta0 if config.theta0 is not None else self.model.theta0(data), dtype=float)
        if theta0.shape != (self.model.p,):
            raise ConfigError(f"theta0 needs {self.model.p} values for model {self.model.name!r}")
        try:
            self.mixing = MixingState.initial(k, config.beta, config.gamma, omega0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self.experts = [ExpertState.create(j, theta0, config.seed) for j in range(k)]
        self.theta0 = theta0
        self.theta_bar = consensus(self._thetas(), self.mixing.pi)
        self.n = 0
        self.converged = False
        self.records: list[TrajectoryRecord] = []
        self.violations = {"simplex": 0, "weights_increase": 0, "risk_range": 0, "annealing": 0, "hull": 0}

    # -- bookkeeping ---------------------------------------------------------

    @property
    def seeds(self) -> dict:
        return {"seed": self.config.seed, "rng": rng.RNG_ALGORITHM,
                "streams": {"bootstrap": [rng.BOOTSTRAP], "expert_noise": [rng.EXPERT_NOISE, "k"]}}

    @property
    def done(self) -> bool:
        return self.converged or self.n >= self.config.steps

    def _thetas(self) -> np.ndarray:
        return np.stack([e.theta for e in self.experts])

    def _fault(self, exc: Exception, expert: int | None):
        return RunFault(str(exc), self.n, expert, {"seed": self.config.seed, "rng": rng.RNG_ALGORITHM})

    # -- one round -----------------------------------------------------------

    def step(self) -> TrajectoryRecord:
        if self.done:
            raise RuntimeError("run already finished")
        n, cfg, model = self.n, self.config, self.model
        thetas = self._thetas()
        pi = self.mixing.pi
        theta_bar = self.theta_bar

        validation = self.subsamples.validation
        risks = np.empty(cfg.experts)
        for j, theta in enumerate(thetas):
            try:
                risks[j] = risk_measure(theta, model, validation, cfg.gamma)
            except EvaluationFault as exc:
                raise self._fault(exc, j) from exc

        if cfg.mode == CONSENSUS:
            try:
                self.experts = batched_consensus_step(theta_bar, self.experts, model, self.data,
                                                      self.counts, self.grid, self.schedule, n)
            except EvaluationFault as exc:
                raise self._fault(exc, None) from exc
        else:
            stepped = []
            for j, state in enumerate(self.experts):
                try:
                    stepped.append(expert_step(state, model, self.subsamples[j], self.grid, self.schedule, n))
                except EvaluationFault as exc:
                    raise self._fault(exc, j) from exc
            self.experts = stepped

        old_logw = self.mixing.log_weights
        update_weights(self.mixing, risks)
        new_pi = self.mixing.pi
        new_bar = consensus(self._thetas(), new_pi)
        self._check_invariants(thetas, pi, theta_bar, risks, old_logw, n)

        rec = TrajectoryRecord(
            n=n,
            tau=self.grid.tau(n),
            theta_bar=theta_bar,
            pi=pi,
            risks=risks,
            step_loss=self.mixing.loss_ledger[-1],
            total_loss=self.mixing.total,
            bound=self.mixing.bound,
            expert_thetas=thetas if cfg.record_experts else None,
        )
        self.records.append(rec)
        self.converged = check_convergence(theta_bar, new_bar, cfg.tol)
        self.theta_bar = new_bar
        self.n += 1
        return rec

    def _check_invariants(self, thetas, pi, theta_bar, risks, old_logw, n):
        v = self.violations
        if abs(pi.sum() - 1.0) > SIMPLEX_TOL or np.any(pi <= 0):
            v["simplex"] += 1
        if np.any(self.mixing.log_weights > old_logw):
            v["weights_increase"] += 1
        if np.any(risks < 0) or np.any(risks >= 1):
            v["risk_range"] += 1
        if self.schedule.epsilon > 0 and not (
            self.schedule.sigma(self.grid.tau(n + 1)) < self.schedule.sigma(self.grid.tau(n))
        ):
            v["annealing"] += 1
        span = np.maximum(np.abs(thetas).max(axis=0), 1.0) * HULL_TOL
        if np.any(theta_bar < thetas.min(axis=0) - span) or np.any(theta_bar > thetas.max(axis=0) + span):
            v["hull"] += 1

    # -- driving -------------------------------------------------------------

    def run(self, stop_after: int | None = None) -> "AggregationRun":
        """Step until done, or until ``stop_after`` rounds have completed overall."""
        cfg = self.config
        while not self.done and (stop_after is None or self.n < stop_after):
            self.step()
            if cfg.checkpoint and cfg.checkpoint_every and self.n % cfg.checkpoint_every == 0:
                self.save_snapshot(cfg.checkpoint)
        return self

    def result(self) -> RunResult:
        report = check_state(self.mixing)
        validation = self.subsamples.validation
        thetas = self._thetas()
        return RunResult(
            theta_star=self.theta_bar.copy(),
            records=self.records,
            bound=report,
            converged=self.converged,
            steps_done=self.n,
            expert_thetas=thetas,
            pi=self.mixing.pi,
            config=self.config,
            step_violations=self.mixing.step_violations,
            invariant_violations=dict(self.violations),
            validation_objective=objective(self.model, self.theta_bar, validation),
            expert_validation_objectives=np.array([objective(self.model, t, validation) for t in thetas]),
            seeds=self.seeds,
        )

    # -- checkpoints -----------------------------------------------------------

    def snapshot(self) -> dict:
        mix = self.mixing
        return {
            "config": self.config.to_dict(),
            "n": self.n,
            "converged": self.converged,
            "theta_bar": self.theta_bar.tolist(),
            "experts": [
                {"k": e.k, "theta": e.theta.tolist(), "rng": rng.get_state(e.noise)} for e in self.experts
            ],
            "log_weights": mix.log_weights.tolist(),
            "log_weight_sums": mix.log_weight_sums,
            "risk_history": [r.tolist() for r in mix.risk_history],
            "loss_ledger": mix.loss_ledger,
            "step_violations": mix.step_violations,
            "violations": self.violations,
            "records": [r.to_json() for r in self.records],
        }

    def save_snapshot(self, path) -> None:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(self.snapshot()))
        tmp.replace(path)

    @classmethod
    def from_snapshot(cls, snap: dict, data: Dataset, model: ModelSpec | None = None,
                      config: RunConfig | None = None) -> "AggregationRun":
        """Rebuild a run; ``config`` may override output settings but must match otherwise."""
        saved = RunConfig.from_dict(snap["config"])
        config = config or saved
        run = cls(config, data, model)
        run.n = snap["n"]
        run.converged = snap["converged"]
        run.theta_bar = np.array(snap["theta_bar"])
        run.experts = [
            ExpertState(e["k"], np.array(e["theta"]), rng.from_state(e["rng"])) for e in snap["experts"]
        ]
        mix = run.mixing
        mix.log_weights = np.array(snap["log_weights"])
        mix.log_weight_sums = list(snap["log_weight_sums"])
        mix.risk_history = [np.array(r) for r in snap["risk_history"]]
        mix.loss_ledger = list(snap["loss_ledger"])
        mix.step_violations = snap["step_violations"]
        run.violations = dict(snap["violations"])
        run.records = [TrajectoryRecord.from_json(r) for r in snap["records"]]
        return run

    @classmethod
    def resume(cls, path, data: Dataset, model: ModelSpec | None = None, config: RunConfig | None = None):
        return cls.from_snapshot(json.loads(Path(path).read_text()), data, model, config)


def run(config: RunConfig, data: Dataset, model: ModelSpec | None = None, omega0=None) -> RunResult:
    """Execute the full aggregation algorithm and return the consensus estimate."""
    return AggregationRun(config, data, model, omega0).run().result()


# --- outputs ------------------------------------------------------------------


def trajectory_columns(p: int, k: int, record_experts: bool = False) -> list[str]:
    cols = ["n", "tau"]
    cols += [f"theta_bar_{i}" for i in range(p)]
    cols += [f"pi_{j}" for j in range(k)]
    cols += [f"r_{j}" for j in range(k)]
    cols += ["L_n", "L", "bound"]
    if record_experts:
        cols += [f"theta_{j}_{i}" for j in range(k) for i in range(p)]
    return cols


def _fmt(v) -> str:
    return repr(float(v))


def write_trajectory(records: list[TrajectoryRecord], path, p: int, k: int, record_experts: bool = False) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trajectory_columns(p, k, record_experts))
        for rec in records:
            row = [str(rec.n), _fmt(rec.tau)]
            row += [_fmt(v) for v in rec.theta_bar]
            row += [_fmt(v) for v in rec.pi]
            row += [_fmt(v) for v in rec.risks]
            row += [_fmt(rec.step_loss), _fmt(rec.total_loss), _fmt(rec.bound)]
            if record_experts:
                row += [_fmt(v) for v in np.ravel(rec.expert_thetas)]
            writer.writerow(row)


def write_fit(data: Dataset, model: ModelSpec, theta, path) -> None:
    pred = model.predict(np.asarray(theta, dtype=float), data.x)
    y = data.y_name
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(data.x_names) + [f"{y}_data", f"{y}_model"])
        for xi, yi, pi in zip(data.x, data.y, pred):
            writer.writerow([_fmt(v) for v in xi] + [_fmt(yi), _fmt(pi)])


def summary_dict(result: RunResult, model: ModelSpec) -> dict:
    cfg = result.config
    return {
        "theta_star": dict(zip(model.param_names or [str(i) for i in range(model.p)],
                               map(float, result.theta_star))),
        "theta_star_vector": result.theta_star.tolist(),
        "converged": result.converged,
        "steps_done": result.steps_done,
        "horizon": cfg.horizon,
        "validation_objective": result.validation_objective,
        "expert_validation_objectives": result.expert_validation_objectives.tolist(),
        "final_pi": result.pi.tolist(),
        "hedge_bound": {
            "bound": result.bound.bound,
            "total_loss": result.bound.total_loss,
            "slack": result.bound.slack,
            "satisfied": result.bound.satisfied,
            "stepwise_violations": result.step_violations,
        },
        "invariant_violations": result.invariant_violations,
        "trajectory_columns": trajectory_columns(model.p, cfg.experts, cfg.record_experts),
        "config": cfg.to_dict(),
        "seeds": result.seeds,
    }


@dataclass
class OutputPaths:
    trajectory: Path
    summary: Path
    fit: Path

    @classmethod
    def in_dir(cls, out_dir) -> "OutputPaths":
        out = Path(out_dir)
        return cls(out / "trajectory.csv", out / "summary.json", out / "fit.csv")


def emit_outputs(result: RunResult, paths: OutputPaths, data: Dataset, model: ModelSpec) -> OutputPaths:
    cfg = result.config
    try:
        for p in (paths.trajectory, paths.summary, paths.fit):
            Path(p).parent.mkdir(parents=True, exist_ok=True)
        write_trajectory(result.records, paths.trajectory, model.p, cfg.experts, cfg.record_experts)
        Path(paths.summary).write_text(json.dumps(summary_dict(result, model), indent=2) + "\n")
        write_fit(data, model, result.theta_star, paths.fit)
    except OSError as exc:
        raise OSError(f"writing outputs failed at {exc.filename}: {exc.strerror}") from exc
    return paths


def read_trajectory(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(pi, risks, step_losses)`` arrays from a trajectory CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, r)) for r in reader]
    table = np.array(rows).reshape(len(rows), len(header))
    pi_cols = [i for i, h in enumerate(header) if h.startswith("pi_")]
    r_cols = [i for i, h in enumerate(header) if h.startswith("r_")]
    return table[:, pi_cols], table[:, r_cols], table[:, header.index("L_n")]


def replay_bound(pi: np.ndarray, risks: np.ndarray, beta: float) -> dict:
    """Recompute the weight recursion from logged risks and check the loss bound.

    The first logged mixing distribution is taken as the initial weights,
    which is exact because those sum to one.
    """
    from .aggregator import hedge_bound_check, logsumexp, mixing_from_log, stepwise_holds

    if len(pi) == 0:
        return {"bound": 0.0, "total_loss": 0.0, "slack": 0.0, "satisfied": True,
                "stepwise_violations": 0, "max_pi_deviation": 0.0, "steps": 0}
    with np.errstate(divide="ignore"):
        logw = np.log(pi[0])
    losses, violations, deviation = [], 0, 0.0
    for n in range(len(pi)):
        cur = mixing_from_log(logw)
        deviation = max(deviation, float(np.max(np.abs(cur - pi[n]))))
        loss = float(np.dot(cur, risks[n]))
        before = logsumexp(logw)
        logw = logw + risks[n] * math.log(beta)
        if not stepwise_holds(before, logsumexp(logw), loss, beta):
            violations += 1
        losses.append(loss)
    rep = hedge_bound_check(losses, logw, beta, log_space=True)
    return {**rep._asdict(), "stepwise_violations": violations,
            "max_pi_deviation": deviation, "steps": len(pi)}
