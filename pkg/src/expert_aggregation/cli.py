"""Command-line entry point: ``run``, ``validate-gradient``, ``check-bound``, ``synth``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import rng
from .dataset import Dataset, load_csv, synthetic_logistic
from .driver import (
    AggregationRun,
    OutputPaths,
    RunConfig,
    emit_outputs,
    load_config,
    read_trajectory,
    replay_bound,
)
from .errors import ConfigError, DataError, EvaluationFault, RunFault
from .model import analytic_gradient, finite_difference_gradient, get_model

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_NUMERIC = 5
EXIT_BOUND = 6

PI_TOL = 1e-9
REFERENCE_THETA = (2.1070, 219.0527, 0.7427)

log = logging.getLogger("expert_aggregation")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags given here override it")
    p.add_argument("--data", help="CSV with a header row")
    p.add_argument("--x-cols", help="comma-separated input column names or indices")
    p.add_argument("--y-col", help="target column name or index")
    p.add_argument("--model")
    p.add_argument("--experts", type=int, help="number of experts K")
    p.add_argument("--subsample-size", type=int, help="bootstrap size m (default: d)")
    p.add_argument("--replacement", choices=["with", "without"])
    p.add_argument("--seed", type=int)
    p.add_argument("--horizon", type=float, help="T; combined with --steps or --delta")
    p.add_argument("--steps", type=int, help="N")
    p.add_argument("--delta", type=float, help="step size")
    p.add_argument("--epsilon", type=float, help="noise amplitude")
    p.add_argument("--gamma", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--mode", choices=["consensus", "per-expert"])
    p.add_argument("--theta0", help="comma-separated initial parameters")
    p.add_argument("--omega0", help="file with K initial weights summing to one")
    p.add_argument("--out", dest="out_dir", help="output directory")
    p.add_argument("--record-experts", action="store_true", default=None)
    p.add_argument("--checkpoint", help="snapshot file written every --checkpoint-every steps")
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--resume", help="continue from a snapshot file")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values = load_config(args.config).to_dict() if args.config else {}
    for name in ("data", "y_col", "model", "experts", "subsample_size", "replacement", "seed",
                 "steps", "delta", "epsilon", "gamma", "beta", "tol", "mode", "omega0",
                 "out_dir", "record_experts", "checkpoint", "checkpoint_every"):
        val = getattr(args, name)
        if val is not None:
            values[name] = val
    if args.x_cols is not None:
        values["x_cols"] = tuple(c.strip() for c in args.x_cols.split(","))
    if args.theta0 is not None:
        try:
            values["theta0"] = tuple(float(v) for v in args.theta0.split(","))
        except ValueError:
            raise ConfigError(f"bad --theta0 {args.theta0!r}") from None
    if args.horizon is not None:
        if args.horizon <= 0:
            raise ConfigError("horizon must be positive")
        if args.delta is not None and args.steps is None:
            values["steps"] = int(round(args.horizon / args.delta))
        else:
            steps = values.get("steps", RunConfig.steps)
            if steps < 1:
                raise ConfigError("horizon needs steps >= 1")
            values["delta"] = args.horizon / steps
    return RunConfig.from_dict(values).validate()


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    if not cfg.data:
        raise ConfigError("no --data given")
    data = load_csv(cfg.data, list(cfg.x_cols), cfg.y_col)
    model = get_model(cfg.model)
    if args.resume:
        runner = AggregationRun.resume(args.resume, data, model, cfg)
    else:
        runner = AggregationRun(cfg, data, model)
    result = runner.run().result()
    out = cfg.out_dir or "."
    paths = emit_outputs(result, OutputPaths.in_dir(out), data, model)
    b = result.bound
    print(f"theta* = {result.theta_star.tolist()}  ({result.steps_done} steps, converged={result.converged})")
    print(f"mixture loss L = {b.total_loss:.6g} <= bound {b.bound:.6g}  slack {b.slack:.3g}  satisfied={b.satisfied}")
    print(f"outputs: {paths.trajectory}, {paths.summary}, {paths.fit}")
    return EXIT_OK if b.satisfied else EXIT_BOUND


def _random_logistic_case(gen: np.random.Generator):
    theta = np.array([gen.uniform(0.5, 300), gen.uniform(0.5, 300), gen.uniform(0.05, 2)])
    m = int(gen.integers(3, 24))
    t = gen.uniform(0, 22, m)
    y = gen.uniform(0, 300, m)
    return theta, Dataset(t, y)


def gradient_agreement(model_name: str, draws: int, seed: int) -> float:
    """Worst relative error between analytic and central-difference gradients."""
    model = get_model(model_name)
    gen = rng.stream(seed, rng.SYNTHETIC_DATA, 1)
    worst = 0.0
    for _ in range(draws):
        if model_name == "logistic":
            theta, data = _random_logistic_case(gen)
        else:
            theta = gen.normal(size=model.p)
            data = Dataset(gen.normal(size=(8, 1)), gen.normal(size=8))
        a = analytic_gradient(model, theta, data)
        f = finite_difference_gradient(model, theta, data)
        worst = max(worst, float(np.linalg.norm(a - f) / max(np.linalg.norm(f), 1e-12)))
    return worst


def cmd_validate_gradient(args) -> int:
    worst = gradient_agreement(args.model, args.draws, args.seed)
    ok = worst < args.rtol
    print(f"{args.model}: max relative error {worst:.3e} over {args.draws} draws "
          f"({'PASS' if ok else 'FAIL'} at {args.rtol:g})")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_check_bound(args) -> int:
    beta = args.beta
    if beta is None:
        summary = Path(args.summary) if args.summary else Path(args.trajectory).with_name("summary.json")
        if not summary.is_file():
            raise ConfigError("need --beta or a summary.json next to the trajectory")
        beta = json.loads(summary.read_text())["config"]["beta"]
    try:
        pi, risks, _ = read_trajectory(args.trajectory)
    except (OSError, ValueError, StopIteration) as exc:
        raise DataError(f"cannot read trajectory {args.trajectory}: {exc}") from None
    rep = replay_bound(pi, risks, beta)
    rep["pi_consistent"] = rep["max_pi_deviation"] <= PI_TOL
    print(json.dumps(rep, indent=2))
    ok = rep["satisfied"] and rep["stepwise_violations"] == 0 and rep["pi_consistent"]
    return EXIT_OK if ok else EXIT_BOUND


def cmd_synth(args) -> int:
    t = np.arange(args.points, dtype=float)
    data = synthetic_logistic(REFERENCE_THETA, t, args.noise_sd, args.seed)
    Path(args.output).parent.mkdir(parents=True, exist_ok=True)
    with open(args.output, "w") as fh:
        fh.write("t,N\n")
        for ti, yi in zip(data.x[:, 0], data.y):
            fh.write(f"{float(ti)!r},{float(yi)!r}\n")
    print(f"wrote {data.d} points to {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="expert-aggregation", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the aggregation algorithm")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate-gradient", help="analytic vs finite-difference gradient check")
    p.add_argument("--model", default="logistic")
    p.add_argument("--draws", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rtol", type=float, default=1e-5)
    p.set_defaults(func=cmd_validate_gradient)

    p = sub.add_parser("check-bound", help="replay the weight recursion from a trajectory CSV")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--beta", type=float)
    p.add_argument("--summary")
    p.set_defaults(func=cmd_check_bound)

    p = sub.add_parser("synth", help="write a noisy logistic-law dataset")
    p.add_argument("--output", required=True)
    p.add_argument("--points", type=int, default=23)
    p.add_argument("--noise-sd", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EvaluationFault, RunFault, ArithmeticError) as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
