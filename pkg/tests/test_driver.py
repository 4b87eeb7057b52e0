import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from expert_aggregation import (
    LOGISTIC,
    AggregationRun,
    Dataset,
    RunConfig,
    check_convergence,
    constant_model,
    emit_outputs,
    logistic_predict,
    run,
)
from expert_aggregation.driver import (
    OutputPaths,
    load_config,
    parse_config_text,
    read_trajectory,
    replay_bound,
    trajectory_columns,
)
from expert_aggregation.errors import ConfigError, RunFault

QUAD = constant_model()


def quad_data(c=3.0):
    return Dataset(np.zeros(1), np.array([c]))


def small_logistic_config(**kw):
    base = dict(experts=2, subsample_size=23, steps=3, delta=1e-5, seed=1)
    base.update(kw)
    return RunConfig(**base)


def test_convergence_test():
    assert check_convergence([1.0, 2.0], [1.0, 2.0], 1e-12)
    assert check_convergence([0.0, 0.0], [3.0, 4.0], 5.0)
    assert not check_convergence([0.0, 0.0], [3.0, 4.0], 4.999)
    with pytest.raises(ValueError):
        check_convergence([0.0], [0.0, 1.0], 1.0)


def test_single_expert_reaches_minimiser():
    cfg = RunConfig(model="constant", experts=1, steps=100_000, delta=0.1, epsilon=0.0, tol=1e-12)
    res = run(cfg, quad_data(3.0), QUAD)
    assert res.converged and res.steps_done < 1000
    assert res.theta_star[0] == pytest.approx(3.0, abs=1e-11)


def test_zero_steps_returns_initial_guess(logistic_data):
    res = run(small_logistic_config(steps=0, theta0=(1.0, 200.0, 0.5)), logistic_data)
    np.testing.assert_array_equal(res.theta_star, [1.0, 200.0, 0.5])
    assert res.records == [] and res.bound.total_loss == 0.0 and res.bound.satisfied


def test_default_initial_guess(logistic_data):
    runner = AggregationRun(small_logistic_config(), logistic_data)
    np.testing.assert_array_equal(runner.theta0, LOGISTIC.theta0(logistic_data))


@pytest.mark.parametrize(
    "kw",
    [dict(gamma=0.0), dict(beta=1.0), dict(beta=0.0), dict(tol=0.0), dict(experts=0), dict(mode="x"),
     dict(replacement="sometimes"), dict(steps=-1)],
)
def test_config_validation(kw, logistic_data):
    with pytest.raises(ConfigError):
        AggregationRun(small_logistic_config(**kw), logistic_data)


def test_theta0_dimension_checked(logistic_data):
    with pytest.raises(ConfigError):
        AggregationRun(small_logistic_config(theta0=(1.0, 2.0)), logistic_data)


def test_without_replacement_too_large(logistic_data):
    with pytest.raises(ConfigError):
        AggregationRun(small_logistic_config(replacement="without", subsample_size=30), logistic_data)


def test_records_and_invariants(logistic_data):
    res = run(small_logistic_config(experts=5, steps=200), logistic_data)
    assert [r.n for r in res.records] == list(range(200))
    assert res.bound.satisfied and res.step_violations == 0
    assert all(v == 0 for v in res.invariant_violations.values())
    first = res.records[0]
    np.testing.assert_allclose(first.pi, 0.2)
    # all experts start at theta0, so their first-round risks coincide
    assert np.ptp(first.risks) == 0.0
    for rec in res.records:
        assert rec.bound >= rec.total_loss - 1e-9


def test_per_expert_mode_runs(logistic_data):
    res = run(small_logistic_config(mode="per-expert", experts=4, steps=50), logistic_data)
    assert res.bound.satisfied and res.steps_done == 50


def test_replay_identical(logistic_data):
    a = run(small_logistic_config(steps=50, experts=3), logistic_data)
    b = run(small_logistic_config(steps=50, experts=3), logistic_data)
    np.testing.assert_array_equal(a.theta_star, b.theta_star)
    for ra, rb in zip(a.records, b.records):
        np.testing.assert_array_equal(ra.theta_bar, rb.theta_bar)


def test_fault_carries_step_and_seeds():
    # N0 = 1, Ne = 0, r = 0 makes the logistic denominator vanish for every t
    data = Dataset(np.array([0.0, 1.0]), np.array([1.0, 1.0]))
    unbounded = replace(LOGISTIC, lower=None)
    cfg = RunConfig(experts=2, steps=5, delta=1e-3, epsilon=0.0, theta0=(1.0, 0.0, 0.0))
    with pytest.raises(RunFault) as exc:
        run(cfg, data, unbounded)
    assert exc.value.step == 0 and exc.value.expert == 0 and exc.value.seeds["seed"] == 0


def test_checkpoint_resume_matches_uninterrupted(logistic_data, tmp_path):
    cfg = small_logistic_config(experts=4, steps=120)
    full = run(cfg, logistic_data)
    first = AggregationRun(cfg, logistic_data).run(stop_after=47)
    first.save_snapshot(tmp_path / "snap.json")
    resumed = AggregationRun.resume(tmp_path / "snap.json", logistic_data).run().result()
    np.testing.assert_array_equal(resumed.theta_star, full.theta_star)
    assert len(resumed.records) == len(full.records)
    for a, b in zip(resumed.records, full.records):
        np.testing.assert_array_equal(a.theta_bar, b.theta_bar)
        np.testing.assert_array_equal(a.risks, b.risks)
    assert resumed.bound == full.bound


def test_periodic_checkpoints(logistic_data, tmp_path):
    snap = tmp_path / "ck.json"
    cfg = small_logistic_config(steps=30, checkpoint=str(snap), checkpoint_every=10)
    AggregationRun(cfg, logistic_data).run()
    assert json.loads(snap.read_text())["n"] == 30


def test_outputs(logistic_data, tmp_path):
    cfg = small_logistic_config(steps=3, experts=2)
    res = run(cfg, logistic_data)
    paths = emit_outputs(res, OutputPaths.in_dir(tmp_path), logistic_data, LOGISTIC)

    with open(paths.trajectory) as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 4
    assert rows[0] == trajectory_columns(3, 2)

    summary = json.loads(paths.summary.read_text())
    assert RunConfig.from_dict(summary["config"]) == cfg
    assert summary["hedge_bound"]["satisfied"] is True
    assert summary["trajectory_columns"] == rows[0]

    with open(paths.fit) as fh:
        fit = list(csv.DictReader(fh))
    assert len(fit) == logistic_data.d
    for row, t in zip(fit, logistic_data.x[:, 0]):
        assert float(row["N_model"]) == logistic_predict(res.theta_star, np.array([t]))[0]


def test_outputs_byte_identical(logistic_data, tmp_path):
    cfg = small_logistic_config(steps=20, experts=3, record_experts=True)
    for out in ("a", "b"):
        emit_outputs(run(cfg, logistic_data), OutputPaths.in_dir(tmp_path / out), logistic_data, LOGISTIC)
    for name in ("trajectory.csv", "summary.json", "fit.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_trajectory_replays_bound(logistic_data, tmp_path):
    cfg = small_logistic_config(steps=40, experts=3)
    res = run(cfg, logistic_data)
    paths = emit_outputs(res, OutputPaths.in_dir(tmp_path), logistic_data, LOGISTIC)
    pi, risks, losses = read_trajectory(paths.trajectory)
    rep = replay_bound(pi, risks, cfg.beta)
    assert rep["satisfied"] and rep["stepwise_violations"] == 0
    assert rep["bound"] == pytest.approx(res.bound.bound, rel=1e-12)
    assert rep["max_pi_deviation"] < 1e-12
    np.testing.assert_allclose(losses, [r.step_loss for r in res.records], rtol=1e-15)


def test_config_text_round_trip(tmp_path):
    text = """
    # logistic experiment settings
    experts = 25
    subsample-size = 23
    --delta = 1e-5
    steps = 1e4
    theta0 = 1, 200, 0.5
    x-cols = t
    record-experts = yes
    omega0 = none
    """
    path = tmp_path / "run.cfg"
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.experts == 25 and cfg.subsample_size == 23 and cfg.steps == 10_000
    assert cfg.theta0 == (1.0, 200.0, 0.5) and cfg.x_cols == ("t",) and cfg.record_experts
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


@pytest.mark.parametrize("text", ["experts 3", "nonsense = 1", "experts = many", "record-experts = maybe"])
def test_config_text_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)
