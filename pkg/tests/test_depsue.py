"""Margin arithmetic and staged-deployment behavior."""

import numpy as np
import pytest

from safeopl.data import split_dataset
from safeopl.depsue import (
    REPORT_HEADER,
    DeploymentHistory,
    DeploymentPlan,
    StageRecord,
    cumulative_margin,
    effective_threshold,
    run_depsue,
    write_deployment_report,
)
from safeopl.environment import LoggingPolicy, LoggingPolicySpec, collect_data
from safeopl.estimators import HcopeConfig, SafetySpec, on_policy_value
from safeopl.learners import LagrangianState, TrainConfig, train_safe_opg
from safeopl.policy import create_policy
from safeopl.reward_model import RewardModelConfig, train_reward_model
from safeopl.rng import RngStream

from helpers import make_dataset, tiny_environment

FAST_MODEL = RewardModelConfig(
    hidden_widths=(8, 4), n_members=2, epochs=3, batch_size=64
)
FAST_TRAIN = TrainConfig(eta_psi=0.001, steps=0, policy_hidden_width=16)


def stub_record(stage, estimate):
    policy = create_policy(2, 2, 3, RngStream(0, 0))
    data = make_dataset([[0.0, 0.0]], [0], [1.0], [0.5])
    return StageRecord(
        stage=stage,
        policy=policy,
        training_data=data,
        collected_data=data,
        on_policy_estimate=estimate,
        effective_threshold=0.0,
        hcope_bound=0.0,
        cumulative_margin=0.0,
        state=LagrangianState(),
    )


def stub_history(plan, estimates):
    history = DeploymentHistory(plan=plan, stage0_data=stub_record(1, 0.0).training_data)
    for k, est in enumerate(estimates, start=1):
        history.append(stub_record(k, est))
    return history


def test_effective_threshold_base_and_margin_relaxation():
    plan = DeploymentPlan(2, 100, base_threshold=0.2, delta=0.1)
    history = stub_history(plan, [0.21])
    assert effective_threshold(plan, history, 1) == pytest.approx(0.2, abs=1e-15)
    # stage 2 owes 2C minus the 0.21 already banked
    assert effective_threshold(plan, history, 2) == pytest.approx(0.19, abs=1e-15)
    with pytest.raises(ValueError, match="stage index"):
        effective_threshold(plan, history, 0)
    with pytest.raises(ValueError, match="missing prior stages"):
        effective_threshold(plan, history, 4)


def test_cumulative_margin_with_and_without_clipping():
    plain = DeploymentPlan(2, 100, base_threshold=0.2, delta=0.1)
    history = stub_history(plain, [0.26])
    assert cumulative_margin(history, 0.2, 1) == pytest.approx(0.06, abs=1e-15)

    clipped = DeploymentPlan(
        2, 100, base_threshold=0.2, delta=0.1,
        clip_factor=1.2, clip_reference=0.2,
    )
    history = stub_history(clipped, [0.26])
    assert clipped.clip_estimate(0.26) == pytest.approx(0.24, abs=1e-15)
    assert cumulative_margin(history, 0.2, 1) == pytest.approx(0.04, abs=1e-15)
    with pytest.raises(ValueError, match="missing prior stages"):
        cumulative_margin(history, 0.2, 3)


def test_history_rejects_out_of_order_stages():
    plan = DeploymentPlan(3, 100, base_threshold=0.2, delta=0.1)
    history = stub_history(plan, [0.2])
    with pytest.raises(ValueError, match="out of order"):
        history.append(stub_record(3, 0.2))


def test_plan_validation_and_clipping():
    good = DeploymentPlan(1, 100, base_threshold=0.2, delta=0.1)
    good.validate()
    assert good.clip_estimate(5.0) == 5.0
    for kwargs in (
        {"n_deployments": 0},
        {"samples_per_stage": 1},
        {"delta": 0.0},
        {"delta": 1.0},
        {"clip_factor": 0.0, "clip_reference": 1.0},
        {"clip_factor": 1.5},
    ):
        bad = DeploymentPlan(
            **{"n_deployments": 1, "samples_per_stage": 100,
               "base_threshold": 0.2, "delta": 0.1, **kwargs}
        )
        with pytest.raises(ValueError):
            bad.validate()


def logged_world(n=240, beta=0.0, seed=30):
    env = tiny_environment()
    spec = LoggingPolicySpec(beta)
    data = collect_data(env, LoggingPolicy(env, spec), n, RngStream(seed, 0))
    return env, spec, data


def test_single_stage_reproduces_direct_safe_training():
    env, spec, data0 = logged_world()
    plan = DeploymentPlan(1, len(data0), base_threshold=0.2, delta=0.05)
    cfg = TrainConfig(eta_psi=0.01, steps=25, policy_hidden_width=16)
    rng = RngStream(31, 0)
    history = run_depsue(
        env, spec, plan, FAST_MODEL, cfg, HcopeConfig(), rng, data0=data0
    )

    labelled = split_dataset(data0, 0.5, rng.child("stage1/split"))
    model = train_reward_model(
        data0, env.action_features, FAST_MODEL, "naive_mean", rng.child("stage1/model")
    )
    expected, _ = train_safe_opg(
        labelled.s1(), labelled.s2(), SafetySpec(0.2, 0.05), HcopeConfig(),
        model, env.action_features, cfg, rng.child("stage1/train"),
    )
    record = history.records[0]
    assert np.array_equal(record.policy.get_flat_params(), expected.get_flat_params())
    assert record.policy.policy_id == "pi_1"
    assert record.on_policy_estimate == on_policy_value(record.collected_data)
    assert np.isfinite(record.hcope_bound)


def test_warm_start_carries_previous_stage_weights():
    env, spec, data0 = logged_world(n=160)
    plan = DeploymentPlan(2, 160, base_threshold=0.1, delta=0.05)
    warm = run_depsue(
        env, spec, plan, FAST_MODEL, FAST_TRAIN, HcopeConfig(),
        RngStream(32, 0), data0=data0, warm_start=True,
    )
    # zero training steps: stage 2 starts from (and returns) stage 1 weights
    assert np.array_equal(
        warm.records[1].policy.get_flat_params(),
        warm.records[0].policy.get_flat_params(),
    )
    cold = run_depsue(
        env, spec, plan, FAST_MODEL, FAST_TRAIN, HcopeConfig(),
        RngStream(32, 0), data0=data0, warm_start=False,
    )
    assert not np.array_equal(
        cold.records[1].policy.get_flat_params(),
        cold.records[0].policy.get_flat_params(),
    )


def test_stage_data_too_small_raises():
    env, spec, data0 = logged_world(n=60)
    plan = DeploymentPlan(1, 60, base_threshold=0.1, delta=0.05)
    with pytest.raises(ValueError, match="stage data too small"):
        run_depsue(
            env, spec, plan, FAST_MODEL, FAST_TRAIN, HcopeConfig(),
            RngStream(33, 0), data0=data0,
        )


def test_oversized_stage0_data_is_subsampled_to_budget():
    env, spec, data0 = logged_world(n=300)
    plan = DeploymentPlan(1, 160, base_threshold=0.1, delta=0.05)
    history = run_depsue(
        env, spec, plan, FAST_MODEL, FAST_TRAIN, HcopeConfig(),
        RngStream(34, 0), data0=data0,
    )
    assert len(history.stage0_data) == 160
    assert len(history.records[0].training_data) == 160


def test_missing_stage0_data_is_collected_from_logger():
    env, spec, _ = logged_world()
    plan = DeploymentPlan(1, 160, base_threshold=0.1, delta=0.05)
    history = run_depsue(
        env, spec, plan, FAST_MODEL, FAST_TRAIN, HcopeConfig(), RngStream(35, 0)
    )
    assert len(history.stage0_data) == 160
    assert history.stage0_data.origin_policy_id == "logging(beta=0)"


def test_each_stage_trains_on_predecessors_collection():
    env, spec, data0 = logged_world(n=160)
    plan = DeploymentPlan(2, 160, base_threshold=0.1, delta=0.05)
    history = run_depsue(
        env, spec, plan, FAST_MODEL, FAST_TRAIN, HcopeConfig(),
        RngStream(36, 0), data0=data0,
    )
    assert np.array_equal(
        history.records[1].training_data.contexts,
        history.records[0].collected_data.contexts,
    )
    assert history.records[0].collected_data.origin_policy_id == "pi_1"


def test_deployment_report_matches_history(tmp_path):
    env, spec, data0 = logged_world(n=160)
    plan = DeploymentPlan(2, 160, base_threshold=0.1, delta=0.05)
    history = run_depsue(
        env, spec, plan, FAST_MODEL, FAST_TRAIN, HcopeConfig(),
        RngStream(37, 0), data0=data0,
    )
    path = tmp_path / "deployment_report.csv"
    write_deployment_report(history, env, str(path), 200, RngStream(38, 0))
    lines = path.read_text().splitlines()
    assert lines[0] == REPORT_HEADER
    assert len(lines) == 3
    for line, record in zip(lines[1:], history.records):
        cols = line.split(",")
        assert int(cols[0]) == record.stage
        assert float(cols[1]) == pytest.approx(record.effective_threshold, abs=1e-15)
        assert float(cols[2]) == pytest.approx(record.hcope_bound, abs=1e-15)
        assert float(cols[3]) == pytest.approx(record.on_policy_estimate, abs=1e-15)
        assert float(cols[4]) == pytest.approx(record.cumulative_margin, abs=1e-15)
        assert 0.0 <= float(cols[5]) <= 1.0
        assert 0.0 <= float(cols[6]) <= 1.0
