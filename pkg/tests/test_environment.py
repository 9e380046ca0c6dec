import numpy as np
import pytest

from safeopl.environment import (
    DEFAULT_BETA_SWEEP,
    EnvironmentConfig,
    LoggingPolicy,
    LoggingPolicySpec,
    build_environment,
    collect_data,
    generate_logged_data,
    load_environment,
    logging_policy_matrix,
    logging_policy_probs,
    sample_reward,
    save_environment,
    true_reward_mean,
)
from safeopl.rng import RngStream

from helpers import probe_environment, tiny_environment


def test_config_validation():
    good = EnvironmentConfig(d_x=3, d_a=2, n_actions=5, n_supported=4, ground_truth_seed=0)
    good.validate()
    with pytest.raises(ValueError, match="n_supported"):
        EnvironmentConfig(
            d_x=3, d_a=2, n_actions=5, n_supported=5, ground_truth_seed=0
        ).validate()
    with pytest.raises(ValueError, match="d_x"):
        EnvironmentConfig(
            d_x=0, d_a=2, n_actions=5, n_supported=4, ground_truth_seed=0
        ).validate()


def test_build_environment_shapes_and_determinism():
    env = tiny_environment(seed=5)
    assert env.action_features.shape == (6, 3)
    np.testing.assert_array_equal(env.supported_actions, np.arange(4))
    np.testing.assert_array_equal(env.novel_actions, np.array([4, 5]))
    again = tiny_environment(seed=5)
    np.testing.assert_array_equal(env.action_features, again.action_features)
    other = tiny_environment(seed=6)
    assert not np.array_equal(env.action_features, other.action_features)


def test_reward_matrix_in_unit_interval():
    env = tiny_environment()
    contexts = env.sample_contexts(50, RngStream(1))
    q = env.reward_matrix(contexts)
    assert q.shape == (50, 6)
    assert np.all((q > 0.0) & (q < 1.0))
    # Scalar accessors agree with the matrix.
    assert true_reward_mean(env, contexts[3], 2) == pytest.approx(q[3, 2])


def test_reward_for_pairs_matches_matrix():
    env = tiny_environment()
    contexts = env.sample_contexts(20, RngStream(2))
    actions = np.arange(20) % 6
    direct = env.reward_for_pairs(contexts, actions)
    full = env.reward_matrix(contexts)[np.arange(20), actions]
    np.testing.assert_allclose(direct, full, atol=1e-12)


def test_sample_reward_is_bernoulli_with_matching_mean():
    env = probe_environment([0.7, 0.3, 0.5])
    x = np.zeros(3)
    draws = np.array(
        [sample_reward(env, x, 0, RngStream(9, stream_id=i)) for i in range(4000)]
    )
    assert set(np.unique(draws)) <= {0, 1}
    assert abs(draws.mean() - 0.7) < 0.025


def test_logging_probs_two_action_oracle():
    # q = (0.8, 0.2) on the supported set with beta = 1 gives probabilities
    # (0.9412, 0.0588): exp(logit(0.8)) = 4 against exp(logit(0.2)) = 1/4.
    env = probe_environment([0.8, 0.2, 0.5], n_supported=2)
    probs = logging_policy_probs(env, LoggingPolicySpec(beta=1.0), np.zeros(3))
    np.testing.assert_allclose(probs[:2], [0.9412, 0.0588], atol=1e-4)
    assert probs[2] == 0.0
    assert probs.sum() == pytest.approx(1.0)


def test_logging_beta_zero_is_uniform_on_supported():
    env = tiny_environment()
    contexts = env.sample_contexts(8, RngStream(0))
    mat = logging_policy_matrix(env, LoggingPolicySpec(beta=0.0), contexts)
    np.testing.assert_allclose(mat[:, :4], 0.25)
    np.testing.assert_allclose(mat[:, 4:], 0.0)


def test_logging_beta_sign_orders_quality():
    # Positive beta concentrates on the highest-q supported action,
    # negative beta on the lowest.
    env = probe_environment([0.1, 0.6, 0.9, 0.4], n_supported=3)
    x = np.zeros(3)
    hot = logging_policy_probs(env, LoggingPolicySpec(beta=24.0), x)
    cold = logging_policy_probs(env, LoggingPolicySpec(beta=-24.0), x)
    assert hot.argmax() == 2
    assert cold.argmax() == 0
    assert hot[2] > 0.999
    assert cold[0] > 0.999
    assert DEFAULT_BETA_SWEEP == (-24.0, -16.0, -8.0, 0.0, 8.0, 16.0, 24.0)


def test_collect_data_contents():
    env = probe_environment([0.8, 0.2, 0.5], n_supported=2)
    spec = LoggingPolicySpec(beta=1.0)
    data = generate_logged_data(env, spec, 3000, RngStream(21))
    assert len(data) == 3000
    assert set(np.unique(data.rewards)) <= {0.0, 1.0}
    # Only supported actions are logged, with the logging policy's exact
    # propensities attached.
    assert set(np.unique(data.actions)) <= {0, 1}
    share_hot = (data.actions == 0).mean()
    assert abs(share_hot - 0.9412) < 0.02
    expect = np.where(data.actions == 0, 0.9412, 0.0588)
    np.testing.assert_allclose(data.propensities, expect, atol=1e-4)
    assert data.origin_policy_id == "logging(beta=1)"
    # Reward means track the per-action ground truth.
    hot = data.rewards[data.actions == 0]
    assert abs(hot.mean() - 0.8) < 0.03


def test_collect_data_seeded_reproducibility():
    env = tiny_environment()
    policy = LoggingPolicy(env, LoggingPolicySpec(beta=8.0))
    a = collect_data(env, policy, 64, RngStream(4))
    b = collect_data(env, policy, 64, RngStream(4))
    c = collect_data(env, policy, 64, RngStream(5))
    np.testing.assert_array_equal(a.contexts, b.contexts)
    np.testing.assert_array_equal(a.rewards, b.rewards)
    assert not np.array_equal(a.contexts, c.contexts)


def test_environment_roundtrip(tmp_path):
    env = tiny_environment(seed=11)
    path = tmp_path / "env.txt"
    save_environment(env, path)
    back = load_environment(path)
    assert back.config == env.config
    np.testing.assert_array_equal(back.action_features, env.action_features)
    contexts = env.sample_contexts(10, RngStream(3))
    np.testing.assert_allclose(
        back.reward_matrix(contexts), env.reward_matrix(contexts), atol=1e-12
    )


def test_environment_roundtrip_with_context_pool(tmp_path):
    config = EnvironmentConfig(
        d_x=3,
        d_a=2,
        n_actions=4,
        n_supported=3,
        ground_truth_seed=2,
        hidden_widths=(8, 4),
        context_pool_size=12,
    )
    env = build_environment(config)
    assert env.context_pool is not None
    assert env.context_pool.shape == (12, 3)
    draws = env.sample_contexts(40, RngStream(6))
    pool_rows = {tuple(row) for row in env.context_pool}
    assert all(tuple(row) in pool_rows for row in draws)
    path = tmp_path / "env.txt"
    save_environment(env, path)
    back = load_environment(path)
    np.testing.assert_array_equal(back.context_pool, env.context_pool)
