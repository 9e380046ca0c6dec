#!/usr/bin/env python3
"""Train a naive and a safety-constrained policy on the same logged data.

The story in one run: a concentrated logging policy (beta = 8) logs 8,000
interactions on a 12-action world where 3 actions were never shown.  Both
learners optimize the same model-based value estimate; the safe learner
additionally keeps a high-confidence lower bound on its off-policy value
above C = 0.95x the logging policy's value, enforced through a Lagrange
multiplier.

The naive learner is free to chase actions the reward model is wrong about,
including the three novel ones; the safe learner is pulled back toward
behavior the logged data can vouch for.  Compare the `novelty` column (the
probability mass placed on never-logged actions) and the `violated` flag
(true value below C).

Run it (about 20 seconds):

    python3 demos/quickstart.py [seed]

Example output (seed 0):

    logged 8000 samples at beta=8; safety threshold C=0.9327
    safe learner final lambda: 9.465

    policy     true value vs logging  novelty violated
    naive          0.8298      0.845   0.2151     true
    safe           0.9572      0.975   0.0147    false
"""

import sys

from safeopl.data import split_dataset
from safeopl.environment import (
    EnvironmentConfig,
    LoggingPolicy,
    LoggingPolicySpec,
    build_environment,
    generate_logged_data,
)
from safeopl.estimators import HcopeConfig, SafetySpec, on_policy_value
from safeopl.evaluation import exact_policy_value, metric_report
from safeopl.learners import TrainConfig, train_opg, train_safe_opg
from safeopl.reward_model import RewardModelConfig, train_reward_model
from safeopl.rng import RngStream


def main(seed: int = 0) -> None:
    config = EnvironmentConfig(
        d_x=6, d_a=3, n_actions=12, n_supported=9,
        ground_truth_seed=3, hidden_widths=(32, 16),
    )
    env = build_environment(config)
    spec = LoggingPolicySpec(beta=8.0)
    root = RngStream(seed)

    data = generate_logged_data(env, spec, 8_000, root.child("data"))
    data = split_dataset(data, 0.5, root.child("split"))
    threshold = 0.95 * on_policy_value(data)
    print(f"logged {len(data)} samples at beta=8; safety threshold C={threshold:.4f}")

    model_cfg = RewardModelConfig(hidden_widths=(64, 16), n_members=5, epochs=20)
    model = train_reward_model(
        data, env.action_features, model_cfg, "naive_mean", root.child("model")
    )

    naive = train_opg(
        data, model, env.action_features,
        TrainConfig(eta_psi=0.1, steps=400), root.child("naive"),
    )
    safe, state = train_safe_opg(
        data.s1(), data.s2(), SafetySpec(threshold, delta=0.05), HcopeConfig(),
        model, env.action_features,
        TrainConfig(eta_psi=0.001, steps=2_500), root.child("safe"),
    )
    print(f"safe learner final lambda: {state.lam:.3f}")

    baseline, _ = exact_policy_value(
        env, LoggingPolicy(env, spec), 4_000, root.child("baseline_eval")
    )
    print(f"\n{'policy':<10} {'true value':>10} {'vs logging':>10} "
          f"{'novelty':>8} {'violated':>8}")
    for name, policy in (("naive", naive), ("safe", safe)):
        rep = metric_report(
            env, policy, baseline, threshold, 4_000, root.child(f"eval_{name}")
        )
        print(f"{name:<10} {rep.true_value:>10.4f} {rep.relative_value:>10.3f} "
              f"{rep.novelty:>8.4f} {str(rep.violated).lower():>8}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
