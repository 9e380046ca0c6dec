#!/usr/bin/env python3
"""Split one deployment budget into K certified stages and watch novelty grow.

A single safe deployment must justify everything from the initial logs, so it
hugs the logging policy.  Splitting the same interaction budget into K stages
lets each certified policy collect data under itself; the next stage's reward
model then vouches for a wider slice of the action space, and the learner can
push further from the logging policy without losing its certificate.  Each
stage k must clear an effective threshold k*C minus the margin already banked
by earlier stages.

The logging policy here is anti-concentrated (beta = -8, it prefers poor
actions), so there is real headroom to discover: more stages should mean more
probability mass on never-logged actions at equal or better certified value.

Run it (about one minute):

    python3 demos/staged_deployment.py [seed]

Example output (seed 0):

    K=1: stages spend 6000 samples each
      stage 1: threshold 0.589, bound 0.207, value 0.777, novelty 0.067
      final policy: true value 0.774, novelty 0.068

    K=2: stages spend 3000 samples each
      stage 1: threshold 0.589, bound 0.175, value 0.777, novelty 0.065
      stage 2: threshold 0.401, bound 0.668, value 0.823, novelty 0.243
      final policy: true value 0.822, novelty 0.243

    K=3: stages spend 2000 samples each
      stage 1: threshold 0.589, bound 0.168, value 0.776, novelty 0.070
      stage 2: threshold 0.401, bound 0.681, value 0.823, novelty 0.244
      stage 3: threshold 0.174, bound 0.746, value 0.824, novelty 0.240
      final policy: true value 0.822, novelty 0.240

Notice the stage-1 bound sits far below its threshold (the first policy must
be vouched for by someone else's data), while stage 2's bound clears its
threshold easily: one round of self-collected data is enough to certify a
policy that is both better and nearly four times more novel.
"""

import sys

from safeopl.depsue import DeploymentPlan, run_depsue
from safeopl.environment import (
    EnvironmentConfig,
    LoggingPolicySpec,
    build_environment,
    generate_logged_data,
)
from safeopl.estimators import HcopeConfig, on_policy_value
from safeopl.evaluation import exact_policy_value, novelty
from safeopl.learners import TrainConfig
from safeopl.reward_model import RewardModelConfig
from safeopl.rng import RngStream


def main(seed: int = 0) -> None:
    config = EnvironmentConfig(
        d_x=6, d_a=3, n_actions=12, n_supported=9,
        ground_truth_seed=3, hidden_widths=(32, 16),
    )
    env = build_environment(config)
    spec = LoggingPolicySpec(beta=-8.0)
    n_total = 6_000

    for k in (1, 2, 3):
        root = RngStream(seed)
        data0 = generate_logged_data(env, spec, n_total, root.child("data"))
        plan = DeploymentPlan(
            n_deployments=k,
            samples_per_stage=n_total // k,
            base_threshold=0.95 * on_policy_value(data0),
            delta=0.05,
        )
        history = run_depsue(
            env,
            spec,
            plan,
            RewardModelConfig(hidden_widths=(64, 16), n_members=3, epochs=15),
            TrainConfig(eta_psi=0.001, steps=1_500),
            HcopeConfig(),
            root.child("depsue"),
            data0=data0,
        )
        print(f"K={k}: stages spend {plan.samples_per_stage} samples each")
        for rec in history.records:
            value, _ = exact_policy_value(
                env, rec.policy, 4_000, root.child(f"eval{rec.stage}")
            )
            nov = novelty(env, rec.policy, 4_000, root.child(f"nov{rec.stage}"))
            print(
                f"  stage {rec.stage}: threshold {rec.effective_threshold:.3f}, "
                f"bound {rec.hcope_bound:.3f}, value {value:.3f}, novelty {nov:.3f}"
            )
        final = history.records[-1]
        value, _ = exact_policy_value(env, final.policy, 4_000, root.child("final"))
        nov = novelty(env, final.policy, 4_000, root.child("final_nov"))
        print(f"  final policy: true value {value:.3f}, novelty {nov:.3f}\n")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
