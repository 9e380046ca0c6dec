"""Staged deployments that spend accumulated safety margin.

With K deployments and a per-stage data budget m, stage k trains a policy on
the data its predecessor collected, under a threshold relaxed by the margin
earlier stages banked:

    effective threshold at stage k = k*C - sum_{k' < k} V_on(pi_k')

so a stage that lands above C lowers the bar for every later stage, and the
cumulative constraint "average value so far exceeds C" is preserved.  Each
trained policy is deployed once to collect the next stage's data and its own
on-policy estimate.  On-policy estimates can optionally be clipped at
``clip_factor * clip_reference`` before entering the margin arithmetic, which
caps how much any single lucky stage can relax its successors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import BanditDataset, concatenate_datasets, split_dataset, subsample
from .environment import Environment, LoggingPolicySpec, collect_data, generate_logged_data
from .estimators import HcopeConfig, SafetySpec, hcope_lower_bound, on_policy_value
from .evaluation import _value_and_novelty
from .learners import LagrangianState, TrainConfig, train_safe_opg
from .policy import SoftmaxPolicy
from .reward_model import RewardModelConfig, train_reward_model
from .rng import RngStream

REPORT_HEADER = (
    "stage,effective_threshold,hcope_bound,on_policy_value,"
    "cumulative_margin,novelty,true_value"
)


@dataclass(frozen=True)
class DeploymentPlan:
    """Stage count, per-stage budget, base threshold, and clip settings."""

    n_deployments: int
    samples_per_stage: int
    base_threshold: float
    delta: float
    clip_factor: float | None = None
    clip_reference: float | None = None

    def validate(self) -> None:
        if self.n_deployments < 1:
            raise ValueError("n_deployments must be at least 1")
        if self.samples_per_stage < 2:
            raise ValueError("samples_per_stage must be at least 2")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.clip_factor is not None:
            if self.clip_factor <= 0.0:
                raise ValueError("clip_factor must be positive")
            if self.clip_reference is None:
                raise ValueError("clip_reference required when clipping is on")

    def clip_estimate(self, value: float) -> float:
        """On-policy estimate as it enters the margin accounting."""
        if self.clip_factor is None:
            return value
        return min(value, self.clip_factor * self.clip_reference)


@dataclass(frozen=True)
class StageRecord:
    """Everything one deployment produced."""

    stage: int
    policy: SoftmaxPolicy
    training_data: BanditDataset
    collected_data: BanditDataset
    on_policy_estimate: float
    effective_threshold: float
    hcope_bound: float
    cumulative_margin: float
    state: LagrangianState


@dataclass
class DeploymentHistory:
    """Append-only, stage-ordered record of a deployment sequence."""

    plan: DeploymentPlan
    stage0_data: BanditDataset
    records: list[StageRecord] = field(default_factory=list)

    def append(self, record: StageRecord) -> None:
        if record.stage != len(self.records) + 1:
            raise ValueError(
                f"stage {record.stage} appended out of order "
                f"(expected {len(self.records) + 1})"
            )
        self.records.append(record)


def effective_threshold(
    plan: DeploymentPlan, history: DeploymentHistory, k: int
) -> float:
    """Threshold stage k must certify against, after margin relaxation."""
    if k < 1:
        raise ValueError("stage index must be at least 1")
    if k == 1:
        return plan.base_threshold
    if len(history.records) < k - 1:
        raise ValueError("missing prior stages")
    banked = sum(
        plan.clip_estimate(rec.on_policy_estimate)
        for rec in history.records[: k - 1]
    )
    return k * plan.base_threshold - banked


def cumulative_margin(history: DeploymentHistory, threshold: float, k: int) -> float:
    """Banked surplus through stage k: clipped estimates minus k*threshold."""
    if len(history.records) < k:
        raise ValueError("missing prior stages")
    banked = sum(
        history.plan.clip_estimate(rec.on_policy_estimate)
        for rec in history.records[:k]
    )
    return banked - k * threshold


def run_depsue(
    env: Environment,
    logging_spec: LoggingPolicySpec,
    plan: DeploymentPlan,
    model_cfg: RewardModelConfig,
    train_cfg: TrainConfig,
    hcope_cfg: HcopeConfig,
    rng: RngStream,
    data0: BanditDataset | None = None,
    model_variant: str = "naive_mean",
    warm_start: bool = False,
) -> DeploymentHistory:
    """Run the K-stage deployment loop and return its full history.

    Stage k consumes random streams ``stage{k}/split``, ``stage{k}/model``,
    ``stage{k}/train`` and ``stage{k}/collect`` derived from ``rng``; stage-0
    data is generated under ``stage0/collect`` when not supplied, or
    subsampled to the per-stage budget under ``stage0/subsample`` when
    supplied larger.  The reward model is retrained each stage on all data
    observed so far, since actions novel to the logging policy become
    supported once a deployed policy logs them.  Policies start from uniform
    each stage unless ``warm_start`` carries the predecessor's weights over.
    """
    plan.validate()
    m = plan.samples_per_stage
    if data0 is None:
        data0 = generate_logged_data(env, logging_spec, m, rng.child("stage0/collect"))
    elif len(data0) > m:
        data0 = subsample(data0, m, rng.child("stage0/subsample"))
    history = DeploymentHistory(plan=plan, stage0_data=data0)
    observed = [data0]
    data_prev = data0
    prev_policy: SoftmaxPolicy | None = None
    for k in range(1, plan.n_deployments + 1):
        split = split_dataset(data_prev, 0.5, rng.child(f"stage{k}/split"))
        s1, s2 = split.s1(), split.s2()
        if len(s2) < 40:
            raise ValueError("stage data too small")
        model = train_reward_model(
            concatenate_datasets(observed),
            env.action_features,
            model_cfg,
            model_variant,
            rng.child(f"stage{k}/model"),
        )
        threshold_k = effective_threshold(plan, history, k)
        train_rng = rng.child(f"stage{k}/train")
        policy, state = train_safe_opg(
            s1,
            s2,
            SafetySpec(threshold_k, plan.delta),
            hcope_cfg,
            model,
            env.action_features,
            train_cfg,
            train_rng,
            initial_policy=prev_policy if warm_start else None,
        )
        policy.policy_id = f"pi_{k}"
        # Same stream the training loop used, so this equals the last
        # certified bound of the final policy.
        bound = hcope_lower_bound(policy, s2, hcope_cfg, train_rng.child("hcope"))
        data_k = collect_data(env, policy, m, rng.child(f"stage{k}/collect"))
        v_on = on_policy_value(data_k)
        banked = sum(
            plan.clip_estimate(rec.on_policy_estimate) for rec in history.records
        ) + plan.clip_estimate(v_on)
        history.append(
            StageRecord(
                stage=k,
                policy=policy,
                training_data=split,
                collected_data=data_k,
                on_policy_estimate=v_on,
                effective_threshold=threshold_k,
                hcope_bound=bound,
                cumulative_margin=banked - k * plan.base_threshold,
                state=state,
            )
        )
        observed.append(data_k)
        data_prev = data_k
        prev_policy = policy
    return history


def write_deployment_report(
    history: DeploymentHistory,
    env: Environment,
    path: str,
    n_contexts: int,
    rng: RngStream,
) -> None:
    """Per-stage CSV report with ground-truth novelty and value appended."""
    with open(path, "w") as fh:
        fh.write(REPORT_HEADER + "\n")
        for rec in history.records:
            value, _, nov = _value_and_novelty(
                env, rec.policy, n_contexts, rng.child(f"stage{rec.stage}")
            )
            fh.write(
                f"{rec.stage},{rec.effective_threshold:.17g},"
                f"{rec.hcope_bound:.17g},{rec.on_policy_estimate:.17g},"
                f"{rec.cumulative_margin:.17g},{nov:.17g},{value:.17g}\n"
            )
