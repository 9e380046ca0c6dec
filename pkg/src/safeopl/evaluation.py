"""Ground-truth metrics, the validation hypothesis test, and diagnostics.

True policy values are computed by Monte-Carlo over contexts only: the inner
expectation over actions uses the environment's exact reward surface, so the
single noise source is context sampling and a standard error over contexts
accompanies every value.  Novelty is the exact probability mass the policy
places on novel actions, averaged over the same kind of context sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .environment import Environment
from .reward_model import RewardModel
from .rng import RngStream

POSITIVE = "positive"
NEGATIVE = "negative"
SAFE_IMPROVED = "safe_improved"
NOT_IMPROVED = "not_improved"

_EVAL_CHUNK = 10_000


@dataclass(frozen=True)
class MetricReport:
    """Ground-truth summary of one learned policy."""

    true_value: float
    relative_value: float
    novelty: float
    violated: bool
    value_stderr: float = 0.0


@dataclass(frozen=True)
class HypothesisOutcome:
    """One validation-test result paired with the ground-truth label."""

    decision: str
    truth: str

    def __post_init__(self) -> None:
        if self.decision not in (POSITIVE, NEGATIVE):
            raise ValueError(f"decision must be '{POSITIVE}' or '{NEGATIVE}'")
        if self.truth not in (SAFE_IMPROVED, NOT_IMPROVED):
            raise ValueError(
                f"truth must be '{SAFE_IMPROVED}' or '{NOT_IMPROVED}'"
            )


def _value_and_novelty(
    env: Environment, policy, n_contexts: int, rng: RngStream
) -> tuple[float, float, float]:
    """Shared Monte-Carlo pass returning (value, stderr, novelty)."""
    if n_contexts < 1:
        raise ValueError("n_contexts must be at least 1")
    contexts = env.sample_contexts(n_contexts, rng)
    n_sup = env.config.n_supported
    values = np.empty(n_contexts)
    novel_mass = np.empty(n_contexts)
    for lo in range(0, n_contexts, _EVAL_CHUNK):
        hi = min(lo + _EVAL_CHUNK, n_contexts)
        probs = policy.action_matrix(contexts[lo:hi])
        q = env.reward_matrix(contexts[lo:hi])
        values[lo:hi] = (probs * q).sum(axis=1)
        novel_mass[lo:hi] = probs[:, n_sup:].sum(axis=1)
    stderr = 0.0
    if n_contexts > 1:
        stderr = float(values.std(ddof=1) / np.sqrt(n_contexts))
    return float(values.mean()), stderr, float(novel_mass.mean())


def exact_policy_value(
    env: Environment, policy, n_contexts: int, rng: RngStream
) -> tuple[float, float]:
    """True value of a policy and the standard error over contexts.

    The expectation over actions is enumerated exactly per sampled context.
    """
    value, stderr, _ = _value_and_novelty(env, policy, n_contexts, rng)
    return value, stderr


def novelty(env: Environment, policy, n_contexts: int, rng: RngStream) -> float:
    """Probability the policy picks a novel action, on a fresh context draw."""
    _, _, nov = _value_and_novelty(env, policy, n_contexts, rng)
    return nov


def violation_rate(values, threshold: float) -> float:
    """Fraction of true values strictly below the safety threshold."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("values must be non-empty")
    return float((values < threshold).mean())


def validation_hypothesis_test(estimate: float, baseline_on_policy: float) -> str:
    """Positive iff the estimate strictly exceeds the on-policy baseline."""
    if not (np.isfinite(estimate) and np.isfinite(baseline_on_policy)):
        raise ValueError("estimate and baseline must be finite")
    return POSITIVE if estimate > baseline_on_policy else NEGATIVE


def error_rates(outcomes) -> tuple[float, float]:
    """Type I and Type II error rates over labeled test outcomes.

    Type I is the positive rate among truly not-improved policies; Type II
    is the negative rate among truly improved ones.  A rate is NaN when its
    truth partition is empty.
    """
    fp = tn = fn = tp = 0
    for outcome in outcomes:
        if outcome.truth == NOT_IMPROVED:
            if outcome.decision == POSITIVE:
                fp += 1
            else:
                tn += 1
        else:
            if outcome.decision == NEGATIVE:
                fn += 1
            else:
                tp += 1
    type_i = fp / (fp + tn) if fp + tn else float("nan")
    type_ii = fn / (fn + tp) if fn + tp else float("nan")
    return type_i, type_ii


def metric_report(
    env: Environment,
    policy,
    baseline_value: float,
    threshold: float,
    n_contexts: int,
    rng: RngStream,
) -> MetricReport:
    """Evaluate one policy against the exact baseline value and threshold."""
    value, stderr, nov = _value_and_novelty(env, policy, n_contexts, rng)
    return MetricReport(
        true_value=value,
        relative_value=value / baseline_value,
        novelty=nov,
        violated=bool(value < threshold),
        value_stderr=stderr,
    )


@dataclass(frozen=True)
class PartitionDiagnostics:
    """Predicted-vs-true reward summary on one action partition."""

    partition: str
    mean_predicted: float
    mean_true: float
    signed_gap: float
    mse: float
    predicted_hist: np.ndarray
    true_hist: np.ndarray


@dataclass(frozen=True)
class RewardModelDiagnostics:
    supported: PartitionDiagnostics
    novel: PartitionDiagnostics
    bin_edges: np.ndarray


def _partition_diagnostics(
    name: str, q_hat: np.ndarray, q_true: np.ndarray, edges: np.ndarray
) -> PartitionDiagnostics:
    mean_pred = float(q_hat.mean())
    mean_true = float(q_true.mean())
    return PartitionDiagnostics(
        partition=name,
        mean_predicted=mean_pred,
        mean_true=mean_true,
        signed_gap=mean_pred - mean_true,
        mse=float(((q_hat - q_true) ** 2).mean()),
        predicted_hist=np.histogram(q_hat, bins=edges)[0],
        true_hist=np.histogram(q_true, bins=edges)[0],
    )


def reward_model_diagnostics(
    model: RewardModel,
    env: Environment,
    n_contexts: int,
    rng: RngStream,
    n_bins: int = 20,
) -> RewardModelDiagnostics:
    """Compare predicted and true rewards on supported vs novel actions.

    A positive signed gap on the novel partition means the model
    overestimates rewards it never saw logged.
    """
    if n_contexts < 1:
        raise ValueError("n_contexts must be at least 1")
    contexts = env.sample_contexts(n_contexts, rng)
    q_true = env.reward_matrix(contexts)
    q_hat = model.predict_matrix(contexts, env.action_features)
    n_sup = env.config.n_supported
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    return RewardModelDiagnostics(
        supported=_partition_diagnostics(
            "supported", q_hat[:, :n_sup], q_true[:, :n_sup], edges
        ),
        novel=_partition_diagnostics(
            "novel", q_hat[:, n_sup:], q_true[:, n_sup:], edges
        ),
        bin_edges=edges,
    )


def save_diagnostics(diag: RewardModelDiagnostics, path: str) -> None:
    """Write histogram bins and scalar gaps as one CSV.

    Histogram rows carry bin bounds and a count; scalar rows leave the bin
    columns empty.
    """
    with open(path, "w") as fh:
        fh.write("partition,series,bin_left,bin_right,value\n")
        for part in (diag.supported, diag.novel):
            for series, hist in (
                ("predicted_hist", part.predicted_hist),
                ("true_hist", part.true_hist),
            ):
                for j, count in enumerate(hist):
                    left, right = diag.bin_edges[j], diag.bin_edges[j + 1]
                    fh.write(
                        f"{part.partition},{series},{left:.17g},"
                        f"{right:.17g},{int(count)}\n"
                    )
            for series, value in (
                ("mean_predicted", part.mean_predicted),
                ("mean_true", part.mean_true),
                ("signed_gap", part.signed_gap),
                ("mse", part.mse),
            ):
                fh.write(f"{part.partition},{series},,,{value:.17g}\n")
