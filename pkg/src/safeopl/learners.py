"""Policy training: model-based gradient ascent and the safe primal-dual loop.

Two learners share one ascent engine:

* ``train_opg`` maximizes ``(1-alpha) * V_hat + alpha * entropy`` on the full
  dataset, where ``V_hat`` is the model-based value with the inner
  expectation enumerated exactly over all actions.
* ``train_safe_opg`` additionally carries a Lagrange multiplier.  Gradients
  of ``L = (1-alpha) * V_hat + alpha * entropy + lambda * R`` are estimated
  on the S1 fold only, with ``R = E[r_i * log pi(a_i|x_i)]`` pulling the
  policy toward rewarded logged actions.  After each policy step the
  high-confidence lower bound of the current policy is evaluated on the
  disjoint S2 fold and the multiplier moves by
  ``lambda <- max(lambda - eta_lambda * (bound - C), 0)``.

All per-step gradients are assembled in score space (derivatives w.r.t. the
n_actions network outputs) and pushed through the policy network in a single
backward pass.  When ``rescale_gradient`` is on, the combined gradient is
multiplied by ``1 / max pi(a|x)`` over the batch, which adapts the step size
to how peaked the policy has become.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import BanditDataset
from .environment import Environment, LoggingPolicySpec, logging_policy_matrix
from .estimators import (
    HcopeConfig,
    SafetySpec,
    _bernstein_bound,
    empirical_bernstein_lower_bound,
)
from .policy import GradientBuffer, SoftmaxPolicy, create_policy
from .reward_model import RewardModel
from .rng import RngStream

TRACE_HEADER = "step,lambda,hcope_lower_bound,batch_objective"


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the gradient-ascent loops.

    ``eta_psi`` defaults to the baseline learners' rate; safe runs
    conventionally use 0.001.  ``lambda_update_interval`` thins the bound
    evaluation for large runs (1 = every step).
    """

    eta_psi: float = 0.1
    eta_lambda: float = 0.01
    steps: int = 10_000
    entropy_alpha: float = 0.1
    batch_contexts: int = 1024
    rescale_gradient: bool = True
    policy_hidden_width: int = 100
    lambda_update_interval: int = 1

    def validate(self) -> None:
        if self.eta_psi <= 0.0 or self.eta_lambda <= 0.0:
            raise ValueError("learning rates must be positive")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if not 0.0 <= self.entropy_alpha < 1.0:
            raise ValueError("entropy_alpha must lie in [0, 1)")
        if self.batch_contexts < 1:
            raise ValueError("batch_contexts must be at least 1")
        if self.policy_hidden_width < 1:
            raise ValueError("policy_hidden_width must be at least 1")
        if self.lambda_update_interval < 1:
            raise ValueError("lambda_update_interval must be at least 1")


@dataclass
class LagrangianState:
    """Multiplier value plus the per-step training trace.

    Trace rows are ``(step, lambda, hcope_lower_bound, batch_objective)``;
    the bound column is NaN on steps where it was not evaluated.
    """

    lam: float = 0.0
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)


def lambda_update(lam: float, eta_lambda: float, bound: float, threshold: float) -> float:
    """One projected dual step: shrink when the bound clears the threshold."""
    return max(lam - eta_lambda * (bound - threshold), 0.0)


def _value_score_grad(probs: np.ndarray, q_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-context values and d(sum_i value_i)/d(scores)."""
    v = (probs * q_hat).sum(axis=1)
    return v, probs * (q_hat - v[:, None])


def _entropy_score_grad(probs: np.ndarray, log_probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-context entropies and d(sum_i H_i)/d(scores)."""
    h = -(probs * log_probs).sum(axis=1)
    return h, -probs * (log_probs + h[:, None])


def value_gradient(
    policy: SoftmaxPolicy,
    data_s1: BanditDataset,
    model: RewardModel,
    action_features: np.ndarray,
    cfg: TrainConfig,
) -> GradientBuffer:
    """Gradient of the model-based value estimate over the given fold.

    The inner expectation over actions is enumerated exactly; only contexts
    are averaged.  Applies the 1/max-probability rescaling when configured.
    """
    if len(data_s1) == 0:
        raise ValueError("empty batch")
    probs, cache = policy.action_matrix_with_cache(data_s1.contexts)
    q_hat = model.predict_matrix(data_s1.contexts, action_features)
    _, grad_scores = _value_score_grad(probs, q_hat)
    grad = policy.backprop_cached(cache, grad_scores / len(data_s1))
    if cfg.rescale_gradient:
        grad /= probs.max()
    return grad


def entropy_gradient(
    policy: SoftmaxPolicy, contexts: np.ndarray, cfg: TrainConfig
) -> GradientBuffer:
    """Gradient of the mean policy entropy over a context batch."""
    contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
    if contexts.shape[0] == 0:
        raise ValueError("empty batch")
    probs, cache = policy.action_matrix_with_cache(contexts)
    _, grad_scores = _entropy_score_grad(probs, np.log(probs))
    return policy.backprop_cached(cache, grad_scores / contexts.shape[0])


def regularizer_value_and_gradient(
    policy: SoftmaxPolicy, data_s1: BanditDataset
) -> tuple[float, GradientBuffer]:
    """Reward-weighted log-likelihood of logged actions, and its gradient."""
    n = len(data_s1)
    if n == 0:
        raise ValueError("empty batch")
    probs, cache = policy.action_matrix_with_cache(data_s1.contexts)
    idx = np.arange(n)
    log_chosen = np.log(probs[idx, data_s1.actions])
    value = float((data_s1.rewards * log_chosen).mean())
    grad_scores = -probs * data_s1.rewards[:, None]
    grad_scores[idx, data_s1.actions] += data_s1.rewards
    return value, policy.backprop_cached(cache, grad_scores / n)


class _BoundEvaluator:
    """Per-step HCOPE evaluation with hoisted state and reused buffers.

    Calling the evaluator on a policy returns exactly what
    ``hcope_lower_bound(policy, data, cfg, rng)`` returns: the rng-derived
    tuning/evaluation split is fixed across calls (the stream is consumed
    fresh on every public call, yielding the same permutation), so it is
    computed once here, and the forward pass writes into preallocated
    arrays.  Only chosen-action probabilities are materialized; the softmax
    normalization divides those entries alone, which is bitwise identical to
    normalizing the full matrix and then indexing it.
    """

    def __init__(self, data: BanditDataset, cfg: HcopeConfig, rng: RngStream):
        n = len(data)
        if n == 0:
            raise ValueError("empty dataset")
        if np.any(data.propensities <= 0.0):
            raise ValueError("invalid propensity")
        n_tune = max(2, round(cfg.tuning_fraction * n))
        if n - n_tune < 2:
            raise ValueError("evaluation fold smaller than 2 samples")
        perm = rng.generator().permutation(n)
        self.cfg = cfg
        self.contexts = np.ascontiguousarray(data.contexts)
        self.rows = np.arange(n)
        self.actions = data.actions
        self.propensities = data.propensities
        self.rewards = data.rewards
        self.tune, self.eval_ = perm[:n_tune], perm[n_tune:]
        self.r_tune = data.rewards[self.tune]
        self.r_eval = data.rewards[self.eval_]
        self.n_eval = n - n_tune
        self._h: np.ndarray | None = None
        self._scores: np.ndarray | None = None

    def _chosen_probs(self, policy: SoftmaxPolicy) -> np.ndarray:
        (w1, b1), (w2, b2) = policy.params
        n = self.contexts.shape[0]
        if self._h is None or self._h.shape[1] != w1.shape[1]:
            self._h = np.empty((n, w1.shape[1]))
            self._scores = np.empty((n, w2.shape[1]))
        h, scores = self._h, self._scores
        np.dot(self.contexts, w1, out=h)
        h += b1
        np.maximum(h, 0.0, out=h)
        np.dot(h, w2, out=scores)
        scores += b2
        scores -= scores.max(axis=1, keepdims=True)
        np.exp(scores, out=scores)
        return scores[self.rows, self.actions] / scores.sum(axis=1)

    def __call__(self, policy: SoftmaxPolicy) -> float:
        cfg = self.cfg
        weights = self._chosen_probs(policy) / self.propensities
        w_tune = weights[self.tune]
        best_tau, best_obj = cfg.tau_grid[0], -math.inf
        for tau in cfg.tau_grid:
            z = np.minimum(w_tune, tau) * self.r_tune
            obj = _bernstein_bound(
                float(z.mean()),
                float(z.var(ddof=1)),
                tau * cfg.r_max,
                cfg.delta,
                self.n_eval,
            )
            if obj > best_obj:
                best_tau, best_obj = tau, obj
        z_eval = np.minimum(weights[self.eval_], best_tau) * self.r_eval
        return empirical_bernstein_lower_bound(
            z_eval, best_tau * cfg.r_max, cfg.delta
        )


def _row_keys(data: BanditDataset) -> set[bytes]:
    keys = set()
    for i in range(len(data)):
        keys.add(
            data.contexts[i].tobytes()
            + int(data.actions[i]).to_bytes(8, "little", signed=True)
            + np.float64(data.rewards[i]).tobytes()
            + np.float64(data.propensities[i]).tobytes()
        )
    return keys


def _train_loop(
    data_train: BanditDataset,
    model: RewardModel,
    action_features: np.ndarray,
    cfg: TrainConfig,
    rng: RngStream,
    state: LagrangianState,
    safety: SafetySpec | None = None,
    hcope_cfg: HcopeConfig | None = None,
    data_bound: BanditDataset | None = None,
    initial_policy: SoftmaxPolicy | None = None,
) -> SoftmaxPolicy:
    cfg.validate()
    if len(data_train) == 0:
        raise ValueError("empty dataset")
    n = len(data_train)
    n_actions = action_features.shape[0]
    if initial_policy is not None:
        policy = initial_policy.copy()
    else:
        policy = create_policy(
            data_train.d_x, cfg.policy_hidden_width, n_actions,
            rng.child("policy_init"),
        )
    q_hat = model.predict_matrix(data_train.contexts, action_features)
    batch_gen = rng.child("batches").generator()
    bound_of = None
    if safety is not None:
        bound_of = _BoundEvaluator(data_bound, hcope_cfg, rng.child("hcope"))
    alpha = cfg.entropy_alpha
    arange_cache = np.arange(min(cfg.batch_contexts, n))
    for step in range(1, cfg.steps + 1):
        if cfg.batch_contexts >= n:
            idx = slice(None)
            batch = n
        else:
            idx = batch_gen.integers(0, n, size=cfg.batch_contexts)
            batch = cfg.batch_contexts
        contexts = data_train.contexts[idx]
        probs, cache = policy.action_matrix_with_cache(contexts)
        log_probs = np.log(probs)
        v_row, grad_v = _value_score_grad(probs, q_hat[idx])
        h_row, grad_h = _entropy_score_grad(probs, log_probs)
        grad_scores = (1.0 - alpha) * grad_v + alpha * grad_h
        objective = (1.0 - alpha) * v_row.mean() + alpha * h_row.mean()
        if state.lam != 0.0:
            rewards = data_train.rewards[idx]
            actions = data_train.actions[idx]
            rows = arange_cache[:batch]
            grad_r = -probs * rewards[:, None]
            grad_r[rows, actions] += rewards
            grad_scores += state.lam * grad_r
            objective += state.lam * float(
                (rewards * log_probs[rows, actions]).mean()
            )
        grad = policy.backprop_cached(cache, grad_scores / batch)
        if cfg.rescale_gradient:
            grad /= probs.max()
        policy.set_flat_params(policy.get_flat_params() + cfg.eta_psi * grad)
        bound = math.nan
        if bound_of is not None and step % cfg.lambda_update_interval == 0:
            bound = bound_of(policy)
            state.lam = lambda_update(
                state.lam, cfg.eta_lambda, bound, safety.threshold
            )
        state.trace.append((step, state.lam, bound, float(objective)))
    return policy


def train_opg(
    data: BanditDataset,
    model: RewardModel,
    action_features: np.ndarray,
    cfg: TrainConfig,
    rng: RngStream,
    state: LagrangianState | None = None,
) -> SoftmaxPolicy:
    """Unconstrained ascent on the entropy-regularized model-based value.

    Trains on the full dataset without fold structure.  Pass a fresh
    ``state`` to capture the per-step objective trace.
    """
    return _train_loop(
        data, model, action_features, cfg, rng,
        state if state is not None else LagrangianState(),
    )


def train_safe_opg(
    data_s1: BanditDataset,
    data_s2: BanditDataset,
    safety: SafetySpec,
    hcope_cfg: HcopeConfig,
    model: RewardModel,
    action_features: np.ndarray,
    cfg: TrainConfig,
    rng: RngStream,
    initial_policy: SoftmaxPolicy | None = None,
) -> tuple[SoftmaxPolicy, LagrangianState]:
    """Primal-dual training with a high-confidence safety constraint.

    Policy gradients come from S1 only; S2 is touched exclusively through
    the lower bound driving the multiplier.  The folds must be disjoint.
    """
    if len(data_s1) == 0 or len(data_s2) == 0:
        raise ValueError("empty dataset")
    if _row_keys(data_s1) & _row_keys(data_s2):
        raise ValueError("fold leakage")
    state = LagrangianState()
    policy = _train_loop(
        data_s1, model, action_features, cfg, rng, state,
        safety=safety, hcope_cfg=hcope_cfg, data_bound=data_s2,
        initial_policy=initial_policy,
    )
    return policy, state


@dataclass(frozen=True)
class MixturePolicy:
    """Fixed mixture of the logging policy and uniform novel exploration."""

    env: Environment
    logging_spec: LoggingPolicySpec
    mix: float
    policy_id: str = ""

    def __post_init__(self) -> None:
        if not self.policy_id:
            object.__setattr__(
                self,
                "policy_id",
                f"naive_safe_exploration(beta={self.logging_spec.beta:g},"
                f"mix={self.mix:g})",
            )

    def action_matrix(self, contexts: np.ndarray) -> np.ndarray:
        probs = logging_policy_matrix(self.env, self.logging_spec, contexts)
        probs *= 1.0 - self.mix
        novel = self.env.novel_actions
        probs[:, novel] += self.mix / novel.size
        return probs

    def action_distribution(self, x: np.ndarray) -> np.ndarray:
        return self.action_matrix(np.atleast_2d(x))[0]


def naive_safe_exploration(
    logging_spec: LoggingPolicySpec, env: Environment, mix: float = 0.05
) -> MixturePolicy:
    """Logging policy diluted with a fixed dose of uniform novel actions.

    With probability ``1 - mix`` the mixture follows the logging policy;
    otherwise it picks uniformly among the novel actions, so its novelty is
    ``mix`` by construction.
    """
    if not 0.0 <= mix < 1.0:
        raise ValueError("mix must lie in [0, 1)")
    if env.novel_actions.size == 0:
        raise ValueError("no novel actions")
    return MixturePolicy(env, logging_spec, mix)


def save_trace(state: LagrangianState, path: str) -> None:
    """Write the per-step trace CSV for one training run."""
    with open(path, "w") as fh:
        fh.write(TRACE_HEADER + "\n")
        for step, lam, bound, objective in state.trace:
            fh.write(f"{step},{lam:.17g},{bound:.17g},{objective:.17g}\n")
