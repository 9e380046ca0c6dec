"""Synthetic contextual-bandit world with supported and novel actions.

The environment owns a fixed action set with per-action feature vectors, a
ground-truth expected-reward surface ``q(x, e_a)`` given by a small ReLU
network with a sigmoid head, and a context distribution (standard normal, or
an optional finite pool).  Actions ``0 .. n_supported-1`` form the supported
set available to the logging policy; the remaining ids are novel.

The logging-policy family is a softmax over the supported actions with
scores ``beta * logit(q(x, e_a))``: large positive ``beta`` concentrates on
high-reward supported actions, negative ``beta`` prefers poor ones, and
``beta = 0`` is uniform over the supported set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .data import BanditDataset
from .rng import RngStream

# Reward probabilities are clamped before the log-odds transform so inverse
# temperatures never meet an infinite logit.
_Q_CLAMP = 1e-9

# Weight scale of the ground-truth network.  A plain 1/sqrt(fan_in) draw
# leaves the sigmoid output hugging 0.5 everywhere; this gain spreads the
# reward surface over most of (0, 1) so action choice actually matters and
# a concentrated logging policy is clearly worth protecting.
_GROUND_TRUTH_GAIN = 3.0

DEFAULT_BETA_SWEEP = (-24.0, -16.0, -8.0, 0.0, 8.0, 16.0, 24.0)


@dataclass(frozen=True)
class EnvironmentConfig:
    """Dimensions, action counts, and seed of a synthetic world."""

    d_x: int
    d_a: int
    n_actions: int
    n_supported: int
    ground_truth_seed: int
    hidden_widths: tuple[int, int] = (100, 50)
    context_pool_size: int | None = None

    def validate(self) -> None:
        if self.d_x < 1:
            raise ValueError("d_x must satisfy d_x >= 1")
        if self.d_a < 1:
            raise ValueError("d_a must satisfy d_a >= 1")
        if not 0 < self.n_supported < self.n_actions:
            raise ValueError(
                "n_supported must satisfy 0 < n_supported < n_actions"
            )
        if len(self.hidden_widths) != 2 or min(self.hidden_widths) < 1:
            raise ValueError("hidden_widths must be two positive integers")
        if self.context_pool_size is not None and self.context_pool_size < 1:
            raise ValueError("context_pool_size must satisfy size >= 1")


@dataclass(frozen=True)
class LoggingPolicySpec:
    """Inverse temperature of the supported-action softmax logger."""

    beta: float


@dataclass(frozen=True)
class Environment:
    """Immutable world: action features plus ground-truth reward network."""

    config: EnvironmentConfig
    action_features: np.ndarray
    ground_truth_params: nn.Params
    context_pool: np.ndarray | None = None

    @property
    def n_actions(self) -> int:
        return self.config.n_actions

    @property
    def supported_actions(self) -> np.ndarray:
        return np.arange(self.config.n_supported)

    @property
    def novel_actions(self) -> np.ndarray:
        return np.arange(self.config.n_supported, self.config.n_actions)

    def sample_contexts(self, n: int, rng: RngStream) -> np.ndarray:
        """Draw ``n`` contexts from the world's context distribution."""
        gen = rng.generator()
        if self.context_pool is not None:
            idx = gen.integers(0, self.context_pool.shape[0], size=n)
            return self.context_pool[idx]
        return gen.standard_normal((n, self.config.d_x))

    def reward_matrix(self, contexts: np.ndarray) -> np.ndarray:
        """Ground-truth mean rewards, shape ``(n, n_actions)``."""
        contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
        if contexts.shape[1] != self.config.d_x:
            raise ValueError(f"context must have dimension {self.config.d_x}")
        z = nn.pairwise_forward(
            self.ground_truth_params, contexts, self.action_features
        )
        return nn.sigmoid(z)

    def reward_for_pairs(self, contexts: np.ndarray, actions: np.ndarray) -> np.ndarray:
        """Ground-truth mean reward of each (context, action) pair."""
        inputs = np.hstack([contexts, self.action_features[actions]])
        return nn.sigmoid(nn.forward(self.ground_truth_params, inputs))[:, 0]


def build_environment(config: EnvironmentConfig) -> Environment:
    """Materialize a world deterministically from its config."""
    config.validate()
    root = RngStream(config.ground_truth_seed)
    features = (
        root.child("action_features")
        .generator()
        .standard_normal((config.n_actions, config.d_a))
    )
    h1, h2 = config.hidden_widths
    params = nn.init_params(
        (config.d_x + config.d_a, h1, h2, 1),
        root.child("ground_truth_weights").generator(),
        scheme="fan_in",
        gain=_GROUND_TRUTH_GAIN,
    )
    pool = None
    if config.context_pool_size is not None:
        pool = (
            root.child("context_pool")
            .generator()
            .standard_normal((config.context_pool_size, config.d_x))
        )
    return Environment(
        config=config,
        action_features=features,
        ground_truth_params=params,
        context_pool=pool,
    )


def _check_action(env: Environment, a: int) -> None:
    if not 0 <= a < env.n_actions:
        raise ValueError(f"action id {a} out of range [0, {env.n_actions})")


def true_reward_mean(env: Environment, x: np.ndarray, a: int) -> float:
    """Expected reward q(x, e_a) of one context-action pair."""
    _check_action(env, a)
    return float(env.reward_matrix(np.atleast_2d(x))[0, a])


def sample_reward(env: Environment, x: np.ndarray, a: int, rng: RngStream) -> int:
    """Bernoulli reward draw with success probability q(x, e_a)."""
    q = true_reward_mean(env, x, a)
    return int(rng.generator().random() < q)


def _logging_scores(env: Environment, beta: float, q_mat: np.ndarray) -> np.ndarray:
    """Softmax scores beta*logit(q) for supported actions, -inf elsewhere."""
    q = np.clip(q_mat, _Q_CLAMP, 1.0 - _Q_CLAMP)
    scores = beta * np.log(q / (1.0 - q))
    scores[:, env.config.n_supported :] = -np.inf
    return scores


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs


def logging_policy_matrix(
    env: Environment, spec: LoggingPolicySpec, contexts: np.ndarray
) -> np.ndarray:
    """Logging probabilities for a context batch, shape ``(n, n_actions)``."""
    scores = _logging_scores(env, spec.beta, env.reward_matrix(contexts))
    return _softmax_rows(scores)


def logging_policy_probs(
    env: Environment, spec: LoggingPolicySpec, x: np.ndarray
) -> np.ndarray:
    """Logging probabilities over all actions for a single context.

    Exactly zero on novel actions; proportional to ``exp(beta * logit(q))``
    on the supported set.
    """
    return logging_policy_matrix(env, spec, np.atleast_2d(x))[0]


@dataclass(frozen=True)
class LoggingPolicy:
    """Logging-policy object usable wherever a policy is expected."""

    env: Environment
    spec: LoggingPolicySpec
    policy_id: str = field(default="")

    def __post_init__(self) -> None:
        if not self.policy_id:
            object.__setattr__(self, "policy_id", f"logging(beta={self.spec.beta:g})")

    def action_matrix(self, contexts: np.ndarray) -> np.ndarray:
        return logging_policy_matrix(self.env, self.spec, contexts)

    def action_distribution(self, x: np.ndarray) -> np.ndarray:
        return logging_policy_probs(self.env, self.spec, x)


def collect_data(env: Environment, policy, n: int, rng: RngStream) -> BanditDataset:
    """Run a policy in the world for ``n`` rounds and log the feedback.

    ``policy`` is any object with an ``action_matrix(contexts)`` method
    returning per-context action probabilities.  Each logged sample stores
    the acting policy's own probability of the chosen action, so importance
    weights against it are exact.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    contexts = env.sample_contexts(n, rng.child("contexts"))
    probs = policy.action_matrix(contexts)
    cdf = np.cumsum(probs, axis=1)
    u = rng.child("actions").generator().random(n)
    # Row-wise inverse CDF; the final cumulative value is 1 up to rounding,
    # so clip keeps the draw inside the action range.
    actions = np.minimum(
        (cdf < u[:, None]).sum(axis=1), env.n_actions - 1
    )
    q_chosen = env.reward_for_pairs(contexts, actions)
    rewards = (
        rng.child("rewards").generator().random(n) < q_chosen
    ).astype(float)
    propensities = probs[np.arange(n), actions]
    return BanditDataset(
        contexts=contexts,
        actions=actions,
        rewards=rewards,
        propensities=propensities,
        origin_policy_id=getattr(policy, "policy_id", ""),
    )


def generate_logged_data(
    env: Environment, spec: LoggingPolicySpec, n: int, rng: RngStream
) -> BanditDataset:
    """Generate a logged dataset under the softmax logging policy."""
    return collect_data(env, LoggingPolicy(env, spec), n, rng)


def save_environment(env: Environment, path: str) -> None:
    """Persist a world as one portable text file.

    Layout: a JSON header line, then an ``action_features`` CSV block, then
    the flat ground-truth weight vector (one value per line), then the
    optional context pool.
    """
    cfg = env.config
    header = {
        "d_x": cfg.d_x,
        "d_a": cfg.d_a,
        "n_actions": cfg.n_actions,
        "n_supported": cfg.n_supported,
        "ground_truth_seed": cfg.ground_truth_seed,
        "hidden_widths": list(cfg.hidden_widths),
        "context_pool_size": cfg.context_pool_size,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        fh.write("# action_features\n")
        for row in env.action_features:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
        fh.write("# weights\n")
        for v in nn.flatten(env.ground_truth_params):
            fh.write(f"{v:.17g}\n")
        if env.context_pool is not None:
            fh.write("# context_pool\n")
            for row in env.context_pool:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_environment(path: str) -> Environment:
    """Read a world written by :func:`save_environment`."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    header = json.loads(lines[0])
    config = EnvironmentConfig(
        d_x=header["d_x"],
        d_a=header["d_a"],
        n_actions=header["n_actions"],
        n_supported=header["n_supported"],
        ground_truth_seed=header["ground_truth_seed"],
        hidden_widths=tuple(header["hidden_widths"]),
        context_pool_size=header["context_pool_size"],
    )
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for ln in lines[1:]:
        if ln.startswith("# "):
            current = sections.setdefault(ln[2:], [])
        elif ln and current is not None:
            current.append(ln)
    features = np.array(
        [[float(v) for v in ln.split(",")] for ln in sections["action_features"]]
    )
    flat = np.array([float(ln) for ln in sections["weights"]])
    h1, h2 = config.hidden_widths
    params = nn.unflatten(flat, (config.d_x + config.d_a, h1, h2, 1))
    pool = None
    if "context_pool" in sections:
        pool = np.array(
            [[float(v) for v in ln.split(",")] for ln in sections["context_pool"]]
        )
    return Environment(
        config=config,
        action_features=features,
        ground_truth_params=params,
        context_pool=pool,
    )
