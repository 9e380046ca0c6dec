"""Shared builders for tests: tiny worlds and analytically exact probes."""

from __future__ import annotations

import numpy as np

from safeopl.data import BanditDataset
from safeopl.environment import Environment, EnvironmentConfig, build_environment


def tiny_environment(
    seed: int = 7,
    d_x: int = 4,
    d_a: int = 3,
    n_actions: int = 6,
    n_supported: int = 4,
    hidden_widths: tuple[int, int] = (16, 8),
) -> Environment:
    """A small but real environment for randomized tests."""
    return build_environment(
        EnvironmentConfig(
            d_x=d_x,
            d_a=d_a,
            n_actions=n_actions,
            n_supported=n_supported,
            ground_truth_seed=seed,
            hidden_widths=hidden_widths,
        )
    )


def probe_environment(
    targets, n_supported: int | None = None, d_x: int = 3
) -> Environment:
    """Environment whose true reward is exactly ``targets[a]`` for every x.

    Built from hand-set weights: one-hot action features pass through
    identity hidden layers and the output weight of action ``a`` is
    ``logit(targets[a])``, so the sigmoid head returns the target exactly.
    """
    targets = np.asarray(targets, dtype=float)
    n_actions = targets.size
    if np.any(targets <= 0.0) or np.any(targets >= 1.0):
        raise ValueError("probe targets must lie strictly inside (0, 1)")
    if n_supported is None:
        n_supported = n_actions - 1
    config = EnvironmentConfig(
        d_x=d_x,
        d_a=n_actions,
        n_actions=n_actions,
        n_supported=n_supported,
        ground_truth_seed=0,
        hidden_widths=(n_actions, n_actions),
    )
    d_in = d_x + n_actions
    w1 = np.zeros((d_in, n_actions))
    w1[d_x:, :] = np.eye(n_actions)
    w2 = np.eye(n_actions)
    w3 = np.log(targets / (1.0 - targets)).reshape(n_actions, 1)
    params = [
        (w1, np.zeros(n_actions)),
        (w2, np.zeros(n_actions)),
        (w3, np.zeros(1)),
    ]
    return Environment(
        config=config,
        action_features=np.eye(n_actions),
        ground_truth_params=params,
    )


class TablePolicy:
    """Policy stand-in with one fixed action distribution for every context."""

    def __init__(self, row, policy_id="table"):
        self.row = np.asarray(row, dtype=float)
        if abs(self.row.sum() - 1.0) > 1e-9 or np.any(self.row < 0.0):
            raise ValueError("row must be a probability vector")
        self.policy_id = policy_id
        self.n_actions = self.row.size

    def action_matrix(self, contexts):
        contexts = np.atleast_2d(contexts)
        return np.tile(self.row, (contexts.shape[0], 1))


class TableModel:
    """Reward-model stand-in returning a fixed per-action prediction row."""

    def __init__(self, row):
        self.row = np.asarray(row, dtype=float)

    def predict_matrix(self, contexts, action_features):
        contexts = np.atleast_2d(contexts)
        return np.tile(self.row, (contexts.shape[0], 1))


class ConstantModel(TableModel):
    """Reward-model stand-in predicting one constant everywhere."""

    def __init__(self, value: float, n_actions: int):
        super().__init__(np.full(n_actions, value))


class OracleModel:
    """Reward-model stand-in that returns the environment's exact rewards."""

    def __init__(self, env: Environment):
        self.env = env

    def predict_matrix(self, contexts, action_features):
        return self.env.reward_matrix(contexts)


def make_dataset(
    contexts, actions, rewards, propensities, folds=None
) -> BanditDataset:
    return BanditDataset(
        contexts=np.atleast_2d(np.asarray(contexts, dtype=float)),
        actions=np.asarray(actions),
        rewards=np.asarray(rewards, dtype=float),
        propensities=np.asarray(propensities, dtype=float),
        folds=folds,
    )
