"""Off-policy value estimators and the high-confidence lower bound.

Point estimators: direct method (DM), inverse propensity scoring (IPS),
clipped IPS, doubly robust (DR), and the on-policy reward mean.  The safety
machinery builds on the empirical-Bernstein concentration bound applied to
clipped importance-weighted returns ``z_i = min{w_i, tau} * r_i``:

    lower_bound = mean(z) - sqrt(2 * ln(2/delta) * Var(z) / (n - 1))
                  - 7 * z_max * ln(2/delta) / (3 * (n - 1))

with ``Var`` the unbiased sample variance and ``z_max = tau * r_max``.  The
clipping level tau is tuned on a small carve-out (1/20 by default) of the
data handed in, maximizing the bound formula with the evaluation fold's
sample count in the penalty terms, since that is where the tuned bound will
be applied; the bound itself is then computed on the remaining data only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import BanditDataset
from .reward_model import RewardModel
from .rng import RngStream

DEFAULT_TAU_GRID = tuple(0.5 * 2.0**k for k in range(12))


@dataclass(frozen=True)
class SafetySpec:
    """Safety threshold C and confidence level delta."""

    threshold: float
    delta: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class HcopeConfig:
    """Clipping grid, tuning carve-out, and confidence for the lower bound.

    ``r_max`` is the reward ceiling entering ``z_max = tau * r_max``; it is 1
    in the default binary-reward setting.
    """

    tau_grid: tuple[float, ...] = DEFAULT_TAU_GRID
    tuning_fraction: float = 1.0 / 20.0
    delta: float = 0.05
    r_max: float = 1.0

    def __post_init__(self) -> None:
        grid = tuple(float(t) for t in self.tau_grid)
        object.__setattr__(self, "tau_grid", grid)
        if len(grid) == 0:
            raise ValueError("tau_grid must be non-empty")
        if grid[0] <= 0.0 or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("tau_grid must be positive and strictly increasing")
        if not 0.0 < self.tuning_fraction < 1.0:
            raise ValueError("tuning_fraction must lie in (0, 1)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.r_max <= 0.0:
            raise ValueError("r_max must be positive")


def on_policy_value(data: BanditDataset) -> float:
    """Arithmetic mean of the logged rewards."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    return float(data.rewards.mean())


def _chosen_probs(policy, data: BanditDataset) -> np.ndarray:
    probs = policy.action_matrix(data.contexts)
    return probs[np.arange(len(data)), data.actions]


def importance_weights(policy, data: BanditDataset) -> np.ndarray:
    """Per-sample ratios pi(a_i|x_i) / pi0(a_i|x_i)."""
    if np.any(data.propensities <= 0.0):
        raise ValueError("invalid propensity")
    return _chosen_probs(policy, data) / data.propensities


def ope_ips(policy, data: BanditDataset) -> float:
    """Inverse propensity scoring estimate of the policy value."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    return float((importance_weights(policy, data) * data.rewards).mean())


def ope_clipped_ips(policy, data: BanditDataset, tau: float) -> float:
    """IPS with importance weights clipped at tau."""
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    if len(data) == 0:
        raise ValueError("empty dataset")
    w = np.minimum(importance_weights(policy, data), tau)
    return float((w * data.rewards).mean())


def ope_dm(
    policy, data: BanditDataset, model: RewardModel, action_features: np.ndarray
) -> float:
    """Direct method: model-predicted value under the target policy."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    probs = policy.action_matrix(data.contexts)
    q_hat = model.predict_matrix(data.contexts, action_features)
    return float((probs * q_hat).sum(axis=1).mean())


def ope_dr(
    policy, data: BanditDataset, model: RewardModel, action_features: np.ndarray
) -> float:
    """Doubly robust estimate: DM baseline plus weighted model residuals."""
    if len(data) == 0:
        raise ValueError("empty dataset")
    if np.any(data.propensities <= 0.0):
        raise ValueError("invalid propensity")
    probs = policy.action_matrix(data.contexts)
    q_hat = model.predict_matrix(data.contexts, action_features)
    idx = np.arange(len(data))
    w = probs[idx, data.actions] / data.propensities
    dm_term = (probs * q_hat).sum(axis=1)
    correction = w * (data.rewards - q_hat[idx, data.actions])
    return float((dm_term + correction).mean())


def _bernstein_bound(
    mean: float, var: float, z_max: float, delta: float, n_penalty: int
) -> float:
    log_term = math.log(2.0 / delta)
    return (
        mean
        - math.sqrt(2.0 * log_term * var / (n_penalty - 1))
        - 7.0 * z_max * log_term / (3.0 * (n_penalty - 1))
    )


def empirical_bernstein_lower_bound(
    z: np.ndarray, z_max: float, delta: float
) -> float:
    """High-probability lower bound on E[z] from bounded samples.

    Negative results are returned as-is; the formula has no floor.
    """
    z = np.asarray(z, dtype=float)
    if z.size < 2:
        raise ValueError("insufficient samples")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if np.any(z < -1e-12) or np.any(z > z_max + 1e-12):
        raise ValueError("z values must lie in [0, z_max]")
    return _bernstein_bound(
        float(z.mean()), float(z.var(ddof=1)), z_max, delta, z.size
    )


def hcope_lower_bound(
    policy, data: BanditDataset, cfg: HcopeConfig, rng: RngStream
) -> float:
    """Tuned high-confidence lower bound on the policy value.

    A tuning fold (fraction ``cfg.tuning_fraction``, at least 2 samples) is
    carved from ``data`` by a deterministic shuffle; the clipping level is
    chosen on it and the bound reported on the remaining evaluation fold.
    """
    n = len(data)
    if n == 0:
        raise ValueError("empty dataset")
    weights = importance_weights(policy, data)
    n_tune = max(2, round(cfg.tuning_fraction * n))
    n_eval = n - n_tune
    if n_eval < 2:
        raise ValueError("evaluation fold smaller than 2 samples")
    perm = rng.generator().permutation(n)
    tune, eval_ = perm[:n_tune], perm[n_tune:]
    w_tune, r_tune = weights[tune], data.rewards[tune]
    best_tau, best_obj = cfg.tau_grid[0], -math.inf
    for tau in cfg.tau_grid:
        z = np.minimum(w_tune, tau) * r_tune
        obj = _bernstein_bound(
            float(z.mean()),
            float(z.var(ddof=1)),
            tau * cfg.r_max,
            cfg.delta,
            n_eval,
        )
        if obj > best_obj:
            best_tau, best_obj = tau, obj
    z_eval = np.minimum(weights[eval_], best_tau) * data.rewards[eval_]
    return empirical_bernstein_lower_bound(z_eval, best_tau * cfg.r_max, cfg.delta)
