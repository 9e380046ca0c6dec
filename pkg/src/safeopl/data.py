"""Logged bandit feedback containers, fold handling, and CSV serialization.

A :class:`BanditDataset` stores logged interaction tuples column-wise
(contexts, actions, rewards, logging propensities) together with a per-sample
fold label in {"S1", "S2"}.  Off-policy estimators read propensities straight
from the dataset: they were recorded at logging time, so no estimator ever
needs the logging policy object itself.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream

S1 = "S1"
S2 = "S2"


@dataclass(frozen=True)
class LoggedSample:
    """One logged interaction: context, chosen action, reward, propensity."""

    context: np.ndarray
    action: int
    reward: float
    logging_propensity: float

    def __post_init__(self) -> None:
        if self.reward < 0.0:
            raise ValueError("reward must be non-negative")
        if not 0.0 < self.logging_propensity <= 1.0:
            raise ValueError("logging_propensity must lie in (0, 1]")


@dataclass(frozen=True)
class BanditDataset:
    """Columnar store of logged samples with named S1/S2 folds.

    ``contexts`` has shape ``(n, d_x)``; ``actions``, ``rewards``,
    ``propensities`` and ``folds`` have shape ``(n,)``.  Instances are
    immutable; fold views and subsampling return new datasets.
    """

    contexts: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    propensities: np.ndarray
    folds: np.ndarray = field(default=None)  # type: ignore[assignment]
    origin_policy_id: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "contexts", np.asarray(self.contexts, dtype=float))
        object.__setattr__(self, "actions", np.asarray(self.actions, dtype=np.int64))
        object.__setattr__(self, "rewards", np.asarray(self.rewards, dtype=float))
        object.__setattr__(
            self, "propensities", np.asarray(self.propensities, dtype=float)
        )
        n = self.contexts.shape[0]
        if self.folds is None:
            object.__setattr__(self, "folds", np.full(n, S1, dtype="<U2"))
        else:
            object.__setattr__(self, "folds", np.asarray(self.folds, dtype="<U2"))
        if self.contexts.ndim != 2:
            raise ValueError("contexts must be a 2-d array")
        for name in ("actions", "rewards", "propensities", "folds"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have one entry per sample")
        if np.any(self.rewards < 0.0):
            raise ValueError("reward must be non-negative")
        if np.any(self.propensities <= 0.0) or np.any(self.propensities > 1.0):
            raise ValueError("logging_propensity must lie in (0, 1]")
        if not np.all(np.isin(self.folds, (S1, S2))):
            raise ValueError("fold labels must be 'S1' or 'S2'")

    def __len__(self) -> int:
        return self.contexts.shape[0]

    @property
    def d_x(self) -> int:
        return self.contexts.shape[1]

    def sample(self, i: int) -> LoggedSample:
        """Materialize sample ``i`` as a :class:`LoggedSample`."""
        return LoggedSample(
            context=self.contexts[i].copy(),
            action=int(self.actions[i]),
            reward=float(self.rewards[i]),
            logging_propensity=float(self.propensities[i]),
        )

    @property
    def samples(self) -> list[LoggedSample]:
        return [self.sample(i) for i in range(len(self))]

    def select(self, idx: np.ndarray) -> "BanditDataset":
        """Dataset restricted to (or reordered by) the given indices."""
        return BanditDataset(
            contexts=self.contexts[idx],
            actions=self.actions[idx],
            rewards=self.rewards[idx],
            propensities=self.propensities[idx],
            folds=self.folds[idx],
            origin_policy_id=self.origin_policy_id,
        )

    def fold(self, label: str) -> "BanditDataset":
        """Samples carrying the given fold label, in original order."""
        if label not in (S1, S2):
            raise ValueError("fold labels must be 'S1' or 'S2'")
        return self.select(np.flatnonzero(self.folds == label))

    def s1(self) -> "BanditDataset":
        return self.fold(S1)

    def s2(self) -> "BanditDataset":
        return self.fold(S2)


def split_dataset(
    data: BanditDataset, fraction_s1: float, rng: RngStream
) -> BanditDataset:
    """Assign every sample to S1 or S2 by a shuffled exact-count partition.

    Exactly ``ceil(fraction_s1 * n)`` samples land in S1 (an even split of an
    odd-sized dataset gives S1 the extra sample); which ones is decided by a
    deterministic shuffle of the index set.  Sample order is unchanged, only
    the fold labels are rewritten.
    """
    n = len(data)
    if n == 0:
        raise ValueError("empty dataset")
    if not 0.0 < fraction_s1 < 1.0:
        raise ValueError("fraction_s1 must lie in (0, 1)")
    # Tolerance guards against float noise pushing an exact product like
    # 55 * 0.2 just above its integer value.
    n_s1 = math.ceil(fraction_s1 * n - 1e-9)
    perm = rng.generator().permutation(n)
    folds = np.full(n, S2, dtype="<U2")
    folds[perm[:n_s1]] = S1
    return BanditDataset(
        contexts=data.contexts,
        actions=data.actions,
        rewards=data.rewards,
        propensities=data.propensities,
        folds=folds,
        origin_policy_id=data.origin_policy_id,
    )


def subsample(data: BanditDataset, m: int, rng: RngStream) -> BanditDataset:
    """Draw ``m`` samples uniformly without replacement."""
    n = len(data)
    if m <= 0:
        raise ValueError("subsample size must be positive")
    if m > n:
        raise ValueError("insufficient samples")
    idx = rng.generator().choice(n, size=m, replace=False)
    return data.select(idx)


def concatenate_datasets(parts: list[BanditDataset]) -> BanditDataset:
    """Stack several datasets (same context dimension) into one."""
    if not parts:
        raise ValueError("empty dataset")
    return BanditDataset(
        contexts=np.concatenate([p.contexts for p in parts], axis=0),
        actions=np.concatenate([p.actions for p in parts]),
        rewards=np.concatenate([p.rewards for p in parts]),
        propensities=np.concatenate([p.propensities for p in parts]),
        folds=np.concatenate([p.folds for p in parts]),
        origin_policy_id=parts[0].origin_policy_id,
    )


def save_dataset(data: BanditDataset, path: str) -> None:
    """Write a dataset as CSV with 17-significant-digit reals."""
    d_x = data.d_x
    header = [f"context_{j}" for j in range(d_x)]
    header += ["action", "reward", "propensity", "fold"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(data)):
            row = [f"{v:.17g}" for v in data.contexts[i]]
            row += [
                str(int(data.actions[i])),
                f"{data.rewards[i]:.17g}",
                f"{data.propensities[i]:.17g}",
                str(data.folds[i]),
            ]
            writer.writerow(row)


def load_dataset(path: str, origin_policy_id: str = "") -> BanditDataset:
    """Read a dataset written by :func:`save_dataset`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d_x = sum(1 for name in header if name.startswith("context_"))
        expected = [f"context_{j}" for j in range(d_x)]
        expected += ["action", "reward", "propensity", "fold"]
        if header != expected:
            raise ValueError(f"unrecognized dataset header in {path}")
        contexts, actions, rewards, props, folds = [], [], [], [], []
        for row in reader:
            contexts.append([float(v) for v in row[:d_x]])
            actions.append(int(row[d_x]))
            rewards.append(float(row[d_x + 1]))
            props.append(float(row[d_x + 2]))
            folds.append(row[d_x + 3])
    return BanditDataset(
        contexts=np.asarray(contexts, dtype=float).reshape(len(actions), d_x),
        actions=actions,
        rewards=rewards,
        propensities=props,
        folds=folds,
        origin_policy_id=origin_policy_id,
    )
