"""Learned reward predictors over context-action-feature pairs.

Three variants share one training engine:

* ``naive_mean`` and ``min_ensemble`` train 5 bootstrap members by plain
  mini-batch gradient descent on binary cross-entropy and aggregate member
  predictions by mean or min.
* ``cql`` trains a single network on BCE plus a conservative penalty
  ``alpha * (E[q_hat(x, a')] - E[q_hat(x, a_i)])`` with negatives ``a'``
  drawn uniformly from the full action set, pushing predictions down on
  actions the logs never chose.

Each training sub-step consumes its own named random stream ("init",
"shuffle", "negatives"), so turning the penalty off with ``cql_alpha = 0``
reproduces BCE-only training bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .data import BanditDataset
from .rng import RngStream

VARIANTS = ("naive_mean", "min_ensemble", "cql")


@dataclass(frozen=True)
class RewardModelConfig:
    """Architecture and optimizer settings for reward-model training."""

    hidden_widths: tuple[int, int] = (100, 10)
    n_members: int = 5
    epochs: int = 30
    batch_size: int = 256
    learning_rate: float = 0.01
    cql_alpha: float = 2.0
    n_negatives: int = 5

    def validate(self) -> None:
        counts = {
            "n_members": self.n_members,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "n_negatives": self.n_negatives,
        }
        for name, value in counts.items():
            if value < 1:
                raise ValueError(f"{name} must be at least 1")
        if min(self.hidden_widths) < 1 or len(self.hidden_widths) != 2:
            raise ValueError("hidden_widths must be two positive integers")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.cql_alpha < 0.0:
            raise ValueError("cql_alpha must be non-negative")


@dataclass(frozen=True)
class RewardModel:
    """Trained predictor q_hat; ``members`` holds one net per ensemble slot."""

    variant: str
    members: list[nn.Params]
    cql_alpha: float
    converged: bool = True
    epoch_losses: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    def predict_matrix(
        self, contexts: np.ndarray, action_features: np.ndarray
    ) -> np.ndarray:
        """q_hat over a context batch and action-feature set, shape (n, m)."""
        preds = np.stack(
            [
                nn.sigmoid(nn.pairwise_forward(member, contexts, action_features))
                for member in self.members
            ]
        )
        if self.variant == "min_ensemble":
            return preds.min(axis=0)
        return preds.mean(axis=0)


def predict(model: RewardModel, x: np.ndarray, e_a: np.ndarray) -> float:
    """Predicted mean reward for one context and one action feature vector."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    e_a = np.asarray(e_a, dtype=float).reshape(1, -1)
    return float(model.predict_matrix(x, e_a)[0, 0])


def _sigmoid_prime(z: np.ndarray) -> np.ndarray:
    s = nn.sigmoid(z)
    return s * (1.0 - s)


def train_bce_network(
    data: BanditDataset,
    action_features: np.ndarray,
    config: RewardModelConfig,
    rng: RngStream,
    cql_alpha: float = 0.0,
) -> tuple[nn.Params, list[float]]:
    """Train one network; returns its parameters and per-epoch mean BCE.

    With ``cql_alpha = 0`` this is pure binary cross-entropy training; with a
    positive alpha the conservative penalty is added, its negatives coming
    from a dedicated stream so the BCE path is untouched.
    """
    n = len(data)
    if n == 0:
        raise ValueError("empty dataset")
    if not np.all(np.isin(data.rewards, (0.0, 1.0))):
        raise ValueError("rewards must be binary (0 or 1)")
    d_in = data.d_x + action_features.shape[1]
    n_actions = action_features.shape[0]
    h1, h2 = config.hidden_widths
    params = nn.init_params(
        (d_in, h1, h2, 1), rng.child("init").generator(), scheme="fan_in"
    )
    shuffle_gen = rng.child("shuffle").generator()
    neg_gen = rng.child("negatives").generator()
    inputs = np.hstack([data.contexts, action_features[data.actions]])
    labels = data.rewards
    lr = config.learning_rate
    epoch_losses: list[float] = []
    for _ in range(config.epochs):
        perm = shuffle_gen.permutation(n)
        negatives = None
        if cql_alpha > 0.0:
            negatives = neg_gen.integers(0, n_actions, size=(n, config.n_negatives))
        loss_sum = 0.0
        for lo in range(0, n, config.batch_size):
            idx = perm[lo : lo + config.batch_size]
            b = idx.size
            x_pos = inputs[idx]
            y = labels[idx]
            if negatives is None:
                z, cache = nn.forward_cached(params, x_pos)
                z = z[:, 0]
                p = nn.sigmoid(z)
                grad_z = (p - y) / b
            else:
                negs = negatives[idx].ravel()
                x_neg = np.hstack(
                    [np.repeat(data.contexts[idx], config.n_negatives, axis=0),
                     action_features[negs]]
                )
                z_all, cache = nn.forward_cached(params, np.vstack([x_pos, x_neg]))
                z_all = z_all[:, 0]
                p_pos = nn.sigmoid(z_all[:b])
                grad_z = np.empty(z_all.shape[0])
                grad_z[:b] = (p_pos - y) / b - cql_alpha * _sigmoid_prime(z_all[:b]) / b
                grad_z[b:] = cql_alpha * _sigmoid_prime(z_all[b:]) / (
                    b * config.n_negatives
                )
                p = p_pos
            eps = 1e-12
            loss_sum += -np.sum(
                y * np.log(p + eps) + (1.0 - y) * np.log(1.0 - p + eps)
            )
            grads = nn.backprop(params, cache, grad_z[:, None])
            params = [
                (w - lr * gw, bb - lr * gb)
                for (w, bb), (gw, gb) in zip(params, grads)
            ]
        epoch_losses.append(loss_sum / n)
    return params, epoch_losses


def train_reward_model(
    data: BanditDataset,
    env_action_features: np.ndarray,
    config: RewardModelConfig,
    variant: str,
    rng: RngStream,
) -> RewardModel:
    """Fit a reward model of the requested variant on logged data.

    Ensemble variants train each member on an independent bootstrap resample
    of the data; the cql variant trains a single penalized network on the
    data as-is.  The returned model's ``converged`` flag is cleared if any
    member's training BCE failed to improve between the first and last epoch.
    """
    config.validate()
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    n = len(data)
    if n == 0:
        raise ValueError("empty dataset")
    members: list[nn.Params] = []
    losses: list[tuple[float, ...]] = []
    if variant == "cql":
        params, epoch_losses = train_bce_network(
            data, env_action_features, config, rng, cql_alpha=config.cql_alpha
        )
        members.append(params)
        losses.append(tuple(epoch_losses))
    else:
        for i in range(config.n_members):
            member_rng = rng.child(f"member{i}")
            boot = member_rng.child("bootstrap").generator().integers(0, n, size=n)
            params, epoch_losses = train_bce_network(
                data.select(boot), env_action_features, config, member_rng
            )
            members.append(params)
            losses.append(tuple(epoch_losses))
    converged = all(ls[-1] <= ls[0] for ls in losses)
    return RewardModel(
        variant=variant,
        members=members,
        cql_alpha=config.cql_alpha if variant == "cql" else 0.0,
        converged=converged,
        epoch_losses=tuple(losses),
    )


def extrapolation_gap(
    model: RewardModel, env, contexts: np.ndarray
) -> tuple[float, float]:
    """MSE of q_hat against true q, split by supported vs novel actions."""
    q_true = env.reward_matrix(contexts)
    q_hat = model.predict_matrix(contexts, env.action_features)
    err = (q_hat - q_true) ** 2
    n_sup = env.config.n_supported
    return float(err[:, :n_sup].mean()), float(err[:, n_sup:].mean())


def save_reward_model(model: RewardModel, path: str) -> None:
    """Snapshot: header (variant, widths, member count, alpha) then weights."""
    h1, h2 = _member_widths(model.members[0])
    with open(path, "w") as fh:
        fh.write("variant,hidden_1,hidden_2,n_members,cql_alpha\n")
        fh.write(
            f"{model.variant},{h1},{h2},{len(model.members)},{model.cql_alpha:.17g}\n"
        )
        for i, member in enumerate(model.members):
            fh.write(f"# member {i}\n")
            for v in nn.flatten(member):
                fh.write(f"{v:.17g}\n")


def _member_widths(params: nn.Params) -> tuple[int, int]:
    return params[0][0].shape[1], params[1][0].shape[1]


def load_reward_model(path: str) -> RewardModel:
    """Read a snapshot written by :func:`save_reward_model`."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "variant,hidden_1,hidden_2,n_members,cql_alpha":
            raise ValueError(f"unrecognized reward-model header in {path}")
        variant, h1s, h2s, n_members_s, alpha_s = fh.readline().strip().split(",")
        h1, h2, n_members = int(h1s), int(h2s), int(n_members_s)
        flats: list[list[float]] = []
        for ln in fh:
            if ln.startswith("# member"):
                flats.append([])
            elif ln.strip():
                flats[-1].append(float(ln))
    if len(flats) != n_members:
        raise ValueError(f"expected {n_members} members in {path}")
    members = []
    for flat in flats:
        arr = np.asarray(flat)
        # Recover the input width from the flat length and the known widths.
        d_in = (arr.size - (h1 * h2 + h2) - (h2 + 1) - h1) // h1
        members.append(nn.unflatten(arr, (d_in, h1, h2, 1)))
    return RewardModel(variant=variant, members=members, cql_alpha=float(alpha_s))
