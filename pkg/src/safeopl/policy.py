"""Softmax MLP policy over the full action set.

The policy scores every action with a 2-layer ReLU network ``f(x) -> R^A``
and acts through ``softmax(f(x))``.  The final layer is initialized to zero
so a fresh policy is exactly uniform, which makes training trajectories
comparable across seeds and keeps the first deployment maximally exploratory.

Gradient plumbing is analytic: callers express any scalar objective through
its gradient w.r.t. the score matrix and :meth:`SoftmaxPolicy.score_backprop`
turns that into a flat parameter gradient.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .rng import RngStream

# Flat real vector congruent with the policy parameters.
GradientBuffer = np.ndarray


class SoftmaxPolicy:
    """Stochastic policy pi(a|x) = softmax_a f(x, a) with learnable f."""

    def __init__(
        self,
        d_x: int,
        hidden_width: int,
        n_actions: int,
        params: nn.Params,
        policy_id: str = "",
    ) -> None:
        self.d_x = d_x
        self.hidden_width = hidden_width
        self.n_actions = n_actions
        self.params = params
        self.policy_id = policy_id

    @property
    def layer_sizes(self) -> tuple[int, int, int]:
        return (self.d_x, self.hidden_width, self.n_actions)

    @property
    def n_params(self) -> int:
        return nn.n_params(self.layer_sizes)

    def get_flat_params(self) -> np.ndarray:
        return nn.flatten(self.params)

    def set_flat_params(self, flat: np.ndarray) -> None:
        self.params = nn.unflatten(np.asarray(flat, dtype=float), self.layer_sizes)

    def copy(self, policy_id: str | None = None) -> "SoftmaxPolicy":
        clone = SoftmaxPolicy(
            self.d_x,
            self.hidden_width,
            self.n_actions,
            [(w.copy(), b.copy()) for w, b in self.params],
            self.policy_id if policy_id is None else policy_id,
        )
        return clone

    def _check_context(self, contexts: np.ndarray) -> np.ndarray:
        contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
        if contexts.shape[1] != self.d_x:
            raise ValueError(f"context must have dimension {self.d_x}")
        return contexts

    def scores(self, contexts: np.ndarray) -> np.ndarray:
        """Raw action scores f(x, a) for a context batch."""
        return nn.forward(self.params, self._check_context(contexts))

    def action_matrix(self, contexts: np.ndarray) -> np.ndarray:
        """Action probabilities per context, shape ``(n, n_actions)``."""
        scores = self.scores(contexts)
        scores -= scores.max(axis=1, keepdims=True)
        np.exp(scores, out=scores)
        scores /= scores.sum(axis=1, keepdims=True)
        return scores

    def score_backprop(
        self, contexts: np.ndarray, grad_scores: np.ndarray
    ) -> GradientBuffer:
        """Flat parameter gradient of any scalar with score gradient given.

        ``grad_scores[i, a]`` must hold the derivative of the objective with
        respect to score f(x_i, a); the chain rule through the network is
        handled here.
        """
        contexts = self._check_context(contexts)
        _, cache = nn.forward_cached(self.params, contexts)
        return self.backprop_cached(cache, grad_scores)

    def action_matrix_with_cache(
        self, contexts: np.ndarray
    ) -> tuple[np.ndarray, list[np.ndarray]]:
        """Action probabilities plus the forward cache for later backprop.

        Lets a training step reuse one forward pass for both the probability
        matrix and the parameter gradient.
        """
        contexts = self._check_context(contexts)
        scores, cache = nn.forward_cached(self.params, contexts)
        scores -= scores.max(axis=1, keepdims=True)
        np.exp(scores, out=scores)
        scores /= scores.sum(axis=1, keepdims=True)
        return scores, cache

    def backprop_cached(
        self, cache: list[np.ndarray], grad_scores: np.ndarray
    ) -> GradientBuffer:
        grads = nn.backprop(self.params, cache, np.asarray(grad_scores, dtype=float))
        return nn.flatten(grads)


def create_policy(
    d_x: int,
    hidden_width: int,
    n_actions: int,
    rng: RngStream,
    policy_id: str = "",
) -> SoftmaxPolicy:
    """Fresh policy: hidden layer Glorot-uniform, final layer zero.

    The zero final layer makes the initial distribution uniform over all
    actions for every context.
    """
    params = nn.init_params(
        (d_x, hidden_width, n_actions), rng.generator(), scheme="glorot"
    )
    w_out, b_out = params[-1]
    params[-1] = (np.zeros_like(w_out), np.zeros_like(b_out))
    return SoftmaxPolicy(d_x, hidden_width, n_actions, params, policy_id)


def action_distribution(policy: SoftmaxPolicy, x: np.ndarray) -> np.ndarray:
    """Probability vector pi(.|x) for one context."""
    return policy.action_matrix(np.atleast_2d(x))[0]


def sample_action(policy: SoftmaxPolicy, x: np.ndarray, rng: RngStream) -> int:
    """Inverse-CDF draw from the policy's action distribution."""
    probs = action_distribution(policy, x)
    u = rng.generator().random()
    cdf = np.cumsum(probs)
    return int(min(np.searchsorted(cdf, u, side="right"), policy.n_actions - 1))


def log_prob_gradient(policy: SoftmaxPolicy, x: np.ndarray, a: int) -> GradientBuffer:
    """Analytic gradient of log pi(a|x) w.r.t. the flat parameters.

    Through the softmax, d log pi(a|x) / d f(x, j) = 1{j = a} - pi(j|x).
    """
    if not 0 <= a < policy.n_actions:
        raise ValueError(f"action id {a} out of range [0, {policy.n_actions})")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    probs = policy.action_matrix(x)
    grad_scores = -probs
    grad_scores[0, a] += 1.0
    return policy.score_backprop(x, grad_scores)


def policy_entropy(policy: SoftmaxPolicy, contexts: np.ndarray) -> float:
    """Mean action entropy -E[log pi] over a context batch, in nats."""
    contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
    if contexts.shape[0] == 0:
        raise ValueError("contexts must be non-empty")
    probs = policy.action_matrix(contexts)
    plogp = np.where(probs > 0.0, probs * np.log(np.where(probs > 0.0, probs, 1.0)), 0.0)
    return float(-plogp.sum(axis=1).mean())


def save_policy(policy: SoftmaxPolicy, path: str) -> None:
    """Flat CSV snapshot: architecture header then one weight per line."""
    with open(path, "w") as fh:
        fh.write("d_x,hidden_width,n_actions\n")
        fh.write(f"{policy.d_x},{policy.hidden_width},{policy.n_actions}\n")
        for v in policy.get_flat_params():
            fh.write(f"{v:.17g}\n")


def load_policy(path: str, policy_id: str = "") -> SoftmaxPolicy:
    """Read a snapshot written by :func:`save_policy`."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "d_x,hidden_width,n_actions":
            raise ValueError(f"unrecognized policy header in {path}")
        d_x, h, n_actions = (int(v) for v in fh.readline().split(","))
        flat = np.array([float(ln) for ln in fh if ln.strip()])
    policy = SoftmaxPolicy(
        d_x, h, n_actions, nn.unflatten(flat, (d_x, h, n_actions)), policy_id
    )
    return policy
