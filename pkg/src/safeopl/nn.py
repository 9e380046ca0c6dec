"""Minimal feed-forward network primitives on numpy arrays.

All networks in this package (ground-truth reward surface, learned reward
models, policy score networks) are small fully connected nets with ReLU
hidden layers.  They are implemented directly on top of numpy so that every
gradient used by the learners is an explicit, testable formula rather than a
framework artifact.

Parameters are a list of ``(W, b)`` pairs with ``W`` of shape
``(fan_in, fan_out)`` and ``b`` of shape ``(fan_out,)``; a batch ``x`` of
shape ``(n, d)`` maps through ``x @ W + b``.  ``flatten``/``unflatten``
provide a canonical flat-vector view (row-major weights then bias, layer by
layer) used for serialization and finite-difference checks.
"""

from __future__ import annotations

import numpy as np

Params = list[tuple[np.ndarray, np.ndarray]]


def init_params(
    layer_sizes: tuple[int, ...],
    rng: np.random.Generator,
    scheme: str = "fan_in",
    gain: float = 1.0,
) -> Params:
    """Draw symmetric zero-mean uniform weights for each layer.

    ``fan_in`` scales layer weights by ``gain/sqrt(fan_in)``; ``glorot`` by
    ``sqrt(6/(fan_in+fan_out))``.  Biases start at zero.
    """
    if len(layer_sizes) < 2:
        raise ValueError("need at least an input and an output layer")
    params: Params = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        if scheme == "fan_in":
            bound = gain / np.sqrt(fan_in)
        elif scheme == "glorot":
            bound = np.sqrt(6.0 / (fan_in + fan_out))
        else:
            raise ValueError(f"unknown init scheme: {scheme!r}")
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = np.zeros(fan_out)
        params.append((w, b))
    return params


def forward(params: Params, x: np.ndarray) -> np.ndarray:
    """Map a batch through ReLU hidden layers to the final pre-activation."""
    h = x
    last = len(params) - 1
    for i, (w, b) in enumerate(params):
        h = h @ w + b
        if i < last:
            np.maximum(h, 0.0, out=h)
    return h


def forward_cached(params: Params, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass that also returns every layer input for backprop."""
    inputs = [x]
    h = x
    last = len(params) - 1
    for i, (w, b) in enumerate(params):
        h = h @ w + b
        if i < last:
            np.maximum(h, 0.0, out=h)
            inputs.append(h)
    return h, inputs


def backprop(params: Params, inputs: list[np.ndarray], grad_out: np.ndarray) -> Params:
    """Gradients of a scalar loss w.r.t. parameters.

    ``inputs`` is the cache from :func:`forward_cached`; ``grad_out`` is the
    loss gradient w.r.t. the final pre-activation.  Returns per-layer
    ``(dW, db)`` in the same structure as ``params``.
    """
    grads: Params = [None] * len(params)  # type: ignore[list-item]
    delta = grad_out
    for i in range(len(params) - 1, -1, -1):
        w, _ = params[i]
        h_in = inputs[i]
        grads[i] = (h_in.T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = delta @ w.T
            # ReLU gate: inputs[i] is the post-activation output of layer i-1.
            delta = np.where(inputs[i] > 0.0, delta, 0.0)
    return grads


def pairwise_forward(
    params: Params, contexts: np.ndarray, features: np.ndarray
) -> np.ndarray:
    """Final pre-activations over the context x feature cross product.

    The network input is the concatenation ``(x, e)``; the first layer is
    split into its context and feature blocks so each block is multiplied
    once instead of once per pair.  Requires a scalar output head.  Returns
    shape ``(n_contexts, n_features)``.
    """
    contexts = np.atleast_2d(contexts)
    n, d_x = contexts.shape
    m = features.shape[0]
    w1, b1 = params[0]
    ctx_part = contexts @ w1[:d_x]
    feat_part = features @ w1[d_x:] + b1
    out = np.empty((n, m))
    chunk = max(1, 200_000 // max(m, 1))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        h = ctx_part[lo:hi, None, :] + feat_part[None, :, :]
        np.maximum(h, 0.0, out=h)
        out[lo:hi] = forward(params[1:], h.reshape(-1, h.shape[-1])).reshape(
            hi - lo, m
        )
    return out


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def flatten(params: Params) -> np.ndarray:
    """Concatenate all parameters into one flat vector."""
    pieces = []
    for w, b in params:
        pieces.append(w.ravel())
        pieces.append(b)
    return np.concatenate(pieces) if pieces else np.zeros(0)


def unflatten(flat: np.ndarray, layer_sizes: tuple[int, ...]) -> Params:
    """Inverse of :func:`flatten` for the given architecture."""
    params: Params = []
    pos = 0
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        w = flat[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out).copy()
        pos += fan_in * fan_out
        b = flat[pos : pos + fan_out].copy()
        pos += fan_out
        params.append((w, b))
    if pos != flat.size:
        raise ValueError(
            f"flat vector has {flat.size} entries, architecture needs {pos}"
        )
    return params


def n_params(layer_sizes: tuple[int, ...]) -> int:
    """Number of scalars in a network of the given architecture."""
    return sum(
        fi * fo + fo for fi, fo in zip(layer_sizes[:-1], layer_sizes[1:])
    )
