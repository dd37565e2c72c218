"""Fully connected ReLU networks with explicit forward and backward passes.

Parameters are a flat list ``[W1, b1, W2, b2, ...]`` with ``W`` shaped
``(fan_in, fan_out)`` so a batch ``X`` of shape ``(B, fan_in)`` maps as
``X @ W + b``. Everything is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HIDDEN = (512, 256)


def init_mlp(dims, rng: np.random.Generator) -> list[np.ndarray]:
    params = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def forward(params, x):
    """Return output and the activations needed by :func:`backward`."""
    h = np.atleast_2d(x)
    cache = [h]
    n_layers = len(params) // 2
    for k in range(n_layers):
        z = h @ params[2 * k] + params[2 * k + 1]
        if k < n_layers - 1:
            h = np.maximum(z, 0.0)
        else:
            h = z
        cache.append(h)
    return h, cache


def backward(params, cache, d_out):
    """Gradients of ``sum(d_out * output)`` w.r.t. every parameter."""
    n_layers = len(params) // 2
    grads = [None] * len(params)
    delta = d_out
    for k in reversed(range(n_layers)):
        h_in = cache[k]
        grads[2 * k] = h_in.T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ params[2 * k].T) * (cache[k] > 0)
    return grads


def softmax(logits, mask=None):
    z = np.array(logits, dtype=float, copy=True)
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z -= z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class NetParams:
    """Actor and critic parameter lists."""

    actor: list[np.ndarray]
    critic: list[np.ndarray]

    @property
    def state_dim(self) -> int:
        return self.actor[0].shape[0]

    @property
    def n_actions(self) -> int:
        return self.actor[-1].shape[0]

    def copy(self) -> "NetParams":
        return NetParams([p.copy() for p in self.actor], [p.copy() for p in self.critic])

    def zeros_like(self) -> "NetParams":
        return NetParams([np.zeros_like(p) for p in self.actor],
                         [np.zeros_like(p) for p in self.critic])

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.actor + self.critic)


def init_params(state_dim: int, n_actions: int, seed: int = 0, hidden=HIDDEN) -> NetParams:
    if state_dim <= 0 or n_actions <= 0:
        raise ValueError("dims must be positive")
    rng = np.random.default_rng(seed)
    actor = init_mlp((state_dim, *hidden, n_actions), rng)
    critic = init_mlp((state_dim, *hidden, 1), rng)
    return NetParams(actor, critic)


def policy(state, actor_params, mask=None) -> np.ndarray:
    logits, _ = forward(actor_params, state)
    p = softmax(logits, mask)
    return p[0] if np.ndim(state) == 1 else p


def value(state, critic_params):
    v, _ = forward(critic_params, state)
    v = v[:, 0]
    return float(v[0]) if np.ndim(state) == 1 else v


def act_greedy(state, actor_params, mask=None) -> int:
    """Most probable action; ``np.argmax`` breaks ties towards the lowest index."""
    return int(np.argmax(policy(state, actor_params, mask)))
