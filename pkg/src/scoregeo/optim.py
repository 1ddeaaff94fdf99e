"""Adam with bias correction and a cosine-annealed step size.

Works on arbitrary JAX pytrees so the same update drives network training and
path optimization.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import jax
import jax.numpy as jnp


class AdamState(NamedTuple):
    step: jnp.ndarray
    m: object
    v: object


def adam_init(params) -> AdamState:
    zeros = jax.tree_util.tree_map(jnp.zeros_like, params)
    return AdamState(jnp.zeros((), dtype=jnp.int64), zeros, zeros)


def adam_update(grads, state: AdamState, params, lr, b1=0.9, b2=0.999, eps=1e-8):
    """One Adam step; returns ``(new_params, new_state)``."""
    step = state.step + 1
    m = jax.tree_util.tree_map(lambda m, g: b1 * m + (1 - b1) * g, state.m, grads)
    v = jax.tree_util.tree_map(lambda v, g: b2 * v + (1 - b2) * g * g, state.v, grads)
    c1 = 1 - b1**step
    c2 = 1 - b2**step
    new = jax.tree_util.tree_map(
        lambda p, m, v: p - lr * (m / c1) / (jnp.sqrt(v / c2) + eps), params, m, v
    )
    return new, AdamState(step, m, v)


def cosine_lr(lr0: float, k: int, total: int) -> float:
    """Step size at iteration ``k`` of ``total``, decaying from ``lr0`` to 0."""
    if total <= 0:
        return lr0
    return 0.5 * lr0 * (1.0 + math.cos(math.pi * k / total))


def step_size(kind: str, lr0: float, k: int, total: int) -> float:
    if kind == "cosine":
        return cosine_lr(lr0, k, total)
    if kind == "constant":
        return lr0
    raise ValueError(f"unknown step-size schedule {kind!r}")
