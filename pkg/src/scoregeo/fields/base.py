"""Common surface of score-field backends."""

from __future__ import annotations

import math

import jax
import jax.numpy as jnp
import numpy as np


class ScoreField:
    """A score ``s(x, t) ~ grad log p_t(x)`` with a Jacobian-vector product.

    Subclasses implement :meth:`score` and :meth:`jvp` with ``jax.numpy`` so both
    can be traced and differentiated in ``x`` (the geodesic objective
    back-propagates through the JVP). ``t`` is always a concrete Python int.
    Inputs may carry a leading batch axis.
    """

    dim: int
    schedule = None
    min_time: int = 1

    def score(self, x, t: int):
        raise NotImplementedError

    def jvp(self, x, t: int, v):
        raise NotImplementedError

    def eps(self, x, t: int):
        """Noise prediction implied by the score: ``-sqrt(1 - abar_t) * s``."""
        ab = self.schedule.alpha_bar(t)
        return -math.sqrt(1.0 - ab) * self.score(x, t)

    def check_time(self, t):
        hi = self.schedule.T if self.schedule is not None else t
        if int(t) != t or not self.min_time <= t <= hi:
            raise ValueError(f"time {t} outside supported range [{self.min_time}, {hi}]")
        return int(t)


def autodiff_jvp(score_fn, x, v):
    """Forward-mode directional derivative of ``score_fn`` along ``v``, batched."""
    x = jnp.asarray(x, dtype=jnp.float64)
    v = jnp.asarray(v, dtype=jnp.float64)
    if x.ndim == 1:
        return jax.jvp(score_fn, (x,), (v,))[1]
    return jax.vmap(lambda xi, vi: jax.jvp(score_fn, (xi,), (vi,))[1])(x, v)


def as_numpy(a):
    return np.asarray(a, dtype=np.float64)
