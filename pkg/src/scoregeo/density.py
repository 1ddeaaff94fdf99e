"""Log-density of samples under a score model, by change of variables.

The deterministic inversion ``x_{t-1} -> x_t = (x_{t-1} - b_t eps(x_{t-1}, t)) / a_t``
is a composition of invertible maps ending near ``N(0, I)`` at ``t = T``. The
density it induces at ``t = 0`` is

    log p(x_0) = log N(x_T; 0, I) + sum_t log |det (I - b_t d eps / dx) / a_t|,

which only needs the model's Jacobian, assembled from ``D`` JVPs per step.
For exact mixture fields the closed form is available and should be preferred;
this routine is what gives a trained network a log-density at all.
"""

from __future__ import annotations

import math

import numpy as np

from scoregeo.errors import NumericalError


def _eps_jacobian(score_field, x, t, schedule):
    """``d eps / dx`` for a batch ``x`` of shape ``(n, D)``; returns ``(n, D, D)``."""
    n, D = x.shape
    scale = -math.sqrt(1.0 - schedule.alpha_bar(t))
    jac = np.empty((n, D, D))
    for j in range(D):
        e = np.zeros_like(x)
        e[:, j] = 1.0
        jac[:, :, j] = scale * np.asarray(score_field.jvp(x, t, e))
    return jac


def flow_log_density(score_field, schedule, x0) -> np.ndarray:
    """Log-density of each row of ``x0`` under the model's deterministic sampler.

    Cost is ``T * D`` batched JVPs, so it is meant for low-dimensional data and
    short paths. Raises :class:`NumericalError` if a step map is singular.
    """
    x = np.atleast_2d(np.asarray(x0, dtype=np.float64)).copy()
    n, D = x.shape
    logdet = np.zeros(n)
    eye = np.eye(D)
    for t in range(1, schedule.T + 1):
        a, b = schedule.ddim_coefficients(t)
        jac = _eps_jacobian(score_field, x, t, schedule)
        sign, ld = np.linalg.slogdet((eye - b * jac) / a)
        if np.any(sign == 0) or not np.all(np.isfinite(ld)):
            raise NumericalError(f"singular inversion step at t={t}", index=t)
        logdet += ld
        eps = -math.sqrt(1.0 - schedule.alpha_bar(t)) * np.asarray(score_field.score(x, t))
        x = (x - b * eps) / a
    base = -0.5 * np.sum(x * x, axis=1) - 0.5 * D * math.log(2.0 * math.pi)
    return base + logdet


def model_log_density(score_field, schedule, x0) -> np.ndarray:
    """Closed form at ``t = 0`` when the field has one, otherwise :func:`flow_log_density`."""
    exact = getattr(score_field, "log_density", None)
    if exact is not None:
        return np.asarray(exact(np.atleast_2d(x0), 0), dtype=np.float64)
    return flow_log_density(score_field, schedule, x0)
