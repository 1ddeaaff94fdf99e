"""Variance schedules, forward noising and DDPM/DDIM reverse steps.

Time is 1-based: ``betas[t-1]`` and ``alphas_bar[t-1]`` hold the values at step
``t`` in ``1..T``, and ``alpha_bar(0) == 1``. All functions broadcast over a
leading batch axis, so ``x`` may be ``(D,)`` or ``(B, D)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Schedule:
    """A discrete variance schedule of length ``T``."""

    T: int
    betas: np.ndarray
    alphas_bar: np.ndarray
    kind: str = "linear"

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        abar = np.asarray(self.alphas_bar, dtype=np.float64)
        if betas.shape != (self.T,) or abar.shape != (self.T,):
            raise ValueError(f"schedule arrays must have length T={self.T}")
        if not (np.all(betas > 0) and np.all(betas < 1)):
            raise ValueError("betas must lie in (0, 1)")
        if not (np.all(abar > 0) and np.all(abar < 1)) or np.any(np.diff(abar) >= 0):
            raise ValueError("alphas_bar must be strictly decreasing in (0, 1)")
        betas.flags.writeable = False
        abar.flags.writeable = False
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas_bar", abar)

    def alpha_bar(self, t: int) -> float:
        """Cumulative signal retention at step ``t`` (1.0 at ``t == 0``)."""
        t = self._check_t(t, lo=0)
        return 1.0 if t == 0 else float(self.alphas_bar[t - 1])

    def beta(self, t: int) -> float:
        t = self._check_t(t, lo=1)
        return float(self.betas[t - 1])

    def ddim_coefficients(self, t: int) -> tuple[float, float]:
        """Return ``(a_t, b_t)`` of the deterministic update ``x_{t-1} = a_t x_t + b_t eps``."""
        ab_t = self.alpha_bar(t)
        ab_prev = self.alpha_bar(t - 1)
        a = math.sqrt(ab_prev / ab_t)
        b = -math.sqrt(ab_prev * (1.0 - ab_t) / ab_t) + math.sqrt(1.0 - ab_prev)
        return a, b

    def to_config(self) -> dict[str, str]:
        beta_min, beta_max = float(self.betas[0]), float(self.betas[-1])
        return {
            "T": str(self.T),
            "beta_min": repr(beta_min),
            "beta_max": repr(beta_max),
            "schedule_kind": self.kind,
        }

    @classmethod
    def from_config(cls, cfg: dict[str, str]) -> "Schedule":
        kind = cfg.get("schedule_kind", "linear")
        if kind != "linear":
            raise ValueError(f"unsupported schedule_kind {kind!r}")
        return make_schedule(
            int(cfg["T"]),
            float(cfg.get("beta_min", 1e-4)),
            float(cfg.get("beta_max", 0.02)),
        )

    def _check_t(self, t, lo):
        if int(t) != t or not lo <= t <= self.T:
            raise ValueError(f"time step {t} outside [{lo}, {self.T}]")
        return int(t)


def make_schedule(T: int, beta_min: float = 1e-4, beta_max: float = 0.02) -> Schedule:
    """Linear beta ramp from ``beta_min`` to ``beta_max`` over ``T`` steps."""
    if int(T) != T or T < 2:
        raise ValueError(f"T must be an integer >= 2, got {T}")
    if not (math.isfinite(beta_min) and math.isfinite(beta_max)):
        raise ValueError("beta bounds must be finite")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ValueError("need 0 < beta_min <= beta_max < 1")
    betas = np.linspace(beta_min, beta_max, int(T), dtype=np.float64)
    return Schedule(int(T), betas, np.cumprod(1.0 - betas))


def _same_shape(x, *others):
    x = np.asarray(x, dtype=np.float64)
    out = [x]
    for o in others:
        o = np.asarray(o, dtype=np.float64)
        if o.shape[-1:] != x.shape[-1:]:
            raise ValueError(f"dimension mismatch: {o.shape} vs {x.shape}")
        out.append(o)
    return out


def forward_marginal(x0, t: int, noise, schedule: Schedule) -> np.ndarray:
    """Closed-form ``q(x_t | x_0)`` draw: ``sqrt(abar_t) x0 + sqrt(1 - abar_t) noise``."""
    if not 1 <= t <= schedule.T:
        raise ValueError(f"t={t} outside [1, {schedule.T}]")
    x0, noise = _same_shape(x0, noise)
    ab = schedule.alpha_bar(t)
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * noise


def forward_step(x_prev, t: int, noise, schedule: Schedule) -> np.ndarray:
    """One Markov step ``q(x_t | x_{t-1})``."""
    x_prev, noise = _same_shape(x_prev, noise)
    beta = schedule.beta(t)
    return math.sqrt(1.0 - beta) * x_prev + math.sqrt(beta) * noise


def ddpm_reverse_step(x, t: int, eps_pred, z, schedule: Schedule) -> np.ndarray:
    """Ancestral DDPM update with ``sigma_t^2 = beta_t``."""
    if t < 1:
        raise ValueError("ddpm_reverse_step needs t >= 1")
    x, eps_pred, z = _same_shape(x, eps_pred, z)
    beta = schedule.beta(t)
    ab = schedule.alpha_bar(t)
    mean = (x - beta / math.sqrt(1.0 - ab) * eps_pred) / math.sqrt(1.0 - beta)
    return mean + math.sqrt(beta) * z


@dataclass(frozen=True)
class ReverseStepParams:
    """DDIM stochasticity; ``eta = 0`` is the deterministic sampler."""

    eta: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")

    def sigma(self, t: int, schedule: Schedule) -> float:
        if self.eta == 0.0:
            return 0.0
        ab_t = schedule.alpha_bar(t)
        ab_prev = schedule.alpha_bar(t - 1)
        return self.eta * math.sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * math.sqrt(1.0 - ab_t / ab_prev)


def ddim_reverse_step(x, t: int, eps_pred, params: ReverseStepParams, z, schedule: Schedule) -> np.ndarray:
    """One DDIM update from ``t`` to ``t - 1``."""
    if t < 1:
        raise ValueError("ddim_reverse_step needs t >= 1")
    x, eps_pred, z = _same_shape(x, eps_pred, z)
    sigma = params.sigma(t, schedule)
    if sigma == 0.0:
        a, b = schedule.ddim_coefficients(t)
        return a * x + b * eps_pred
    ab_t = schedule.alpha_bar(t)
    ab_prev = schedule.alpha_bar(t - 1)
    x0_pred = (x - math.sqrt(1.0 - ab_t) * eps_pred) / math.sqrt(ab_t)
    direction = math.sqrt(max(1.0 - ab_prev - sigma**2, 0.0)) * eps_pred
    return math.sqrt(ab_prev) * x0_pred + direction + sigma * z


def ddim_invert(x0, tau: int, score_field, schedule: Schedule) -> np.ndarray:
    """Deterministic DDIM inversion from ``t = 0`` up to ``t = tau``.

    Uses ``eps(x_{t-1}, t)`` in place of the unknown ``eps(x_t, t)``; the noise
    prediction comes from ``score_field.eps``, which derives it from the score.
    """
    if int(tau) != tau or not 1 <= tau <= schedule.T:
        raise ValueError(f"tau={tau} outside [1, {schedule.T}]")
    x = np.array(x0, dtype=np.float64)
    for t in range(1, int(tau) + 1):
        a, b = schedule.ddim_coefficients(t)
        eps = np.asarray(score_field.eps(x, t))
        x = (x - b * eps) / a
    return x


def ddim_generate(x_tau, tau: int, score_field, schedule: Schedule) -> np.ndarray:
    """Run the ``eta = 0`` DDIM chain from ``tau`` down to ``t = 0``."""
    if int(tau) != tau or not 1 <= tau <= schedule.T:
        raise ValueError(f"tau={tau} outside [1, {schedule.T}]")
    x = np.array(x_tau, dtype=np.float64)
    for t in range(int(tau), 0, -1):
        a, b = schedule.ddim_coefficients(t)
        x = a * x + b * np.asarray(score_field.eps(x, t))
    return x
