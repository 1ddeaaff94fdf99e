"""Linear and spherical-linear interpolation in the noise space."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from scoregeo.path import Path

SMALL_ANGLE = 1e-8
ANTIPODAL_MARGIN = 1e-6


@dataclass(frozen=True)
class InterpolationRequest:
    x_a: np.ndarray
    x_b: np.ndarray
    N: int
    t: int = 0

    def __post_init__(self):
        a = np.asarray(self.x_a, dtype=np.float64)
        b = np.asarray(self.x_b, dtype=np.float64)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError(f"endpoint shapes differ: {a.shape} vs {b.shape}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        object.__setattr__(self, "x_a", a)
        object.__setattr__(self, "x_b", b)
        object.__setattr__(self, "N", int(self.N))

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.N + 1) / self.N


def _pin(points, req) -> Path:
    points[0] = req.x_a
    points[-1] = req.x_b
    return Path(points, req.t)


def lerp(req: InterpolationRequest) -> Path:
    """Points ``(1 - s) x_a + s x_b`` on the grid ``s_i = i / N``.

    Evaluated as ``x_a + s (x_b - x_a)`` so that equal endpoints give an
    exactly constant path.
    """
    s = req.grid[:, None]
    return _pin(req.x_a + s * (req.x_b - req.x_a), req)


def slerp_angle(x_a, x_b) -> float:
    na, nb = np.linalg.norm(x_a), np.linalg.norm(x_b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("slerp is undefined for a zero-norm endpoint")
    # 2 atan2(|u - v|, |u + v|) for unit u, v equals arccos(u . v) but keeps
    # full relative accuracy near 0 and pi, where arccos loses half the digits.
    u, v = np.asarray(x_a) / na, np.asarray(x_b) / nb
    return 2.0 * math.atan2(float(np.linalg.norm(u - v)), float(np.linalg.norm(u + v)))


def slerp(req: InterpolationRequest) -> Path:
    """Great-circle interpolation; falls back to :func:`lerp` for tiny angles."""
    theta = slerp_angle(req.x_a, req.x_b)
    if theta > math.pi - ANTIPODAL_MARGIN:
        raise ValueError("slerp endpoints are (nearly) antipodal; the great circle is not unique")
    if theta < SMALL_ANGLE:
        return lerp(req)
    s = req.grid[:, None]
    sin_t = math.sin(theta)
    points = np.sin((1.0 - s) * theta) / sin_t * req.x_a + np.sin(s * theta) / sin_t * req.x_b
    return _pin(points, req)
