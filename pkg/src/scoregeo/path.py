"""Discretized curves on a uniform parameter grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Path:
    """Points ``x^(0) .. x^(N)`` at diffusion time ``t`` with ``ds = 1 / N``."""

    points: np.ndarray
    t: int = 0

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise ValueError(f"a path needs shape (N + 1, D) with N >= 1, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("path points must be finite")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "t", int(self.t))

    @property
    def N(self) -> int:
        return self.points.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def ds(self) -> float:
        return 1.0 / self.N

    def __len__(self):
        return self.points.shape[0]

    def __getitem__(self, i):
        return self.points[i]
