"""Score-Jacobian metric, discrete curve length and geodesic optimization.

The metric at ``x`` is ``G = J^T J`` with ``J`` the score Jacobian, so a tangent
vector ``v`` has length ``||J v||``. A path's length is the trapezoid rule over
the local lengths ``l_i = ||J(x_i) v_i||`` with second-order finite-difference
velocities. Geodesics minimize that length plus ``lam`` times the variance of
consecutive Euclidean segment lengths, with both endpoints held fixed.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import jax
import jax.numpy as jnp
import numpy as np

from scoregeo.baselines import InterpolationRequest, lerp, slerp
from scoregeo.diffusion import ddim_generate, ddim_invert
from scoregeo.errors import NumericalError
from scoregeo.optim import adam_init, adam_update, step_size
from scoregeo.path import Path

log = logging.getLogger(__name__)

SQRT_FLOOR = 1e-12
LAMBDA_EPS_REL = 1e-2
STENCILS = ("split", "central")


@dataclass(frozen=True)
class GeodesicConfig:
    """Solver settings. ``lam=None`` selects the automatic weight (see :func:`default_lambda`)."""

    N: int = 10
    lam: float | None = None
    iters: int = 5000
    lr0: float = 1e-2
    schedule: str = "cosine"
    init: str = "slerp"
    stencil: str = "split"
    seed: int = 0

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if self.iters < 1 or self.lr0 <= 0:
            raise ValueError("need iters >= 1 and lr0 > 0")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.init not in ("slerp", "lerp"):
            raise ValueError(f"unknown initializer {self.init!r}")
        if self.stencil not in STENCILS:
            raise ValueError(f"stencil must be one of {STENCILS}")
        if self.schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown step-size schedule {self.schedule!r}")


@dataclass(frozen=True)
class LengthReport:
    total_length: float
    local_lengths: np.ndarray
    reg_value: float
    lam: float = 0.0

    @property
    def objective(self) -> float:
        return self.total_length + self.lam * self.reg_value


@jax.custom_jvp
def safe_sqrt(u):
    """``sqrt(u)`` whose derivative is evaluated at ``max(u, 1e-12)``."""
    return jnp.sqrt(u)


@safe_sqrt.defjvp
def _safe_sqrt_jvp(primals, tangents):
    (u,), (du,) = primals, tangents
    return jnp.sqrt(u), du * 0.5 / jnp.sqrt(jnp.maximum(u, SQRT_FLOOR))


def _velocities(points, ds):
    first = (-3.0 * points[0] + 4.0 * points[1] - points[2]) / (2.0 * ds)
    inner = (points[2:] - points[:-2]) / (2.0 * ds)
    last = (3.0 * points[-1] - 4.0 * points[-2] + points[-3]) / (2.0 * ds)
    return jnp.concatenate([first[None], inner, last[None]], axis=0)


def _norms(jv):
    return safe_sqrt(jnp.sum(jv * jv, axis=-1))


def _local_lengths(score_field, t, points, ds, stencil="central"):
    """``l_i`` at every point.

    ``central`` uses the second-order stencils of :func:`finite_diff_velocities`.
    Those stencils skip ``x_i`` (inside) or weight neighbours unevenly (at the
    ends), so a zig-zag can drive ``l_i`` to zero and undercut the true length.
    ``split`` averages the metric lengths of the forward and backward first
    differences at each point (one-sided at the ends); the trapezoid sum then
    equals the polyline length with a two-point rule per segment, which cannot
    fall below the straight-line length in a flat metric. On smooth curves the
    two agree to second order.
    """
    if stencil == "central":
        return _norms(score_field.jvp(points, t, _velocities(points, ds)))
    diff = (points[1:] - points[:-1]) / ds
    at_left = _norms(score_field.jvp(points[:-1], t, diff))  # segment j measured at x_j
    at_right = _norms(score_field.jvp(points[1:], t, diff))  # segment j measured at x_{j+1}
    return 0.5 * (jnp.concatenate([at_left[:1], at_right]) + jnp.concatenate([at_left, at_right[-1:]]))


def _trapezoid(local, ds):
    return ds * (jnp.sum(local) - 0.5 * (local[0] + local[-1]))


def _segment_variance(points):
    diff = points[1:] - points[:-1]
    seg = safe_sqrt(jnp.sum(diff * diff, axis=-1))
    return jnp.mean((seg - jnp.mean(seg)) ** 2)


def metric_vector_length(score_field, x, t: int, v) -> float:
    """``|v|_g = ||J_x v||``; ``G`` itself is never formed."""
    jv = np.asarray(score_field.jvp(x, t, v))
    return float(np.linalg.norm(jv))


def finite_diff_velocities(path: Path) -> np.ndarray:
    """Second-order velocities: one-sided 3-point stencils at the ends, central inside."""
    if path.N < 2:
        raise ValueError("velocity stencil needs N >= 2 (three points)")
    return np.asarray(_velocities(jnp.asarray(path.points), path.ds))


def variance_regularizer(path: Path) -> float:
    """Population variance of the ``N`` Euclidean segment lengths."""
    return float(_segment_variance(jnp.asarray(path.points)))


def curve_length(score_field, path: Path, lam: float = 0.0, stencil: str = "central") -> LengthReport:
    """Trapezoidal length of ``path`` under the score-Jacobian metric at ``path.t``."""
    if path.N < 2:
        raise ValueError("curve_length needs N >= 2")
    if stencil not in STENCILS:
        raise ValueError(f"stencil must be one of {STENCILS}")
    local = np.asarray(_local_lengths(score_field, path.t, jnp.asarray(path.points), path.ds, stencil))
    bad = np.flatnonzero(~np.isfinite(local))
    if bad.size:
        raise NumericalError(f"non-finite local length at point {bad[0]}", index=int(bad[0]))
    total = float(_trapezoid(jnp.asarray(local), path.ds))
    return LengthReport(total, local, variance_regularizer(path), lam)


def polyline_length(score_field, points, t: int, refine: int = 16) -> float:
    """Length of the piecewise-linear curve through ``points``, each segment split ``refine`` times.

    Uses the two-point rule of the ``split`` scheme on the refined polyline, so
    it converges to the exact metric length of the polyline as ``refine`` grows.
    """
    points = np.asarray(points, dtype=np.float64)
    u = np.arange(refine)[:, None] / refine
    fine = (points[:-1, None, :] * (1 - u) + points[1:, None, :] * u).reshape(-1, points.shape[1])
    fine = np.concatenate([fine, points[-1:]], axis=0)
    diff = np.diff(fine, axis=0)
    left = np.linalg.norm(np.asarray(score_field.jvp(fine[:-1], t, diff)), axis=-1)
    right = np.linalg.norm(np.asarray(score_field.jvp(fine[1:], t, diff)), axis=-1)
    return float(0.5 * np.sum(left + right))


def default_lambda(score_field, init: Path, stencil: str = "split") -> float:
    """Weight that puts ``lam * N * Var`` on the scale of the initial length.

    ``lam = L_init / (N * Var_init + eps)`` with ``eps`` a small fraction of the
    squared mean segment length, so near-uniform initial spacing does not blow
    the weight up.
    """
    rep = curve_length(score_field, init, stencil=stencil)
    seg = np.linalg.norm(np.diff(init.points, axis=0), axis=1)
    floor = LAMBDA_EPS_REL * float(np.mean(seg)) ** 2
    if floor == 0.0:
        return 0.0
    return rep.total_length / (init.N * (rep.reg_value + floor))


@dataclass
class OptimizationTrace:
    """Per-iteration record. Row ``k < iters`` is the iterate before update ``k``; the last row is the final iterate."""

    lam: float
    iteration: list = field(default_factory=list)
    length: list = field(default_factory=list)
    reg: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    best_objective: list = field(default_factory=list)
    step_size: list = field(default_factory=list)
    diagnostic: str | None = None

    def append(self, k, length, reg, obj, best, lr):
        self.iteration.append(k)
        self.length.append(length)
        self.reg.append(reg)
        self.objective.append(obj)
        self.best_objective.append(best)
        self.step_size.append(lr)

    def __len__(self):
        return len(self.iteration)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "length", "reg", "objective", "best_objective", "step_size"])
            for row in zip(self.iteration, self.length, self.reg, self.objective, self.best_objective, self.step_size):
                w.writerow([row[0], *(repr(float(x)) for x in row[1:])])


def _initial_path(x_start, x_end, t, cfg: GeodesicConfig) -> Path:
    req = InterpolationRequest(x_start, x_end, cfg.N, t)
    if cfg.init == "lerp":
        return lerp(req)
    try:
        return slerp(req)
    except ValueError as exc:
        log.warning("slerp initialization unavailable (%s); using lerp", exc)
        return lerp(req)


def make_objective(score_field, t: int, x_start, x_end, N: int, lam: float, stencil: str = "split"):
    """``interior -> (objective, (length, reg))`` for fixed endpoints."""
    ds = 1.0 / N
    a = jnp.asarray(x_start, dtype=jnp.float64)[None]
    b = jnp.asarray(x_end, dtype=jnp.float64)[None]

    def objective(interior):
        points = jnp.concatenate([a, interior, b], axis=0)
        length = _trapezoid(_local_lengths(score_field, t, points, ds, stencil), ds)
        reg = _segment_variance(points)
        return length + lam * reg, (length, reg)

    return objective


def _make_runner(objective):
    value_and_grad = jax.value_and_grad(objective, has_aux=True)

    @jax.jit
    def run(interior, opt_state, best_obj, best_interior, lrs):
        def body(carry, lr):
            interior, opt_state, best_obj, best_interior, alive = carry
            (obj, (length, reg)), grad = value_and_grad(interior)
            finite = alive & jnp.isfinite(obj) & jnp.all(jnp.isfinite(grad))
            better = finite & (obj < best_obj)
            best_obj = jnp.where(better, obj, best_obj)
            best_interior = jnp.where(better, interior, best_interior)
            stepped, new_state = adam_update(grad, opt_state, interior, lr)
            keep = lambda new, old: jnp.where(finite, new, old)  # noqa: E731
            interior = keep(stepped, interior)
            opt_state = jax.tree_util.tree_map(keep, new_state, opt_state)
            return (interior, opt_state, best_obj, best_interior, finite), (obj, length, reg, best_obj, finite)

        carry = (interior, opt_state, best_obj, best_interior, jnp.array(True))
        carry, rows = jax.lax.scan(body, carry, lrs)
        return carry[:4], rows

    return run


def geodesic_optimize(score_field, x_start, x_end, t: int, cfg: GeodesicConfig = GeodesicConfig(), init: Path | None = None):
    """Minimize discrete length plus ``lam * Var`` over the interior points.

    Returns ``(best_path, trace)``. Endpoints are never touched by the update.
    If the objective turns non-finite the loop stops, ``trace.diagnostic`` says
    why, and the best finite iterate is returned.
    """
    x_start = np.asarray(x_start, dtype=np.float64)
    x_end = np.asarray(x_end, dtype=np.float64)
    t = score_field.check_time(t)
    if np.array_equal(x_start, x_end):
        const = Path(np.repeat(x_start[None], cfg.N + 1, axis=0), t)
        trace = OptimizationTrace(lam=0.0 if cfg.lam is None else cfg.lam)
        trace.append(0, 0.0, 0.0, 0.0, 0.0, 0.0)
        return const, trace

    if init is None:
        init = _initial_path(x_start, x_end, t, cfg)
    elif init.N != cfg.N or not (np.array_equal(init[0], x_start) and np.array_equal(init[-1], x_end)):
        raise ValueError("init path must have N + 1 points and the requested endpoints")

    lam = default_lambda(score_field, init, cfg.stencil) if cfg.lam is None else float(cfg.lam)
    run = _make_runner(make_objective(score_field, t, x_start, x_end, cfg.N, lam, cfg.stencil))

    # The extra trailing step evaluates the final iterate; its update is discarded.
    lrs = np.array([step_size(cfg.schedule, cfg.lr0, k, cfg.iters) for k in range(cfg.iters)] + [0.0])
    interior = jnp.asarray(init.points[1:-1])
    (_, _, _, best_interior), rows = run(interior, adam_init(interior), jnp.inf, interior, jnp.asarray(lrs))
    obj, length, reg, best, finite = (np.asarray(r) for r in rows)

    trace = OptimizationTrace(lam=lam)
    n_ok = int(np.argmin(finite)) if not finite.all() else len(finite)
    if n_ok < len(finite):
        trace.diagnostic = f"non-finite objective or gradient at iteration {n_ok}"
        log.warning("geodesic optimization stopped: %s", trace.diagnostic)
    if n_ok == 0:
        raise NumericalError("objective is non-finite at the initial path", index=0, payload=init)
    for k in range(n_ok):
        trace.append(k, float(length[k]), float(reg[k]), float(obj[k]), float(best[k]), float(lrs[k]))

    points = np.concatenate([x_start[None], np.asarray(best_interior), x_end[None]], axis=0)
    return Path(points, t), trace


@dataclass(frozen=True)
class EncodedPair:
    """Endpoints mapped to ``tau`` and their shared reconstructions at ``t = 0``."""

    tau: int
    x_a: np.ndarray
    x_b: np.ndarray
    rec_a: np.ndarray
    rec_b: np.ndarray


def encode_pair(score_field, schedule, x0_a, x0_b, tau: int) -> EncodedPair:
    xa = ddim_invert(x0_a, tau, score_field, schedule)
    xb = ddim_invert(x0_b, tau, score_field, schedule)
    return EncodedPair(
        tau,
        xa,
        xb,
        ddim_generate(xa, tau, score_field, schedule),
        ddim_generate(xb, tau, score_field, schedule),
    )


def decode_path(score_field, schedule, path: Path, pair: EncodedPair) -> np.ndarray:
    """Generate every interior point back to ``t = 0``; endpoints reuse the reconstructions."""
    out = np.empty_like(path.points)
    out[0], out[-1] = pair.rec_a, pair.rec_b
    if path.N > 1:
        out[1:-1] = ddim_generate(path.points[1:-1], pair.tau, score_field, schedule)
    return out


def interpolate_at_tau(score_field, pair: EncodedPair, method: str, cfg: GeodesicConfig):
    """The path at ``tau`` for ``method`` in {lerp, slerp, geodesic}, plus the trace if any."""
    req = InterpolationRequest(pair.x_a, pair.x_b, cfg.N, pair.tau)
    if method == "lerp":
        return lerp(req), None
    if method == "slerp":
        if np.array_equal(pair.x_a, pair.x_b):
            return lerp(req), None
        return slerp(req), None
    if method == "geodesic":
        return geodesic_optimize(score_field, pair.x_a, pair.x_b, pair.tau, cfg)
    raise ValueError(f"unknown interpolation method {method!r}")


def interpolate_end_to_end(score_field, schedule, x0_a, x0_b, tau: int, cfg: GeodesicConfig = GeodesicConfig(), method="geodesic"):
    """Invert both samples to ``tau``, interpolate there, and decode back to ``t = 0``.

    Returns ``(samples, path_at_tau, trace)``; ``samples[0]`` and ``samples[-1]``
    are the reconstructions of the two inputs.
    """
    pair = encode_pair(score_field, schedule, x0_a, x0_b, tau)
    path, trace = interpolate_at_tau(score_field, pair, method, cfg)
    return decode_path(score_field, schedule, path, pair), path, trace
