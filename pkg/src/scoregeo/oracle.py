"""Grid-graph shortest paths under the score metric, and method comparison.

The Dijkstra oracle is independent of the geodesic solver: it only shares the
metric evaluation ``|v|_g = ||J v||``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from scoregeo.density import model_log_density
from scoregeo.diffusion import make_schedule
from scoregeo.errors import NumericalError
from scoregeo.fields.mixture import MixtureDensity, MixtureField
from scoregeo.geodesic import (
    GeodesicConfig,
    curve_length,
    decode_path,
    encode_pair,
    geodesic_optimize,
    interpolate_at_tau,
    polyline_length,
)

METHODS = ("lerp", "slerp", "geodesic")


@dataclass(frozen=True)
class GridGraphSpec:
    """Axis-aligned 2-D lattice with 8-neighbour connectivity."""

    lo: tuple[float, float]
    hi: tuple[float, float]
    resolution: tuple[int, int] = (256, 256)

    def __post_init__(self):
        if len(self.lo) != 2 or len(self.hi) != 2 or len(self.resolution) != 2:
            raise ValueError("grid oracle is 2-D only")
        if min(self.resolution) < 16:
            raise ValueError("resolution must be >= 16 per axis")
        if not all(h > l for l, h in zip(self.lo, self.hi)):
            raise ValueError("grid box must have positive extent")

    @property
    def axes(self):
        return [np.linspace(l, h, n) for l, h, n in zip(self.lo, self.hi, self.resolution)]

    def nodes(self) -> np.ndarray:
        gx, gy = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel()], axis=1)

    def snap(self, x) -> tuple[int, int]:
        x = np.asarray(x, dtype=np.float64)
        for i in range(2):
            if not self.lo[i] <= x[i] <= self.hi[i]:
                raise ValueError(f"point {x} outside the grid box")
        return tuple(int(np.argmin(np.abs(ax - xi))) for ax, xi in zip(self.axes, x))

    def index(self, ij) -> int:
        return ij[0] * self.resolution[1] + ij[1]

    @classmethod
    def around(cls, x_a, x_b, margin=1.5, resolution=256):
        """A box containing both endpoints with ``margin`` to spare on every side."""
        pts = np.stack([x_a, x_b])
        lo = pts.min(axis=0) - margin
        hi = pts.max(axis=0) + margin
        return cls(tuple(lo), tuple(hi), (resolution, resolution))


def _node_jacobians(score_field, nodes, t, chunk=16384):
    """``J`` at every node, columns obtained from two JVPs."""
    out = np.empty((len(nodes), 2, 2))
    for start in range(0, len(nodes), chunk):
        x = nodes[start : start + chunk]
        for j in range(2):
            e = np.zeros_like(x)
            e[:, j] = 1.0
            out[start : start + chunk, :, j] = np.asarray(score_field.jvp(x, t, e))
    return out


def dijkstra_geodesic(score_field, spec: GridGraphSpec, x_a, x_b, t: int):
    """Shortest 8-connected lattice path between the nodes nearest ``x_a`` and ``x_b``.

    Edge ``u-w`` costs ``(|w - u|_g(u) + |w - u|_g(w)) / 2``. Returns
    ``(polyline, length)``.
    """
    nx, ny = spec.resolution
    nodes = spec.nodes()
    jac = _node_jacobians(score_field, nodes, t).reshape(nx, ny, 2, 2)
    hx = (spec.hi[0] - spec.lo[0]) / (nx - 1)
    hy = (spec.hi[1] - spec.lo[1]) / (ny - 1)
    idx = np.arange(nx * ny).reshape(nx, ny)

    rows, cols, weights = [], [], []
    for di, dj in ((1, 0), (0, 1), (1, 1), (1, -1)):
        d = np.array([di * hx, dj * hy])
        cost = np.linalg.norm(jac @ d, axis=-1)  # |d|_g at every node
        i0, i1 = max(0, -di), nx - max(0, di)
        j0, j1 = max(0, -dj), ny - max(0, dj)
        src = idx[i0:i1, j0:j1]
        dst = idx[i0 + di : i1 + di, j0 + dj : j1 + dj]
        w = 0.5 * (cost[i0:i1, j0:j1] + cost[i0 + di : i1 + di, j0 + dj : j1 + dj])
        rows.append(src.ravel())
        cols.append(dst.ravel())
        weights.append(w.ravel())
    w = np.concatenate(weights)
    if not np.all(np.isfinite(w)):
        raise NumericalError("non-finite edge weight in grid graph")
    # Zero-cost edges would vanish from a sparse matrix.
    w = np.maximum(w, np.finfo(float).tiny)
    graph = sp.coo_matrix((w, (np.concatenate(rows), np.concatenate(cols))), shape=(nx * ny, nx * ny)).tocsr()

    src = spec.index(spec.snap(x_a))
    dst = spec.index(spec.snap(x_b))
    dist, pred = dijkstra(graph, directed=False, indices=src, return_predecessors=True)
    if not math.isfinite(dist[dst]):
        raise NumericalError("grid graph is disconnected")
    chain = [dst]
    while chain[-1] != src:
        chain.append(pred[chain[-1]])
    polyline = nodes[np.array(chain[::-1])]
    return polyline, float(dist[dst])


@dataclass(frozen=True)
class Scenario:
    """A fixed 2-D mixture, a pair of endpoints and the time at which to compare paths."""

    name: str
    mixture: MixtureDensity
    x_a: tuple[float, float]
    x_b: tuple[float, float]
    t: int = 0
    T: int | None = None

    def field(self) -> MixtureField:
        schedule = make_schedule(self.T) if self.T else None
        return MixtureField(self.mixture, schedule)


def _iso(v):
    return v * np.eye(2)


# The chord of "gap" runs through a narrow mode whose flanks are nearly empty;
# the cheap route bends through the low-curvature region towards the broad mode.
SCENARIOS = {
    "gap": Scenario(
        "gap",
        MixtureDensity(np.array([0.6, 0.4]), np.array([[0.0, 3.5], [0.0, 0.5]]), np.array([_iso(2.0), _iso(0.1)])),
        (-2.5, 0.5),
        (2.5, 0.5),
    ),
    "tilted": Scenario(
        "tilted",
        MixtureDensity(
            np.array([0.5, 0.5]),
            np.array([[-1.5, -1.5], [1.5, 1.5]]),
            np.array([_iso(0.3), [[1.0, 0.5], [0.5, 1.0]]]),
        ),
        (-2.5, 1.0),
        (1.0, -2.5),
    ),
    "diffused": Scenario(
        "diffused",
        MixtureDensity(np.array([0.5, 0.5]), np.array([[-2.0, 0.0], [2.0, 0.0]]), np.array([_iso(0.05), _iso(1.0)])),
        (-1.2, 0.8),
        (1.2, 0.8),
        t=200,
        T=1000,
    ),
}


@dataclass
class OracleResult:
    scenario: str
    geodesic_length: float
    dijkstra_length: float
    lerp_length: float
    segment_variance_ratio: float
    geodesic_path: np.ndarray = field(repr=False)
    dijkstra_path: np.ndarray = field(repr=False)

    @property
    def ratio(self) -> float:
        """Geodesic over Dijkstra length; slightly below 1 is the expected outcome."""
        return self.geodesic_length / self.dijkstra_length

    @property
    def lerp_excess(self) -> float:
        """How much longer the straight chord is than the optimized path."""
        return self.lerp_length / self.geodesic_length - 1.0


def run_oracle(scenario: Scenario, cfg: GeodesicConfig = GeodesicConfig(N=32), resolution=256, margin=2.0, refine=16):
    """Optimize a geodesic and solve the grid problem for one scenario.

    Both continuous lengths are measured with :func:`polyline_length` at the
    same refinement, so they are compared on equal footing with the graph.
    """
    f = scenario.field()
    a, b = np.asarray(scenario.x_a, float), np.asarray(scenario.x_b, float)
    path, _ = geodesic_optimize(f, a, b, scenario.t, cfg)
    spec = GridGraphSpec.around(a, b, margin=margin, resolution=resolution)
    poly, d_len = dijkstra_geodesic(f, spec, a, b, scenario.t)
    seg = np.linalg.norm(np.diff(path.points, axis=0), axis=1)
    return OracleResult(
        scenario.name,
        polyline_length(f, path.points, scenario.t, refine),
        d_len,
        polyline_length(f, np.stack([a, b]), scenario.t, refine * cfg.N),
        float(np.var(seg) / np.mean(seg) ** 2),
        path.points,
        poly,
    )


def reconstruction_mse(original, reconstructed) -> float:
    original = np.asarray(original, dtype=np.float64)
    reconstructed = np.asarray(reconstructed, dtype=np.float64)
    if original.shape != reconstructed.shape:
        raise ValueError("shape mismatch")
    return float(np.mean((original - reconstructed) ** 2))


@dataclass
class MethodRow:
    method: str
    reconstruction_mse: float
    path_length: float
    segment_variance: float
    min_log_density: float
    median_log_density: float
    log_density_profile: np.ndarray = field(repr=False)


@dataclass
class EvalReport:
    rows: list[MethodRow]
    paths_tau: dict = field(default_factory=dict, repr=False)
    samples: dict = field(default_factory=dict, repr=False)
    traces: dict = field(default_factory=dict, repr=False)

    COLUMNS = (
        "method",
        "reconstruction_mse",
        "path_length",
        "segment_variance",
        "min_log_density",
        "median_log_density",
    )

    def row(self, method) -> MethodRow:
        return next(r for r in self.rows if r.method == method)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for r in self.rows:
                w.writerow([r.method] + [repr(float(getattr(r, c))) for c in self.COLUMNS[1:]])


def compare_methods(score_field, schedule, x0_a, x0_b, tau, cfg: GeodesicConfig = GeodesicConfig(), log_density=None, methods=METHODS):
    """Run each interpolant through the shared inversion/generation maps.

    ``log_density(samples)`` scores the decoded samples at ``t = 0``; by
    default the model's own density is used (see
    :func:`scoregeo.density.model_log_density`). The endpoints are encoded
    once, so every method sees the same reconstructions.
    """
    if log_density is None:
        log_density = lambda x: model_log_density(score_field, schedule, x)  # noqa: E731
    pair = encode_pair(score_field, schedule, x0_a, x0_b, tau)
    report = EvalReport([])
    for method in methods:
        path, trace = interpolate_at_tau(score_field, pair, method, cfg)
        samples = decode_path(score_field, schedule, path, pair)
        mse = 0.5 * (reconstruction_mse(x0_a, samples[0]) + reconstruction_mse(x0_b, samples[-1]))
        length = curve_length(score_field, path, stencil=cfg.stencil)
        profile = np.asarray(log_density(samples), dtype=np.float64)
        if not np.all(np.isfinite(profile)):
            raise NumericalError(f"{method}: non-finite log-density along the decoded path", payload=profile)
        seg = np.linalg.norm(np.diff(path.points, axis=0), axis=1)
        report.rows.append(
            MethodRow(
                method,
                mse,
                length.total_length,
                float(np.var(seg)),
                float(np.min(profile)),
                float(np.median(profile)),
                profile,
            )
        )
        report.paths_tau[method] = path
        report.samples[method] = samples
        if trace is not None:
            report.traces[method] = trace
    return report
