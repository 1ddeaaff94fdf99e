import math

import numpy as np
import pytest

from scoregeo import MixtureDensity, MixtureField, make_schedule
from scoregeo.density import flow_log_density, model_log_density
from scoregeo.errors import NumericalError
from scoregeo.geodesic import GeodesicConfig, metric_vector_length
from scoregeo.oracle import (
    SCENARIOS,
    GridGraphSpec,
    Scenario,
    compare_methods,
    dijkstra_geodesic,
    reconstruction_mse,
    run_oracle,
)

from conftest import LinearField, bimodal_2d, gaussian


def two_point_length(field, points, t):
    """Segment-by-segment two-point rule, one metric evaluation at a time."""
    total = 0.0
    for p, q in zip(points[:-1], points[1:]):
        d = q - p
        total += 0.5 * (metric_vector_length(field, p[None], t, d[None]) + metric_vector_length(field, q[None], t, d[None]))
    return total


class TestGridSpec:
    def test_snap_to_nearest_node(self):
        spec = GridGraphSpec((0.0, 0.0), (1.5, 1.5), (16, 16))
        assert spec.snap([0.04, 1.46]) == (0, 15)
        assert spec.snap([0.76, 0.74]) == (8, 7)

    def test_point_outside_box(self):
        spec = GridGraphSpec((0.0, 0.0), (1.0, 1.0), (16, 16))
        with pytest.raises(ValueError):
            spec.snap([1.1, 0.5])

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(lo=(0.0, 0.0), hi=(1.0, 1.0), resolution=(8, 16)),
            dict(lo=(0.0, 0.0), hi=(0.0, 1.0)),
            dict(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            GridGraphSpec(**kwargs)

    def test_around_contains_endpoints_with_margin(self):
        spec = GridGraphSpec.around(np.array([-1.0, 2.0]), np.array([3.0, -0.5]), margin=0.5, resolution=32)
        assert spec.lo == (-1.5, -1.0)
        assert spec.hi == (3.5, 2.5)


class TestDijkstra:
    def test_flat_isotropic_axis_aligned(self):
        f = LinearField(-np.eye(2))
        spec = GridGraphSpec((-2.0, -2.0), (2.0, 2.0), (33, 33))
        poly, length = dijkstra_geodesic(f, spec, [-1.5, 0.0], [1.5, 0.0], 0)
        assert length == pytest.approx(3.0, abs=1e-12)
        np.testing.assert_allclose(poly[:, 1], 0.0, atol=1e-12)

    def test_flat_isotropic_diagonal_is_exact(self):
        f = LinearField(-np.eye(2))
        spec = GridGraphSpec((-2.0, -2.0), (2.0, 2.0), (33, 33))
        _, length = dijkstra_geodesic(f, spec, [-1.0, -1.0], [1.0, 1.0], 0)
        assert length == pytest.approx(2.0 * math.sqrt(2.0), abs=1e-12)

    def test_flat_isotropic_off_axis_is_octile_distance(self):
        f = LinearField(-np.eye(2))
        spec = GridGraphSpec((0.0, 0.0), (2.0, 2.0), (17, 17))
        _, length = dijkstra_geodesic(f, spec, [0.0, 0.0], [2.0, 1.0], 0)
        h = 2.0 / 16
        assert length == pytest.approx(h * (8 * math.sqrt(2.0) + 8), abs=1e-12)

    def test_anisotropic_vertical_cost(self):
        f = LinearField(np.diag([1.0, 0.25]))
        spec = GridGraphSpec((-1.0, -1.0), (1.0, 1.0), (17, 17))
        _, length = dijkstra_geodesic(f, spec, [0.0, -0.75], [0.0, 0.75], 0)
        assert length == pytest.approx(0.25 * 1.5, abs=1e-12)

    def test_endpoints_snapped(self):
        f = LinearField(-np.eye(2))
        spec = GridGraphSpec((0.0, 0.0), (1.5, 1.5), (16, 16))
        poly, _ = dijkstra_geodesic(f, spec, [0.04, 0.02], [1.46, 0.74], 0)
        np.testing.assert_allclose(poly[0], [0.0, 0.0])
        np.testing.assert_allclose(poly[-1], [1.5, 0.7])

    def test_length_is_two_point_rule_along_polyline(self):
        f = MixtureField(bimodal_2d())
        spec = GridGraphSpec((-3.0, -2.5), (3.0, 2.5), (40, 40))
        poly, length = dijkstra_geodesic(f, spec, [-2.0, 1.0], [2.0, -1.5], 0)
        assert length == pytest.approx(two_point_length(f, poly, 0), rel=1e-12)

    @pytest.mark.parametrize("name", ["gap", "tilted"])
    def test_refinement_does_not_lengthen(self, name):
        # Resolutions R and 2R - 1 over the same box give nested node sets, and
        # both endpoints sit on nodes of every grid.
        sc = SCENARIOS[name]
        f = sc.field()
        a, b = np.asarray(sc.x_a), np.asarray(sc.x_b)
        lengths = [dijkstra_geodesic(f, GridGraphSpec.around(a, b, 2.0, R), a, b, sc.t)[1] for R in (33, 65, 129, 257)]
        assert all(fine <= coarse + 1e-9 for coarse, fine in zip(lengths, lengths[1:]))

    def test_refinement_converges_where_coarse_edges_underestimate(self):
        # A coarse edge only sees the metric at its two ends, so it can miss a
        # ridge between nodes and come out short. Monotonicity then fails at
        # low resolution, but successive lengths still settle down.
        f = MixtureField(bimodal_2d())
        a, b = [-3.0 + 5 * 0.1875, -2.5 + 22 * 0.15625], [-3.0 + 26 * 0.1875, -2.5 + 6 * 0.15625]
        lengths = [dijkstra_geodesic(f, GridGraphSpec((-3.0, -2.5), (3.0, 2.5), (R, R)), a, b, 0)[1] for R in (33, 65, 129, 257)]
        assert lengths[1] > lengths[0]
        diffs = np.abs(np.diff(lengths))
        assert diffs[-1] < 1e-4 * lengths[-1]
        assert diffs[-1] < diffs[0]

    def test_non_finite_weights_abort(self):
        class Blowup(LinearField):
            def jvp(self, x, t, v):
                out = super().jvp(x, t, v)
                return out * np.where(np.asarray(x)[:, :1] > 0.5, np.nan, 1.0)

        spec = GridGraphSpec((0.0, 0.0), (1.0, 1.0), (16, 16))
        with pytest.raises(NumericalError):
            dijkstra_geodesic(Blowup(-np.eye(2)), spec, [0.0, 0.0], [0.2, 0.2], 0)


class TestReconstructionMSE:
    def test_identical(self):
        x = np.array([0.3, -1.0, 2.0])
        assert reconstruction_mse(x, x) == 0.0

    def test_one_dimensional(self):
        assert reconstruction_mse([1.0], [1.1]) == pytest.approx(0.01, rel=1e-12)

    def test_mean_over_coordinates(self):
        assert reconstruction_mse([0.0, 0.0], [1.0, 3.0]) == pytest.approx(5.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            reconstruction_mse(np.zeros(2), np.zeros(3))


class TestCompareMethods:
    cfg = GeodesicConfig(N=12, iters=1500)

    def test_degenerate_endpoints(self):
        sched = make_schedule(50)
        f = MixtureField(bimodal_2d(), sched)
        x = np.array([0.3, -0.2])
        rep = compare_methods(f, sched, x, x, 20, self.cfg)
        rows = [rep.row(m) for m in ("lerp", "slerp", "geodesic")]
        for r in rows[1:]:
            assert r.reconstruction_mse == rows[0].reconstruction_mse
            assert r.path_length == rows[0].path_length == 0.0
            np.testing.assert_array_equal(r.log_density_profile, rows[0].log_density_profile)

    def test_flat_metric_geodesic_matches_lerp(self):
        sched = make_schedule(50)
        f = gaussian([0.5, -0.3], np.eye(2) * 0.7, sched)
        rep = compare_methods(f, sched, np.array([-1.0, 0.4]), np.array([1.3, 0.9]), 50, self.cfg)
        assert rep.row("geodesic").path_length == pytest.approx(rep.row("lerp").path_length, abs=1e-3)

    def test_bimodal_ordering_and_recomputed_lengths(self, tmp_path):
        sched = make_schedule(50)
        f = MixtureField(bimodal_2d(), sched)
        x0_a, x0_b = np.array([-1.6, 0.3]), np.array([1.3, -0.5])
        rep = compare_methods(f, sched, x0_a, x0_b, 20, self.cfg)
        rep.to_csv(tmp_path / "report.csv")
        table = np.genfromtxt(tmp_path / "report.csv", delimiter=",", names=True, dtype=None, encoding=None)
        reported = {row["method"]: row["path_length"] for row in table}
        recomputed = {m: two_point_length(f, rep.paths_tau[m].points, 20) for m in ("lerp", "slerp", "geodesic")}
        for m in recomputed:
            assert reported[m] == pytest.approx(recomputed[m], rel=1e-10)
        assert recomputed["geodesic"] <= recomputed["slerp"]
        assert recomputed["geodesic"] <= recomputed["lerp"]

    def test_mse_bit_identical(self):
        sched = make_schedule(50)
        f = MixtureField(bimodal_2d(), sched)
        rep = compare_methods(f, sched, np.array([-1.6, 0.3]), np.array([1.3, -0.5]), 30, self.cfg)
        mses = {r.reconstruction_mse for r in rep.rows}
        assert len(mses) == 1

    def test_deterministic(self):
        sched = make_schedule(50)
        f = MixtureField(bimodal_2d(), sched)
        args = (f, sched, np.array([-1.6, 0.3]), np.array([1.3, -0.5]), 10, self.cfg)
        r1, r2 = compare_methods(*args), compare_methods(*args)
        for a, b in zip(r1.rows, r2.rows):
            assert (a.path_length, a.min_log_density) == (b.path_length, b.min_log_density)

    def test_non_finite_profile_raises(self):
        sched = make_schedule(50)
        f = MixtureField(bimodal_2d(), sched)
        with pytest.raises(NumericalError):
            compare_methods(
                f, sched, np.zeros(2), np.ones(2), 10, self.cfg, log_density=lambda x: np.full(len(x), np.nan), methods=("lerp",)
            )

    def test_report_csv_layout(self, tmp_path):
        sched = make_schedule(50)
        f = MixtureField(bimodal_2d(), sched)
        rep = compare_methods(f, sched, np.zeros(2), np.ones(2), 10, self.cfg, methods=("lerp", "slerp"))
        rep.to_csv(tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0].split(",") == list(rep.COLUMNS)
        assert [ln.split(",")[0] for ln in lines[1:]] == ["lerp", "slerp"]


class TestFlowLogDensity:
    def test_matches_closed_form_and_improves_with_T(self):
        mix = MixtureDensity(np.array([0.5, 0.5]), np.array([[-1.0, 0.0], [1.0, 0.5]]), np.array([np.eye(2) * 0.3, np.eye(2) * 0.5]))
        x = np.array([[-1.0, 0.1], [0.0, 0.3], [1.2, 0.4]])
        exact = np.asarray(MixtureField(mix).log_density(x, 0))
        errs = []
        for T in (100, 1000):
            sched = make_schedule(T, 1e-4 * 1000 / T, 0.02 * 1000 / T)
            errs.append(np.max(np.abs(flow_log_density(MixtureField(mix, sched), sched, x) - exact)))
        assert errs[1] < errs[0]
        assert errs[1] < 0.05

    def test_gaussian_is_nearly_exact(self):
        sched = make_schedule(200, 1e-4 * 5, 0.02 * 5)
        f = gaussian([0.3, -0.2], [[0.5, 0.1], [0.1, 0.8]], sched)
        x = np.array([[0.0, 0.0], [1.0, -1.0]])
        np.testing.assert_allclose(flow_log_density(f, sched, x), np.asarray(f.log_density(x, 0)), atol=0.02)

    def test_model_log_density_prefers_closed_form(self):
        sched = make_schedule(50)
        f = MixtureField(bimodal_2d(), sched)
        x = np.array([[0.0, 0.0]])
        np.testing.assert_array_equal(model_log_density(f, sched, x), np.asarray(f.log_density(x, 0)))

    def test_model_log_density_uses_flow_without_closed_form(self):
        sched = make_schedule(20)
        f = LinearField(-np.eye(2))
        x = np.array([[0.5, 0.5]])
        np.testing.assert_array_equal(model_log_density(f, sched, x), flow_log_density(f, sched, x))


class TestScenarios:
    def test_catalogue(self):
        assert set(SCENARIOS) == {"gap", "tilted", "diffused"}
        for sc in SCENARIOS.values():
            assert sc.mixture.dim == 2
            assert np.shape(sc.x_a) == np.shape(sc.x_b) == (2,)

    def test_small_custom_scenario_brackets(self):
        mix = MixtureDensity(np.array([1.0]), np.zeros((1, 2)), np.eye(2)[None])
        sc = Scenario("flat", mix, np.array([-1.0, 0.0]), np.array([1.0, 0.0]))
        res = run_oracle(sc, GeodesicConfig(N=8, iters=500), resolution=33, margin=1.0)
        assert res.geodesic_length == pytest.approx(2.0, abs=1e-6)
        assert res.dijkstra_length == pytest.approx(2.0, abs=1e-9)
        assert res.lerp_excess == pytest.approx(0.0, abs=1e-6)
