import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scoregeo import (
    ReverseStepParams,
    Schedule,
    ddim_generate,
    ddim_invert,
    ddim_reverse_step,
    ddpm_reverse_step,
    forward_marginal,
    make_schedule,
)
from scoregeo.diffusion import forward_step

from conftest import ZeroField, gaussian


def _two_step(ab_prev, ab_t):
    """A T=2 schedule whose step-2 cumulative products are ``ab_prev`` and ``ab_t``."""
    abar = np.array([ab_prev, ab_t])
    betas = np.array([1 - ab_prev, 1 - ab_t / ab_prev])
    return Schedule(2, betas, abar)


class TestSchedule:
    def test_constant_beta(self):
        s = make_schedule(2, 0.5, 0.5)
        np.testing.assert_allclose(s.alphas_bar, [0.5, 0.25])

    def test_default_ramp(self):
        s = make_schedule(50, 1e-4, 0.02)
        assert np.all(np.diff(s.alphas_bar) < 0)
        assert 0.0 < s.alphas_bar[-1] < 1.0
        expected = np.cumprod(1.0 - np.linspace(1e-4, 0.02, 50))
        np.testing.assert_array_equal(s.alphas_bar, expected)

    def test_recurrence(self):
        s = make_schedule(1000)
        rel = s.alphas_bar[1:] / (s.alphas_bar[:-1] * (1.0 - s.betas[1:])) - 1.0
        assert np.max(np.abs(rel)) < 1e-12

    def test_alpha_bar_zero_is_one(self, sched50):
        assert sched50.alpha_bar(0) == 1.0
        assert sched50.alpha_bar(1) == pytest.approx(1 - 1e-4)

    @pytest.mark.parametrize(
        "args",
        [(1, 1e-4, 0.02), (0, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.1, 0.05), (10, 1e-4, 1.0), (10, float("nan"), 0.02), (10, 1e-4, float("inf"))],
    )
    def test_rejects_bad_arguments(self, args):
        with pytest.raises(ValueError):
            make_schedule(*args)

    def test_arrays_read_only(self, sched50):
        with pytest.raises(ValueError):
            sched50.alphas_bar[0] = 0.3

    def test_config_round_trip(self):
        s = make_schedule(120, 2e-4, 0.03)
        again = Schedule.from_config(s.to_config())
        np.testing.assert_array_equal(again.alphas_bar, s.alphas_bar)

    def test_time_range(self, sched50):
        with pytest.raises(ValueError):
            sched50.alpha_bar(51)
        with pytest.raises(ValueError):
            sched50.beta(0)


class TestForward:
    def test_zero_noise_scales(self):
        s = _two_step(0.5, 0.25)
        x0 = np.array([1.0, -2.0])
        np.testing.assert_allclose(forward_marginal(x0, 2, np.zeros(2), s), 0.5 * x0)

    def test_pure_noise(self):
        s = _two_step(0.5, 0.19)
        out = forward_marginal(np.zeros(3), 2, np.array([1.0, 0, 0]), s)
        np.testing.assert_allclose(out, [0.9, 0, 0])

    def test_matches_recomputation(self, sched50, rng):
        x0, eps = rng.standard_normal((2, 5))
        ab = float(np.prod(1 - sched50.betas[:17]))
        np.testing.assert_allclose(forward_marginal(x0, 17, eps, sched50), math.sqrt(ab) * x0 + math.sqrt(1 - ab) * eps, rtol=1e-13)

    def test_dimension_mismatch(self, sched50):
        with pytest.raises(ValueError):
            forward_marginal(np.zeros(3), 1, np.zeros(2), sched50)

    def test_markov_chain_matches_marginal_in_distribution(self, sched50, rng):
        n, t = 10_000, 30
        x = np.full((n, 1), 2.0)
        for k in range(1, t + 1):
            x = forward_step(x, k, rng.standard_normal((n, 1)), sched50)
        ab = sched50.alpha_bar(t)
        mean, var = math.sqrt(ab) * 2.0, 1.0 - ab
        assert abs(x.mean() - mean) < 3 * math.sqrt(var / n)
        # Var of the sample variance for a Gaussian is 2 var^2 / (n - 1).
        assert abs(x.var(ddof=1) - var) < 3 * var * math.sqrt(2 / (n - 1))


class TestReverseSteps:
    def test_ddpm_zero_prediction(self, sched50):
        x = np.array([0.3, -1.0])
        out = ddpm_reverse_step(x, 10, np.zeros(2), np.zeros(2), sched50)
        np.testing.assert_allclose(out, x / math.sqrt(1 - sched50.beta(10)))

    def test_ddpm_scalar(self):
        s = _two_step(0.81 / 0.81 * 0.9, 0.81)  # beta_2 = 1 - 0.81 / 0.9
        beta, ab = s.beta(2), s.alpha_bar(2)
        out = ddpm_reverse_step(np.array([1.0]), 2, np.array([1.0]), np.array([0.0]), s)
        assert out[0] == pytest.approx((1 - beta / math.sqrt(1 - ab)) / math.sqrt(1 - beta), rel=1e-14)

    def test_ddpm_scalar_reference_numbers(self):
        # beta_t = 0.19 with abar_t = 0.81 needs abar_{t-1} = 1, i.e. t = 1.
        s = Schedule(2, np.array([0.19, 0.5]), np.array([0.81, 0.405]))
        out = ddpm_reverse_step(np.array([1.0]), 1, np.array([1.0]), np.array([0.0]), s)
        assert out[0] == pytest.approx((1 - 0.19 / 0.4358898943540674) / 0.9, rel=1e-14)

    def test_ddpm_noise_is_additive(self, sched50, rng):
        x, e, z = rng.standard_normal((3, 4))
        with_z = ddpm_reverse_step(x, 7, e, z, sched50)
        without = ddpm_reverse_step(x, 7, e, np.zeros(4), sched50)
        np.testing.assert_allclose(with_z - without, math.sqrt(sched50.beta(7)) * z, atol=1e-15)

    def test_ddpm_rejects_t0(self, sched50):
        with pytest.raises(ValueError):
            ddpm_reverse_step(np.zeros(1), 0, np.zeros(1), np.zeros(1), sched50)

    def test_ddim_eta0_pure_rescale(self, sched50):
        x = np.array([1.5, -0.5])
        out = ddim_reverse_step(x, 9, np.zeros(2), ReverseStepParams(0.0), np.ones(2), sched50)
        np.testing.assert_allclose(out, math.sqrt(sched50.alpha_bar(8) / sched50.alpha_bar(9)) * x)

    def test_ddim_scalar_oracle(self):
        s = _two_step(0.5, 0.25)
        a, b = s.ddim_coefficients(2)
        assert a == pytest.approx(math.sqrt(2))
        assert b == pytest.approx(-math.sqrt(0.5 * 0.75 / 0.25) + math.sqrt(0.5))
        out = ddim_reverse_step(np.array([1.0]), 2, np.array([1.0]), ReverseStepParams(), np.zeros(1), s)
        assert out[0] == pytest.approx(math.sqrt(2) - math.sqrt(1.5) + math.sqrt(0.5), rel=1e-14)

    def test_eta0_has_zero_sigma(self, sched50):
        assert all(ReverseStepParams(0.0).sigma(t, sched50) == 0.0 for t in range(1, 51))

    def test_eta1_is_ddpm_posterior_variance(self, sched50):
        for t in range(2, 51):
            ab, ab_prev = sched50.alpha_bar(t), sched50.alpha_bar(t - 1)
            posterior = (1 - ab_prev) / (1 - ab) * sched50.beta(t)
            assert ReverseStepParams(1.0).sigma(t, sched50) ** 2 == pytest.approx(posterior, rel=1e-12)

    def test_eta_range(self):
        with pytest.raises(ValueError):
            ReverseStepParams(1.5)

    def test_ddim_rejects_t0(self, sched50):
        with pytest.raises(ValueError):
            ddim_reverse_step(np.zeros(1), 0, np.zeros(1), ReverseStepParams(), np.zeros(1), sched50)

    def test_stochastic_branch_matches_deterministic_as_eta_vanishes(self, sched50, rng):
        x, e, z = rng.standard_normal((3, 3))
        det = ddim_reverse_step(x, 20, e, ReverseStepParams(0.0), z, sched50)
        tiny = ddim_reverse_step(x, 20, e, ReverseStepParams(1e-9), z, sched50)
        np.testing.assert_allclose(tiny, det, atol=1e-8)


class TestInversion:
    def test_zero_field_invert_scales_up(self, sched50):
        # Each inversion step divides by a_t = sqrt(abar_{t-1} / abar_t); the
        # product telescopes to sqrt(abar_tau).
        x0 = np.array([1.0, -3.0, 0.5])
        out = ddim_invert(x0, 20, ZeroField(3, sched50), sched50)
        np.testing.assert_allclose(out, math.sqrt(sched50.alpha_bar(20)) * x0, rtol=1e-13)

    def test_zero_field_generate_scales_down(self, sched50):
        x = np.array([1.0, -3.0, 0.5])
        out = ddim_generate(x, 20, ZeroField(3, sched50), sched50)
        np.testing.assert_allclose(out, x / math.sqrt(sched50.alpha_bar(20)), rtol=1e-13)

    @pytest.mark.parametrize("tau", [0, 51])
    def test_tau_range(self, sched50, tau):
        f = ZeroField(1, sched50)
        with pytest.raises(ValueError):
            ddim_invert(np.zeros(1), tau, f, sched50)
        with pytest.raises(ValueError):
            ddim_generate(np.zeros(1), tau, f, sched50)

    def test_round_trip_error_shrinks_with_T(self):
        # Scaling the beta bounds by 1000 / T keeps the continuous-time process
        # fixed, so larger T is a finer discretization of the same chain and
        # tau = 0.4 T is the same noise level.
        x0 = np.array([1.7])
        errs = []
        for T in (50, 200, 1000):
            s = make_schedule(T, 1e-4 * 1000 / T, 0.02 * 1000 / T)
            f = gaussian([0.5], [[0.4]], s)
            rec = ddim_generate(ddim_invert(x0, int(0.4 * T), f, s), int(0.4 * T), f, s)
            errs.append(abs(rec[0] - x0[0]))
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] < 1e-2

    def test_batched_equals_rowwise(self, sched50, rng):
        f = gaussian([0.0, 1.0], np.diag([0.5, 2.0]), sched50)
        x = rng.standard_normal((4, 2))
        batch = ddim_invert(x, 25, f, sched50)
        rows = np.stack([ddim_invert(r, 25, f, sched50) for r in x])
        np.testing.assert_allclose(batch, rows, rtol=1e-13)

    def test_deterministic(self, sched50, rng):
        f = gaussian([0.0, 1.0], np.diag([0.5, 2.0]), sched50)
        x = rng.standard_normal(2)
        assert np.array_equal(ddim_invert(x, 30, f, sched50), ddim_invert(x, 30, f, sched50))

    def test_reverse_chain_lands_near_the_gaussian(self, sched1000, rng):
        mu, var = np.array([2.0, -1.0]), 0.25
        f = gaussian(mu, var * np.eye(2), sched1000)
        x0 = rng.standard_normal(2) * 3
        x = math.sqrt(sched1000.alpha_bar(1000)) * x0
        for t in range(1000, 0, -1):
            x = ddim_reverse_step(x, t, np.asarray(f.eps(x, t)), ReverseStepParams(), np.zeros(2), sched1000)
        assert np.all(np.isfinite(x))
        assert np.linalg.norm(x - mu) < 10 * math.sqrt(var)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=4), st.integers(1, 50))
def test_generate_inverts_invert_for_zero_field(coords, tau):
    s = make_schedule(50)
    x0 = np.array(coords)
    f = ZeroField(len(coords), s)
    np.testing.assert_allclose(ddim_generate(ddim_invert(x0, tau, f, s), tau, f, s), x0, atol=1e-12)
