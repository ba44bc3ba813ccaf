import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ntndiff.denoiser import GmmDenoiser, GmmModel
from ntndiff.diffusion import (
    NULL_PROMPT,
    PromptSpec,
    ddim_invert,
    ddim_step,
    ddpm_posterior,
    ddpm_step,
    diffuse_at,
    forward_diffuse,
    make_schedule,
    predict_x0,
    sample,
)
from ntndiff.errors import InvalidConfigError, InvalidPromptError, InvalidShapeError, InvalidStepError


@pytest.fixture(scope="module")
def sched():
    return make_schedule(100, 1e-4, 2e-2)


class TestSchedule:
    def test_endpoints(self, sched):
        assert sched.betas[1] == 1e-4 and sched.betas[100] == 2e-2
        assert sched.beta(1) == 1e-4 and sched.beta(100) == 2e-2
        assert sched.alpha_bar[0] == 1.0

    def test_single_step(self):
        s = make_schedule(1, 0.5, 0.5)
        assert s.alpha_bar[1] == 0.5

    def test_monotone_and_bounded(self, sched):
        ab = sched.alpha_bar
        assert (np.diff(ab) < 0).all() and 0 < ab[-1] < 1
        np.testing.assert_allclose(np.sqrt(ab) ** 2 + np.sqrt(1 - ab) ** 2, 1.0, rtol=0, atol=1e-15)

    def test_cumulative_product(self, sched):
        expected = 1.0
        for t in range(1, 101):
            expected *= 1 - sched.betas[t]
            assert sched.alpha_bar[t] == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("args", [(0, 1e-4, 2e-2), (10, 0, 0.1), (10, 0.2, 0.1), (10, 0.1, 1.0), (2.5, 0.1, 0.2)])
    def test_invalid(self, args):
        with pytest.raises(InvalidConfigError):
            make_schedule(*args)

    def test_beta_index_range(self, sched):
        with pytest.raises(InvalidStepError):
            sched.beta(0)


class TestForward:
    def test_t0_passthrough(self, sched, rng):
        z0, eps = rng.standard_normal((2, 2, 4, 4))
        assert np.array_equal(forward_diffuse(z0, 0, eps, sched), z0)

    def test_scalar_cell(self):
        assert diffuse_at(np.array([2.0]), np.array([2.0]), 0.25)[0] == pytest.approx(2.7320508, abs=1e-7)
        assert diffuse_at(np.array([5.0]), np.array([1.0]), 0.0)[0] == 1.0

    @given(st.floats(-100, 100), st.integers(0, 100))
    def test_linearity(self, a, t):
        sched = make_schedule(100)
        rng = np.random.default_rng(t)
        z0, eps = rng.standard_normal((2, 3, 3))
        lhs = forward_diffuse(a * z0, t, a * eps, sched)
        np.testing.assert_allclose(lhs, a * forward_diffuse(z0, t, eps, sched), rtol=1e-12, atol=1e-12)

    def test_errors(self, sched):
        with pytest.raises(InvalidShapeError):
            forward_diffuse(np.zeros((2, 2)), 3, np.zeros((2, 3)), sched)
        with pytest.raises(InvalidStepError):
            forward_diffuse(np.zeros(2), 101, np.zeros(2), sched)


class TestReverseSteps:
    def test_exact_noise_inverts(self, sched, rng):
        z0, eps = rng.standard_normal((2, 2, 5, 5))
        for t in (1, 37, 100):
            z_t = forward_diffuse(z0, t, eps, sched)
            np.testing.assert_allclose(predict_x0(z_t, t, eps, sched), z0, atol=1e-9)
            np.testing.assert_allclose(ddim_step(z_t, t, eps, sched), forward_diffuse(z0, t - 1, eps, sched), atol=1e-9)

    def test_step_one_returns_x0(self, sched, rng):
        z, eps = rng.standard_normal((2, 3, 3))
        np.testing.assert_allclose(ddim_step(z, 1, eps, sched), predict_x0(z, 1, eps, sched), atol=1e-15)

    def test_step_zero_rejected(self, sched):
        with pytest.raises(InvalidStepError):
            ddim_step(np.zeros(3), 0, np.zeros(3), sched)
        with pytest.raises(InvalidStepError):
            ddpm_step(np.zeros(3), 0, np.zeros(3), sched, np.zeros(3))

    def test_single_point_recovered(self, sched, rng):
        mu = rng.standard_normal((2, 4, 4))
        den = GmmDenoiser(GmmModel(mu[None], 0.0, [1.0]), sched)
        out = sample(rng.standard_normal(mu.shape), sched, den)[-1]
        assert np.max(np.abs(out - mu)) <= 1e-6

    def test_ddim_deterministic(self, sched, rng):
        z, eps = rng.standard_normal((2, 2, 3, 3))
        assert ddim_step(z, 50, eps, sched).tobytes() == ddim_step(z.copy(), 50, eps.copy(), sched).tobytes()


class TestDdpm:
    def test_t1_deterministic(self, sched, rng):
        z, eps, n1, n2 = rng.standard_normal((4, 3, 3))
        assert np.array_equal(ddpm_step(z, 1, eps, sched, n1), ddpm_step(z, 1, eps, sched, n2))

    def test_zero_noise_is_mean(self, sched, rng):
        z, eps = rng.standard_normal((2, 3, 3))
        mean, _ = ddpm_posterior(z, 40, eps, sched)
        np.testing.assert_array_equal(ddpm_step(z, 40, eps, sched, np.zeros_like(z)), mean)

    def test_moments_match_gaussian_conditioning(self, sched):
        # q(z_{t-1} | z_t, z0) from conditioning the joint Gaussian of (z_{t-1}, z_t) given z0
        t, x0, z_t = 30, 0.7, -0.4
        ab, ab_prev = sched.alpha_bar[t], sched.alpha_bar[t - 1]
        a_t = ab / ab_prev
        cov = np.sqrt(a_t) * (1 - ab_prev)
        var_t = 1 - ab
        exp_mean = np.sqrt(ab_prev) * x0 + cov / var_t * (z_t - np.sqrt(ab) * x0)
        exp_var = (1 - ab_prev) - cov ** 2 / var_t
        eps_hat = (z_t - np.sqrt(ab) * x0) / np.sqrt(1 - ab)
        n = 100_000
        draws = ddpm_step(np.full(n, z_t), t, np.full(n, eps_hat), sched,
                          np.random.default_rng(0).standard_normal(n))
        assert draws.mean() == pytest.approx(exp_mean, rel=0.02)
        assert draws.std() == pytest.approx(np.sqrt(exp_var), rel=0.02)


class TestInversion:
    def test_fixed_point(self, sched, rng):
        mu = rng.standard_normal((2, 4, 4))
        den = GmmDenoiser(GmmModel(mu[None], 0.0, [1.0]), sched)
        traj = ddim_invert(mu, sched, den)
        assert len(traj) == 101 and np.array_equal(traj[0], mu)
        for t, z in enumerate(traj):
            np.testing.assert_allclose(z, np.sqrt(sched.alpha_bar[t]) * mu, atol=1e-9)

    def test_round_trip_single_point(self, sched, rng):
        mu = rng.standard_normal((2, 4, 4))
        den = GmmDenoiser(GmmModel(mu[None], 0.0, [1.0]), sched)
        traj = ddim_invert(mu, sched, den)
        back = sample(traj[-1], sched, den)[-1]
        assert np.max(np.abs(back - mu)) <= 1e-5

    def test_round_trip_mixture_is_close(self, sched, rng):
        means = rng.standard_normal((3, 1, 4, 4))
        den = GmmDenoiser(GmmModel(means, 0.5, [0.2, 0.3, 0.5]), sched)
        z0 = means[1] + 0.5 * rng.standard_normal((1, 4, 4))
        traj = ddim_invert(z0, sched, den)
        back = sample(traj[-1], sched, den)[-1]
        # first-order integrator: not exact off the single-point testbed
        assert np.max(np.abs(back - z0)) < 0.05

    def test_zero_steps(self, rng):
        class S:
            T = 0
        z0 = rng.standard_normal((1, 2, 2))
        traj = ddim_invert(z0, S, None)
        assert len(traj) == 1 and np.array_equal(traj[0], z0)


class TestPrompt:
    def test_validation(self):
        with pytest.raises(InvalidPromptError):
            PromptSpec("text")
        with pytest.raises(InvalidPromptError):
            PromptSpec("null", (1,))
        with pytest.raises(InvalidPromptError):
            PromptSpec("other")
        with pytest.raises(InvalidPromptError):
            PromptSpec.text([0, 1], [1.0])
        assert NULL_PROMPT.is_null and not PromptSpec.text([0]).is_null
