"""Noise schedule and the deterministic sampler maps."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvmotion.diffusion import (
    NoiseSchedule,
    ToyDenoiser,
    add_noise,
    ddim_invert,
    ddim_step,
    ddim_timesteps,
    linear_schedule,
    predict_x0,
)
from mvmotion.errors import InvalidConfig, ValidationError


class ZeroDenoiser:
    def predict_noise(self, x, t, cond=None, cfg_scale=1.0):
        return np.zeros_like(x)


class TestNoiseSchedule:
    def test_linear_starts_at_exactly_one(self):
        sched = linear_schedule()
        assert sched.alpha_bar(0) == 1.0
        assert sched.T == 1000

    def test_strictly_decreasing(self):
        ab = linear_schedule().alphas_bar
        assert (np.diff(ab) < 0).all()

    def test_short_schedule(self):
        assert linear_schedule(T=10).T == 10
        with pytest.raises(InvalidConfig):
            linear_schedule(T=0)

    def test_rejects_increasing(self):
        with pytest.raises(ValidationError):
            NoiseSchedule(alphas_bar=np.array([1.0, 0.5, 0.6]))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValidationError):
            NoiseSchedule(alphas_bar=np.array([1.0, 1.5]))
        with pytest.raises(ValidationError):
            NoiseSchedule(alphas_bar=np.array([1.0, 0.5, 0.0]))

    def test_rejects_low_start(self):
        with pytest.raises(ValidationError):
            NoiseSchedule(alphas_bar=np.array([0.5, 0.4]))

    def test_alpha_bar_bounds(self):
        sched = linear_schedule(T=10)
        with pytest.raises(IndexError):
            sched.alpha_bar(10)
        with pytest.raises(IndexError):
            sched.alpha_bar(-11)


class TestTimesteps:
    def test_endpoints_and_length(self):
        ts = ddim_timesteps(1000, 20)
        assert len(ts) == 21
        assert ts[0] == 0 and ts[-1] == 999
        assert (np.diff(ts) > 0).all()

    def test_single_step(self):
        np.testing.assert_array_equal(ddim_timesteps(1000, 1), [0, 999])

    def test_bounds(self):
        with pytest.raises(InvalidConfig):
            ddim_timesteps(1000, 0)
        with pytest.raises(InvalidConfig):
            ddim_timesteps(1000, 1000)

    @given(st.integers(2, 400), st.integers(1, 50))
    def test_always_valid_subsequence(self, T, num_steps):
        if num_steps > T - 1:
            num_steps = T - 1
        ts = ddim_timesteps(T, num_steps)
        assert ts[0] == 0 and ts[-1] == T - 1
        assert (np.diff(ts) > 0).all()


class TestAddNoise:
    def test_hand_case(self):
        # alpha_bar = 0.25, x0 = 1, eps = 1: 0.5 + sqrt(0.75).
        sched = NoiseSchedule(alphas_bar=np.array([1.0, 0.25]))
        out = add_noise(np.ones((2, 2)), 1, np.ones((2, 2)), sched)
        np.testing.assert_allclose(out, 0.5 + np.sqrt(0.75))

    def test_t_zero_is_identity(self):
        sched = linear_schedule()
        x0 = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(add_noise(x0, 0, np.ones((2, 3)), sched), x0)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            add_noise(np.zeros((2, 2)), 0, np.zeros((3, 3)), linear_schedule())


class TestPredictX0:
    @given(st.integers(0, 999), st.integers(0, 50))
    def test_inverts_add_noise(self, t, seed):
        sched = linear_schedule()
        rng = np.random.default_rng(seed)
        x0 = rng.normal(size=(3, 4))
        eps = rng.normal(size=(3, 4))
        x_t = add_noise(x0, t, eps, sched)
        np.testing.assert_allclose(predict_x0(x_t, eps, t, sched), x0, atol=1e-9)


class TestDdimStep:
    def test_zero_eps_rescales(self):
        sched = linear_schedule()
        x_t = np.full((2, 2), 3.0)
        t, t_prev = 500, 250
        out = ddim_step(x_t, np.zeros((2, 2)), t, t_prev, sched)
        factor = np.sqrt(sched.alpha_bar(t_prev) / sched.alpha_bar(t))
        np.testing.assert_allclose(out, 3.0 * factor)

    def test_requires_decreasing_time(self):
        sched = linear_schedule()
        with pytest.raises(ValidationError):
            ddim_step(np.zeros((2, 2)), np.zeros((2, 2)), 100, 100, sched)
        with pytest.raises(ValidationError):
            ddim_step(np.zeros((2, 2)), np.zeros((2, 2)), 100, 200, sched)

    def test_negative_sigma(self):
        with pytest.raises(InvalidConfig):
            ddim_step(np.zeros((2, 2)), np.zeros((2, 2)), 100, 50, linear_schedule(), sigma=-0.1)

    def test_sigma_exceeding_variance(self):
        with pytest.raises(InvalidConfig):
            ddim_step(np.zeros((2, 2)), np.zeros((2, 2)), 100, 50, linear_schedule(), sigma=10.0)

    def test_stochastic_step_needs_noise(self):
        with pytest.raises(ValidationError):
            ddim_step(np.zeros((2, 2)), np.zeros((2, 2)), 100, 50, linear_schedule(), sigma=0.01)

    def test_stochastic_step_with_noise(self):
        sched = linear_schedule()
        rng = np.random.default_rng(0)
        out = ddim_step(
            np.zeros((2, 2)), np.zeros((2, 2)), 100, 50, sched, sigma=0.01, noise=rng.normal(size=(2, 2))
        )
        assert np.abs(out).max() > 0


class TestDdimInvert:
    def test_single_step_trajectory_length(self):
        sched = linear_schedule()
        traj = ddim_invert(np.ones((1, 2, 2)), ZeroDenoiser(), sched, num_steps=1)
        assert len(traj) == 2

    def test_entry_zero_is_input(self):
        sched = linear_schedule()
        x0 = np.arange(4.0).reshape(1, 2, 2)
        traj = ddim_invert(x0, ZeroDenoiser(), sched, num_steps=5)
        np.testing.assert_array_equal(traj[0], x0)

    def test_zero_denoiser_scales_by_sqrt_alpha_bar(self):
        sched = linear_schedule()
        x0 = np.full((1, 2, 2), 2.0)
        ts = ddim_timesteps(sched.T, 8)
        traj = ddim_invert(x0, ZeroDenoiser(), sched, num_steps=8)
        for k, t in enumerate(ts):
            np.testing.assert_allclose(traj[k], 2.0 * np.sqrt(sched.alpha_bar(int(t))), atol=1e-12)

    def test_rejects_stochastic(self):
        with pytest.raises(InvalidConfig):
            ddim_invert(np.zeros((1, 2, 2)), ZeroDenoiser(), linear_schedule(), num_steps=2, sigma=0.1)

    def test_needs_subset(self):
        with pytest.raises(InvalidConfig):
            ddim_invert(np.zeros((1, 2, 2)), ZeroDenoiser(), linear_schedule())

    def test_round_trip_with_toy_denoiser(self):
        # Invert then replay the deterministic sampler forward; the replay
        # must land back on the starting latent.
        sched = linear_schedule()
        rng = np.random.default_rng(1)
        x0 = rng.normal(size=(2, 4, 8, 8))
        denoiser = ToyDenoiser()
        steps = 100
        traj = ddim_invert(x0, denoiser, sched, num_steps=steps)
        ts = ddim_timesteps(sched.T, steps)
        x = traj[-1]
        for k in range(steps, 0, -1):
            t, t_prev = int(ts[k]), int(ts[k - 1])
            eps = denoiser.predict_noise(x, t)
            x = ddim_step(x, eps, t, t_prev, sched)
        err = np.abs(x - x0).max()
        assert err <= 1e-3
