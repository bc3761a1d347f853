import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from detection.analytic_core import closed_form_estimate, equilibrium, mse_ode, mse_tode_curve
from detection.channel_model import ChannelInstance, gen_iid_channel
from detection.detection_config import EulerConfig, SystemConfig
from detection.errors import ConfigError, DivergenceError
from detection.ode_simulator import (draw_trials, euler_trajectory, map_trial_chunks, monte_carlo_mse, mse_euler)
from detection.regularizer import ConstantRegularizer, InverseDecayRegularizer
from utils.metrics import within_band


class TestEulerTrajectory:

    def test_scalar_matches_closed_form(self, scalar_channel):
        y = np.array([0.7 - 0.2j])
        config = EulerConfig(delta=1e-4, t_max=1.0, record_stride=1000)
        trajectory = euler_trajectory(scalar_channel, y, ConstantRegularizer(1.0), config)
        assert_allclose(trajectory.times, np.arange(11) * 0.1, atol=1e-12)
        for t, x in zip(trajectory.times, trajectory.states):
            expected = closed_form_estimate(scalar_channel, y, 1.0, t)
            assert np.linalg.norm(x - expected) <= 1e-3 * np.linalg.norm(expected)

    def test_equilibrium_is_fixed_point(self, channel_8x8, received_8x8):
        x_star = equilibrium(channel_8x8, received_8x8.y, 0.5)
        config = EulerConfig(delta=0.01, t_max=1.0, record_stride=10)
        trajectory = euler_trajectory(channel_8x8, received_8x8.y, ConstantRegularizer(0.5), config, x0=x_star)
        for x in trajectory.states:
            assert np.linalg.norm(x - x_star) <= 1e-12 * np.linalg.norm(x_star)

    def test_first_order_convergence(self, rng):
        channel = gen_iid_channel(8, 8, per_element_variance=1 / 8, seed=7)
        y = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        deviations = []
        for delta in (1e-3, 5e-4):
            config = EulerConfig(delta=delta, t_max=1.0, record_stride=int(round(0.1 / delta)))
            trajectory = euler_trajectory(channel, y, ConstantRegularizer(0.5), config)
            assert trajectory.times[-1] == pytest.approx(1.0)
            deviations.append(max(np.linalg.norm(x - closed_form_estimate(channel, y, 0.5, t))
                                  for t, x in zip(trajectory.times, trajectory.states)))
        assert 1.5 <= deviations[0] / deviations[1] <= 2.5

    def test_divergence_detected(self):
        channel = ChannelInstance.from_matrix(np.diag([10.0, 0.1]))
        config = EulerConfig(delta=0.05, t_max=3.0)
        with pytest.raises(DivergenceError):
            euler_trajectory(channel, np.ones(2, dtype=complex), ConstantRegularizer(0.5), config)

    def test_batched_columns_match_single_runs(self, channel_8x8, rng):
        Y = rng.standard_normal((8, 3)) + 1j * rng.standard_normal((8, 3))
        config = EulerConfig(delta=0.005, t_max=0.5, record_stride=10)
        regularizer = InverseDecayRegularizer(500.0, 1.0)
        batched = euler_trajectory(channel_8x8, Y, regularizer, config)
        assert batched.states.shape == (11, 8, 3)
        for b in range(3):
            single = euler_trajectory(channel_8x8, Y[:, b], regularizer, config)
            assert_allclose(batched.states[:, :, b], single.states, rtol=1e-10, atol=1e-12)


class TestEtaSampling:

    def test_constant_eta_ignores_sampling(self, channel_8x8, received_8x8):
        runs = [euler_trajectory(channel_8x8, received_8x8.y, ConstantRegularizer(0.5),
                                 EulerConfig(delta=0.005, t_max=0.2, eta_sampling=mode))
                for mode in ('average', 'left')]
        assert_array_equal(runs[0].states, runs[1].states)

    def test_left_endpoint_blows_up_first_step(self, channel_8x8, received_8x8):
        # η(0) = 1/ε + σ² ≈ 1e8
        regularizer = InverseDecayRegularizer(500.0, 1.0)
        left = euler_trajectory(channel_8x8, received_8x8.y, regularizer,
                                EulerConfig(delta=0.005, t_max=0.05, eta_sampling='left'))
        average = euler_trajectory(channel_8x8, received_8x8.y, regularizer,
                                   EulerConfig(delta=0.005, t_max=0.05, eta_sampling='average'))
        x0_norm = np.linalg.norm(left.states[0])
        assert np.linalg.norm(left.states[1]) > 1e5 * x0_norm
        assert np.linalg.norm(average.states[1]) < 10 * x0_norm


class TestEulerConfig:

    def test_steps(self):
        assert EulerConfig(delta=0.005, t_max=3.0).n_steps == 600

    @pytest.mark.parametrize('kwargs', [
        {'delta': 0.0},
        {'t_max': -1.0},
        {'record_stride': 0},
        {'eta_sampling': 'midpoint'},
        {'delta': 1e-9, 't_max': 3.0}
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            EulerConfig(**kwargs)


class TestMseEuler:

    def test_tends_to_ode_as_step_shrinks(self, smooth_channel):
        regularizer = ConstantRegularizer(0.5)
        coarse = mse_euler(smooth_channel, regularizer, 1.0, EulerConfig(delta=0.02, t_max=1.0, record_stride=5))
        fine = mse_euler(smooth_channel, regularizer, 1.0, EulerConfig(delta=0.01, t_max=1.0, record_stride=10))
        exact = mse_ode(smooth_channel, 0.5, 1.0, fine.times)
        assert_allclose(coarse.times, fine.times)
        assert coarse.values[0] == fine.values[0] == pytest.approx(exact[0])
        assert np.max(np.abs(fine.values - exact)) < np.max(np.abs(coarse.values - exact))


class TestMonteCarloMse:

    def _setup(self, channel, modulation='QPSK'):
        system = SystemConfig(n=channel.n, m=channel.m, sigma2=1.0, modulation=modulation)
        config = EulerConfig(delta=0.005, t_max=0.5, record_stride=10)
        return system, config

    def test_single_trial(self, channel_8x8):
        system, config = self._setup(channel_8x8)
        regularizer = ConstantRegularizer(0.5)
        curve = monte_carlo_mse(channel_8x8, regularizer, system, config, trials=1, seed=5)
        S, Y = draw_trials(channel_8x8, system, 5, range(1))
        trajectory = euler_trajectory(channel_8x8, Y, regularizer, config)
        expected = np.sum(np.abs(trajectory.states - S) ** 2, axis=1)[:, 0]
        assert_allclose(curve.values, expected)
        assert_array_equal(curve.stderr, 0.0)
        assert curve.trials == 1

    def test_independent_of_thread_count(self, channel_8x8):
        system, config = self._setup(channel_8x8)
        regularizer = ConstantRegularizer(0.5)
        serial = monte_carlo_mse(channel_8x8, regularizer, system, config, trials=150, seed=3, threads=1)
        parallel = monte_carlo_mse(channel_8x8, regularizer, system, config, trials=150, seed=3, threads=4)
        assert_array_equal(serial.values, parallel.values)
        assert_array_equal(serial.stderr, parallel.stderr)

    def test_rejects_mismatched_system(self, channel_8x8):
        system = SystemConfig(n=4, m=8, sigma2=1.0)
        with pytest.raises(ConfigError):
            monte_carlo_mse(channel_8x8, ConstantRegularizer(0.5), system, EulerConfig(), trials=10, seed=0)

    def test_chunk_order(self):
        chunks = map_trial_chunks(lambda r: (r.start, r.stop), trials=200, threads=3)
        assert chunks == [(0, 64), (64, 128), (128, 192), (192, 200)]
        with pytest.raises(ConfigError):
            map_trial_chunks(lambda r: r, trials=0)

    @pytest.mark.slow
    @pytest.mark.parametrize('modulation', ['QPSK', '64QAM'])
    def test_overlays_ode_theory(self, channel_8x8, modulation):
        """δ=0.005 的欧拉仿真在前段与连续理论有确定性的离散偏差

        先与离散期望 mse_euler 在 3 倍标准误内比较；与 mse_ode 比较时把两者之差作为容许带下限，
        t >= 0.5 后偏差已可忽略，按 4 倍标准误严格比较。
        """
        system = SystemConfig(n=8, m=8, sigma2=1.0, modulation=modulation)
        config = EulerConfig(delta=0.005, t_max=3.0, record_stride=10)
        regularizer = ConstantRegularizer(0.5)
        curve = monte_carlo_mse(channel_8x8, regularizer, system, config, trials=1000, seed=0, threads=2)

        lam = channel_8x8.lam
        matched_filter = np.sum(lam * (lam + 1.0)) - 2 * np.sum(lam) + 8
        assert abs(curve.values[0] - matched_filter) <= 4 * curve.stderr[0]

        discrete = mse_euler(channel_8x8, regularizer, 1.0, config).values
        theory = mse_ode(channel_8x8, 0.5, 1.0, curve.times)
        bias = np.abs(discrete - theory)
        assert np.mean(within_band(curve.values, discrete, curve.stderr)) >= 0.95
        assert np.all(within_band(curve.values, discrete, curve.stderr, width=4.0))
        assert np.all(within_band(curve.values, theory, curve.stderr, width=4.0, floor=bias))
        late = curve.times >= 0.5
        assert np.all(within_band(curve.values[late], theory[late], curve.stderr[late], width=4.0))

    @pytest.mark.slow
    def test_constellation_independent(self, channel_8x8):
        config = EulerConfig(delta=0.005, t_max=1.0, record_stride=20)
        regularizer = ConstantRegularizer(0.5)
        curves = [monte_carlo_mse(channel_8x8, regularizer, SystemConfig(8, 8, 1.0, modulation), config,
                                  trials=1000, seed=11) for modulation in ('QPSK', '64QAM')]
        combined = np.hypot(curves[0].stderr, curves[1].stderr)
        assert np.all(within_band(curves[0].values, curves[1].values, combined, width=4.0))

    @pytest.mark.slow
    def test_time_dependent_overlays_tode_theory(self, channel_8x8):
        """容许带下限取 mse_euler 与 mse_tode 之差，即 δ=0.005 时欧拉在前段的离散偏差"""
        system = SystemConfig(n=8, m=8, sigma2=1.0)
        config = EulerConfig(delta=0.005, t_max=2.0, record_stride=20)
        regularizer = InverseDecayRegularizer(500.0, 1.0)
        curve = monte_carlo_mse(channel_8x8, regularizer, system, config, trials=1000, seed=1)

        discrete = mse_euler(channel_8x8, regularizer, 1.0, config).values
        theory = mse_tode_curve(channel_8x8, regularizer, 1.0, curve.times).values
        assert np.mean(within_band(curve.values, discrete, curve.stderr)) >= 0.95
        assert np.all(within_band(curve.values, theory, curve.stderr, width=4.0,
                                  floor=np.abs(discrete - theory)))
