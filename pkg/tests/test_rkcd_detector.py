import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from detection.analytic_core import equilibrium, mmse_estimate
from detection.channel_model import constellation, gen_iid_channel, gen_symbols, observe
from detection.errors import ConfigError
from detection.rkcd_detector import (DetectionRun, chebyshev_ratio, chebyshev_T, chebyshev_T_prime,
                                     estimate_eigen_bounds, euler_detect, iterations_to_tolerance, make_rkcd_params,
                                     mmse_detect, rkcd_detect, rkcd_params_for, rkcd_stage_times, rkcd_times, ser,
                                     symbol_detect)
from utils.rng import STREAM_CHANNEL, STREAM_NOISE, STREAM_SYMBOLS, make_rng


def _relative_errors(run: DetectionRun, target: np.ndarray) -> np.ndarray:
    return np.linalg.norm(run.estimates - target, axis=1) / np.linalg.norm(target)


@pytest.fixture
def wide_channel():
    """8×12，条件数适中，阶段数 s 在十几左右"""
    return gen_iid_channel(8, 12, seed=31)


@pytest.fixture
def wide_received(wide_channel):
    s = gen_symbols('16QAM', 8, seed=4)
    return observe(wide_channel, s, 0.5, seed=5)


class TestChebyshev:

    def test_base_cases(self):
        for z in (-0.3, 0.0, 1.7):
            assert chebyshev_T(0, z) == 1.0
            assert chebyshev_T(1, z) == z
        assert chebyshev_T(2, 1.25) == pytest.approx(2.125)

    def test_cosine_identity(self):
        theta = np.linspace(0.0, math.pi, 50)
        for s in range(1, 21):
            assert_allclose(chebyshev_T(s, np.cos(theta)), np.cos(s * theta), atol=1e-10)

    def test_derivative(self):
        step = 1e-6
        for s in range(1, 9):
            assert chebyshev_T_prime(s, 1.0) == pytest.approx(s ** 2)
            numeric = (chebyshev_T(s, 1.1 + step) - chebyshev_T(s, 1.1 - step)) / (2 * step)
            assert chebyshev_T_prime(s, 1.1) == pytest.approx(numeric, rel=1e-6)

    def test_ratio(self):
        for j in range(1, 11):
            assert chebyshev_ratio(j, 1.05) == pytest.approx(chebyshev_T(j - 1, 1.05) / chebyshev_T(j, 1.05),
                                                             rel=1e-12)

    def test_invalid_order(self):
        with pytest.raises(ConfigError):
            chebyshev_T(-1, 0.5)
        with pytest.raises(ConfigError):
            chebyshev_ratio(0, 1.1)


class TestMakeRkcdParams:

    def test_stage_count(self):
        assert make_rkcd_params(1.0, 9.0, 2.0, 0.1).s == 3
        # √4 = 2 恰为整数
        assert make_rkcd_params(1.0, 5.0, 2.0, 0.1).s == 2
        assert make_rkcd_params(2.0, 2.0, 2.0, 0.1).s == 1

    def test_parameter_relations(self):
        eta = 0.3
        params = make_rkcd_params(0.5, 40.0, 2.3, eta)
        assert params.omega0 == pytest.approx(1 + 2.3 / params.s ** 2, rel=1e-12)
        assert params.omega1 == pytest.approx(
            chebyshev_T(params.s, params.omega0) / chebyshev_T_prime(params.s, params.omega0), rel=1e-12)
        assert params.h == pytest.approx((params.omega0 - 1) / (params.omega1 * (0.5 + eta)), rel=1e-12)
        assert_allclose(params.mu, 2 * params.omega1 * params.ratios)
        assert_allclose(params.nu, 2 * params.omega0 * params.ratios)

    @pytest.mark.parametrize('eps_damp', [2.0, 2.3, 5.0])
    def test_largest_mode_inside_stability_region(self, eps_damp):
        for seed in range(10):
            channel = gen_iid_channel(8, 12, seed=seed)
            params = rkcd_params_for(channel, eps_damp, 0.5)
            assert params.omega1 * params.h * (channel.lam[0] + 0.5) <= 1 + params.omega0 + 1e-12

    def test_overrides(self):
        params = make_rkcd_params(1.0, 9.0, 2.0, 0.1, s=5, h=0.01)
        assert (params.s, params.h) == (5, 0.01)
        assert params.omega0 == pytest.approx(1 + 2.0 / 25)

    @pytest.mark.parametrize('ell, L', [(0.0, 1.0), (-1.0, 1.0), (2.0, 1.0)])
    def test_invalid_bounds(self, ell, L):
        with pytest.raises(ConfigError):
            make_rkcd_params(ell, L, 2.0, 0.1)

    def test_describe(self):
        params = make_rkcd_params(1.0, 9.0, 2.0, 0.1)
        assert set(params.describe()) == {'eps_damp', 's', 'h', 'omega0', 'omega1', 'ell', 'L'}


class TestRkcdTimes:

    def test_sweep_lasts_h(self):
        params = make_rkcd_params(0.5, 40.0, 2.0, 0.5)
        tau = rkcd_stage_times(params)
        assert tau[0] == 0.0
        assert tau[-1] == pytest.approx(params.h, rel=1e-10)
        assert np.all(np.diff(tau) > 0)

    def test_stage_mode(self):
        params = make_rkcd_params(0.5, 40.0, 2.0, 0.5)
        times = rkcd_times(params, 4 * params.s)
        assert len(times) == 4 * params.s
        assert np.all(np.diff(times) > 0)
        assert_allclose(times[params.s - 1::params.s], params.h * np.arange(1, 5), rtol=1e-10)

    def test_literal_mode(self):
        params = make_rkcd_params(0.5, 40.0, 2.0, 0.5)
        s = params.s
        stage = rkcd_times(params, 3 * s, 'stage')
        literal = rkcd_times(params, 3 * s, 'literal')
        assert_allclose(literal[:s + 1], stage[:s + 1], rtol=1e-12)
        # 第二轮起已过时间被重复累计
        assert literal[-1] > stage[-1]

    def test_invalid(self):
        params = make_rkcd_params(1.0, 9.0, 2.0, 0.1)
        with pytest.raises(ConfigError):
            rkcd_times(params, 0)
        with pytest.raises(ConfigError):
            rkcd_times(params, 5, 'absolute')


class TestRkcdDetect:

    def test_single_stage_is_gradient_descent(self, wide_channel, wide_received):
        params = make_rkcd_params(1.0, 1.0, 2.0, 0.5, h=0.02)
        assert params.s == 1
        rkcd = rkcd_detect(wide_channel, wide_received.y, 0.5, params, J=30)
        euler = euler_detect(wide_channel, wide_received.y, 0.5, params.h, J=30)
        assert_allclose(rkcd.estimates, euler.estimates, rtol=1e-12, atol=1e-12)
        assert_allclose(rkcd.times, euler.times, rtol=1e-12)

    def test_converges_to_mmse(self, wide_channel, wide_received):
        params = rkcd_params_for(wide_channel, 2.0, 0.5)
        run = rkcd_detect(wide_channel, wide_received.y, 0.5, params, J=30 * params.s)
        target = mmse_estimate(wide_channel, wide_received.y, 0.5)
        assert run.estimates.shape == (30 * params.s + 1, 8)
        assert run.times[0] == 0.0 and len(run.times) == len(run.estimates)
        assert np.linalg.norm(run.final - target) / np.linalg.norm(target) < 1e-6

    @pytest.mark.parametrize('eps_damp', [2.0, 2.3, 5.0])
    def test_stable_and_contracting_per_sweep(self, eps_damp):
        for seed in range(10):
            channel = gen_iid_channel(8, 12, seed=seed)
            s = gen_symbols('QPSK', 8, seed=seed)
            y = observe(channel, s, 0.5, seed=seed + 100).y
            params = rkcd_params_for(channel, eps_damp, 0.5)
            run = rkcd_detect(channel, y, 0.5, params, J=20 * params.s)
            errors = _relative_errors(run, equilibrium(channel, y, 0.5))[::params.s]
            assert np.all(np.diff(errors) <= 1e-12)
            assert errors[-1] < 1e-6

    def test_fewer_iterations_than_euler(self):
        channel = gen_iid_channel(60, 80, seed=2024)
        s = gen_symbols('16QAM', 60, seed=1)
        y = observe(channel, s, 0.1, seed=2).y
        target = equilibrium(channel, y, 0.1)
        params = rkcd_params_for(channel, 2.3, 0.1)
        rkcd = rkcd_detect(channel, y, 0.1, params, J=300, modulation='16QAM')
        euler = euler_detect(channel, y, 0.1, 0.001, J=2000)
        k_rkcd = iterations_to_tolerance(rkcd, target, 1e-6)
        assert k_rkcd is not None
        assert _relative_errors(euler, target)[k_rkcd] >= 1e-6
        assert rkcd.detected.shape == (60,)

    @pytest.mark.slow
    def test_fewer_iterations_than_euler_over_channel_draws(self):
        """200 次信道抽样，每次 RKCD 都要达到 1e-6，且同迭代数下误差不高于欧拉"""
        for draw in range(200):
            channel = gen_iid_channel(60, 80, seed=make_rng(7, draw, STREAM_CHANNEL))
            s = gen_symbols('16QAM', 60, seed=make_rng(7, draw, STREAM_SYMBOLS))
            y = observe(channel, s, 0.1, seed=make_rng(7, draw, STREAM_NOISE)).y
            target = equilibrium(channel, y, 0.1)
            params = rkcd_params_for(channel, 2.3, 0.1)
            rkcd = rkcd_detect(channel, y, 0.1, params, J=400)
            euler = euler_detect(channel, y, 0.1, 0.001, J=2000)
            k_rkcd = iterations_to_tolerance(rkcd, target, 1e-6)
            k_euler = iterations_to_tolerance(euler, target, 1e-6)
            assert k_rkcd is not None, f"draw {draw}: κ={channel.kappa:.1f}, s={params.s}"
            assert k_euler is None or k_rkcd <= k_euler
            euler_errors = _relative_errors(euler, target)
            assert euler_errors[k_rkcd] >= 1e-6
            assert _relative_errors(rkcd, target)[-1] <= euler_errors[400]

    def test_batched_received_vectors(self, wide_channel, rng):
        Y = rng.standard_normal((12, 4)) + 1j * rng.standard_normal((12, 4))
        params = rkcd_params_for(wide_channel, 2.0, 0.5)
        batched = rkcd_detect(wide_channel, Y, 0.5, params, J=2 * params.s)
        single = rkcd_detect(wide_channel, Y[:, 2], 0.5, params, J=2 * params.s)
        assert_allclose(batched.estimates[:, :, 2], single.estimates, rtol=1e-10, atol=1e-12)

    def test_initial_state(self, wide_channel, wide_received):
        params = rkcd_params_for(wide_channel, 2.0, 0.5)
        run = rkcd_detect(wide_channel, wide_received.y, 0.5, params, J=3, x0='zero')
        assert_array_equal(run.estimates[0], 0.0)
        with pytest.raises(ConfigError):
            rkcd_detect(wide_channel, wide_received.y, 0.5, params, J=3, x0='random')
        with pytest.raises(ConfigError):
            rkcd_detect(wide_channel, wide_received.y, 0.5, params, J=0)


class TestOtherDetectors:

    def test_euler_times(self, wide_channel, wide_received):
        run = euler_detect(wide_channel, wide_received.y, 0.5, 0.002, J=5)
        assert_allclose(run.times, 0.002 * np.arange(6))
        with pytest.raises(ConfigError):
            euler_detect(wide_channel, wide_received.y, 0.5, 0.0, J=5)

    def test_mmse_detect(self, wide_channel, wide_received):
        run = mmse_detect(wide_channel, wide_received.y, 0.5, modulation='16QAM')
        x = mmse_estimate(wide_channel, wide_received.y, 0.5)
        assert run.estimates.shape == (1, 8)
        assert_array_equal(run.final, x)
        assert_array_equal(run.detected, symbol_detect(x, '16QAM'))

    def test_iterations_to_tolerance(self):
        run = DetectionRun(estimates=np.array([[2.0], [1.5], [1.05], [1.0]]), times=np.arange(4.0))
        assert iterations_to_tolerance(run, np.array([1.0]), 0.1) == 2
        assert iterations_to_tolerance(run, np.array([1.0]), 0.0) is None

    def test_eigen_bounds(self, wide_channel):
        lower, upper = estimate_eigen_bounds(wide_channel, iterations=400, seed=0)
        assert upper == pytest.approx(wide_channel.lam[0], rel=1e-4)
        assert wide_channel.lam[-1] - 1e-9 <= lower <= upper


class TestSymbolDetect:

    def test_constellation_points_map_to_themselves(self):
        points = constellation('64QAM')
        assert_array_equal(symbol_detect(points, '64QAM'), points)

    def test_nearest_point(self):
        detected = symbol_detect(np.array([0.9 + 0.8j, -0.1 - 2.0j]), 'QPSK')
        assert_allclose(detected, np.array([1 + 1j, -1 - 1j]) / math.sqrt(2))

    def test_tie_goes_to_lower_index(self):
        points = constellation('16QAM')
        level = 1 / math.sqrt(10)
        x = 0.0 + 1j * level
        distances = np.abs(x - points) ** 2
        tied = np.flatnonzero(np.isclose(distances, distances.min()))
        assert len(tied) == 2
        assert symbol_detect(np.array([x]), '16QAM')[0] == points[tied[0]]


class TestSer:

    def test_values(self):
        truth = constellation('QPSK')
        assert ser(truth, truth) == 0.0
        assert ser(truth[::-1], truth) == 1.0
        assert ser(np.array([truth[0], truth[1]]), np.array([truth[0], truth[2]])) == 0.5

    def test_invalid(self):
        with pytest.raises(ConfigError):
            ser(np.ones(3), np.ones(4))
        with pytest.raises(ConfigError):
            ser(np.array([]), np.array([]))
