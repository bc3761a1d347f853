"""ODE 仿真器 - 以细步长显式欧拉法模拟连续时间 ODE，并做蒙特卡洛 MSE 统计"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, TypeVar

import numpy as np

from config.constants import DIVERGENCE_FACTOR, MC_CHUNK_SIZE
from detection.analytic_core import MseCurve, gradient, mse_from_gain
from detection.channel_model import ChannelInstance, gen_symbols, observe
from detection.detection_config import EulerConfig, SystemConfig
from detection.errors import ConfigError, DivergenceError
from detection.regularizer import Regularizer
from utils.logging import setup_logger
from utils.metrics import summarize_trials
from utils.rng import STREAM_NOISE, STREAM_SYMBOLS, make_rng

logger = setup_logger(__name__)

T = TypeVar('T')


@dataclass(frozen=True, eq=False)
class Trajectory:
    """记录下来的状态序列：times[k] 对应 states[k]（n 维，批量时为 n×B）"""
    times: np.ndarray
    states: np.ndarray


def euler_step(channel: ChannelInstance, x: np.ndarray, hy: np.ndarray, eta: float,
               delta: float) -> np.ndarray:
    """x ← x - δ((H^H H + ηI)x - H^H y)"""
    return x - delta * gradient(channel, x, hy, eta)


def _step_etas(regularizer: Regularizer, config: EulerConfig) -> np.ndarray:
    """每一步使用的 η：常数直接取值；时变时按 eta_sampling 取左端点或步内平均"""
    n_steps = config.n_steps
    if regularizer.is_constant:
        return np.full(n_steps, float(regularizer.eta(0.0)))
    grid = np.arange(n_steps + 1) * config.delta
    if config.eta_sampling == 'left':
        return np.asarray(regularizer.eta(grid[:-1]), dtype=float)
    return np.diff(regularizer.xi(grid)) / config.delta


def euler_trajectory(channel: ChannelInstance,
                     y: np.ndarray,
                     regularizer: Regularizer,
                     config: EulerConfig,
                     x0: Optional[np.ndarray] = None) -> Trajectory:
    """显式欧拉积分 dx/dt = -(H^H H + η(t)I)x + H^H y

    Args:
        channel: 信道实例
        y: 接收向量，或按列堆叠的 m×B 矩阵（一次积分 B 个试验）
        regularizer: 常数或时变正则
        config: 步长、时域、记录间隔
        x0: 初值，默认匹配滤波 H^H y

    Returns:
        Trajectory，记录 k·δ（k 为 record_stride 的倍数）时刻的状态

    Raises:
        DivergenceError: ‖x‖ 超过 1e8·‖x(0)‖ 或出现非有限值
    """
    hy = channel.matched_filter(y)
    x = hy.copy() if x0 is None else np.array(np.broadcast_to(x0, hy.shape), dtype=complex)

    reference = np.linalg.norm(x, axis=0)
    fallback = np.linalg.norm(hy, axis=0)
    reference = np.where(reference > 0, reference, np.where(fallback > 0, fallback, 1.0))
    limit = DIVERGENCE_FACTOR * reference

    etas = _step_etas(regularizer, config)
    delta, stride = config.delta, config.record_stride
    times, states = [0.0], [x.copy()]

    for k, eta in enumerate(etas, start=1):
        x = euler_step(channel, x, hy, eta, delta)
        norms = np.linalg.norm(x, axis=0)
        if not np.all(np.isfinite(norms)) or np.any(norms > limit):
            raise DivergenceError(
                f"欧拉积分在第 {k} 步 (t={k * delta:.4g}) 发散: ‖x‖={np.max(norms):.3e}，"
                f"步长 δ={delta:g} 对谱 λ₁+η={channel.lam[0] + eta:.4g} 过大 (稳定需 δ<{2 / (channel.lam[0] + eta):.4g})")
        if k % stride == 0:
            times.append(k * delta)
            states.append(x.copy())

    logger.debug(f"欧拉积分完成: {len(etas)} 步, δ={delta:g}, 记录 {len(times)} 个时刻")
    return Trajectory(times=np.array(times), states=np.stack(states))


def mse_euler(channel: ChannelInstance, regularizer: Regularizer, sigma2: float,
              config: EulerConfig) -> MseCurve:
    """欧拉离散迭代本身的期望 MSE（与 euler_trajectory 相同的记录时刻）

    x^{[k]} = U diag(q_k) U^H H^H y，逐模态 q_k = (1-δ(λ+η_k))q_{k-1} + δ，q_0 = 1，
    再代入 mse_from_gain。与 mse_ode / mse_tode 的差即步长 δ 带来的离散化偏差。
    """
    lam = channel.lam
    etas = _step_etas(regularizer, config)
    delta, stride = config.delta, config.record_stride

    q = np.ones_like(lam)
    times, gains = [0.0], [q]
    for k, eta in enumerate(etas, start=1):
        q = (1 - delta * (lam + eta)) * q + delta
        if k % stride == 0:
            times.append(k * delta)
            gains.append(q)
    return MseCurve(np.array(times), mse_from_gain(lam, sigma2, np.stack(gains)))


def draw_trials(channel: ChannelInstance, system: SystemConfig, seed: int,
                indices: range) -> tuple[np.ndarray, np.ndarray]:
    """按试验下标抽取 (s, y)，按列堆叠为 n×B 与 m×B

    试验 i 的符号流为 (seed, i, STREAM_SYMBOLS)，噪声流为 (seed, i, STREAM_NOISE)，
    因此不同调制在同一种子下共用同一组噪声。
    """
    symbols, received = [], []
    for i in indices:
        s = gen_symbols(system.modulation, system.n, make_rng(seed, i, STREAM_SYMBOLS))
        block = observe(channel, s, system.sigma2, make_rng(seed, i, STREAM_NOISE))
        symbols.append(block.s)
        received.append(block.y)
    return np.stack(symbols, axis=1), np.stack(received, axis=1)


def map_trial_chunks(fn: Callable[[range], T], trials: int, threads: int = 1) -> list[T]:
    """把 0..trials-1 按 MC_CHUNK_SIZE 分块交给线程池，结果按块下标顺序返回

    分块方式与线程数无关，下游按顺序拼接即可得到逐字节一致的统计量。
    """
    if trials < 1:
        raise ConfigError(f"试验次数必须为正: trials={trials}")
    chunks = [range(start, min(start + MC_CHUNK_SIZE, trials))
              for start in range(0, trials, MC_CHUNK_SIZE)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(fn, chunks))


def monte_carlo_mse(channel: ChannelInstance,
                    regularizer: Regularizer,
                    system: SystemConfig,
                    config: EulerConfig,
                    trials: int,
                    seed: int,
                    threads: int = 1) -> MseCurve:
    """固定 H，每次试验重新抽取 (s, w)，统计各记录时刻的 ‖x(t)-s‖² 均值

    随机流见 draw_trials，分块与归约见 map_trial_chunks，输出与线程数无关。
    """
    if system.n != channel.n or system.m != channel.m:
        raise ConfigError(f"系统维度 ({system.n},{system.m}) 与信道 ({channel.n},{channel.m}) 不一致")

    def _run_chunk(indices: range) -> tuple[np.ndarray, np.ndarray]:
        S, Y = draw_trials(channel, system, seed, indices)
        trajectory = euler_trajectory(channel, Y, regularizer, config)
        errors = np.sum(np.abs(trajectory.states - S) ** 2, axis=1)
        logger.debug(f"蒙特卡洛分块 {indices.start}-{indices.stop - 1} 完成")
        return trajectory.times, errors

    results = map_trial_chunks(_run_chunk, trials, threads)

    times = results[0][0]
    errors = np.concatenate([chunk_errors for _, chunk_errors in results], axis=1)
    mean, std, stderr = summarize_trials(errors)
    logger.debug(f"蒙特卡洛完成: {trials} 次试验, {len(times)} 个记录时刻, {regularizer.label}")
    return MseCurve(times, mean, std=std, stderr=stderr, trials=trials)
