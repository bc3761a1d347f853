"""ODE-MMSE 解析核心 - 闭式估计、MSE 公式与泛函网格搜索

所有矩阵函数（逆、指数）都在缓存的 Gram 特征基下逐模态计算，
特征分解之后每次求值只需 O(n²)。
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from config.constants import F_GRID_POINTS, QUAD_TOL
from detection.channel_model import ChannelInstance
from detection.errors import ConfigError, NumericalError
from detection.regularizer import Regularizer
from utils.logging import setup_logger
from utils.quadrature import adaptive_simpson, composite_simpson

logger = setup_logger(__name__)


@dataclass(frozen=True, eq=False)
class MseCurve:
    """MSE 随虚拟时间的曲线，蒙特卡洛结果额外带标准差与标准误"""
    times: np.ndarray
    values: np.ndarray
    std: Optional[np.ndarray] = None
    stderr: Optional[np.ndarray] = None
    trials: Optional[int] = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape:
            raise ConfigError(f"times 与 values 长度不一致: {times.shape} vs {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NumericalError("MSE 曲线含非有限值")
        if np.any(values < 0):
            raise NumericalError(f"MSE 曲线出现负值: min={values.min():.3e}")
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'values', values)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({'t': self.times, 'mse': self.values})
        if self.std is not None:
            frame['std'] = self.std
        if self.stderr is not None:
            frame['stderr'] = self.stderr
        return frame


def _check_positive(name: str, value: float):
    if not (math.isfinite(value) and value > 0):
        raise ConfigError(f"{name} 必须为有限正数: {value}")


def _check_time(t):
    if np.any(np.asarray(t) < 0) or not np.all(np.isfinite(t)):
        raise ConfigError(f"时间必须为非负有限值: t={t}")


def _scale_modes(channel: ChannelInstance, factor: np.ndarray, v: np.ndarray) -> np.ndarray:
    """U diag(factor) U^H v，v 可为向量或按列堆叠的矩阵"""
    coeff = channel.to_modes(v)
    coeff = factor.reshape(factor.shape + (1,) * (coeff.ndim - 1)) * coeff
    return channel.from_modes(coeff)


def _scalar_or_array(values: np.ndarray, t):
    return float(values) if np.ndim(t) == 0 else values


# ---------------------------------------------------------------- 估计量

def equilibrium(channel: ChannelInstance, y: np.ndarray, eta: float) -> np.ndarray:
    """ODE 平衡点 x* = (H^H H + ηI)^{-1} H^H y"""
    _check_positive('eta', eta)
    return _scale_modes(channel, 1.0 / (channel.lam + eta), channel.matched_filter(y))


def mmse_estimate(channel: ChannelInstance, y: np.ndarray, sigma2: float) -> np.ndarray:
    """线性 MMSE 估计 (H^H H + σ²I)^{-1} H^H y，与 η=σ² 的平衡点同一路径"""
    return equilibrium(channel, y, sigma2)


def closed_form_estimate(channel: ChannelInstance, y: np.ndarray, eta: float, t: float) -> np.ndarray:
    """ODE-MMSE 在时刻 t 的闭式解 x(t) = Q(t) y

    逐模态系数 q(λ) = [e^{-(λ+η)t}(λ+η-1) + 1]/(λ+η)，作用在 U^H H^H y 上；
    t=0 时为匹配滤波 H^H y。
    """
    _check_positive('eta', eta)
    _check_time(t)
    hy = channel.matched_filter(y)
    if t == 0:
        return hy
    shifted = channel.lam + eta
    q = (np.exp(-shifted * t) * (shifted - 1) + 1) / shifted
    return _scale_modes(channel, q, hy)


def objective(channel: ChannelInstance, y: np.ndarray, eta: float, x: np.ndarray) -> float:
    """f(x) = ‖y - Hx‖² + η‖x‖²"""
    residual = y - channel.H @ x
    return float(np.vdot(residual, residual).real + eta * np.vdot(x, x).real)


def gradient(channel: ChannelInstance, x: np.ndarray, hy: np.ndarray, eta: float) -> np.ndarray:
    """(H^H H + ηI)x - H^H y，只用 H、H^H 的矩阵-向量乘

    等于实数堆叠表示下 ∇f 的一半，梯度流为 dx/dt = -gradient
    """
    return channel.apply_gram(x) + eta * x - hy


# ---------------------------------------------------------------- MSE 公式

def mse_from_gain(lam: np.ndarray, sigma2: float, q: np.ndarray):
    """逐模态增益 q（x = U diag(q) U^H H^H y）对应的 MSE：Σ λ(λ+σ²)q² - 2λq + 1

    q 的最后一维对应模态，前面的维度（如时间）保留
    """
    return np.sum(lam * (lam + sigma2) * q ** 2 - 2 * lam * q + 1, axis=-1)


def mse_ode(channel: ChannelInstance, eta: float, sigma2: float, t):
    """ODE-MMSE 的 MSE(t)，三项求和形式；t 可为标量或数组"""
    _check_positive('eta', eta)
    _check_positive('sigma2', sigma2)
    _check_time(t)

    lam = channel.lam
    shifted = lam + eta
    decay = np.exp(-np.multiply.outer(np.asarray(t, dtype=float), shifted))

    transient = lam * (shifted - 1) ** 2 * (lam + sigma2) * decay ** 2 / shifted ** 2
    cross = 2 * lam * (shifted - 1) * (eta - sigma2) * decay / shifted ** 2
    floor = (eta ** 2 + sigma2 * lam) / shifted ** 2
    values = transient.sum(axis=-1) - cross.sum(axis=-1) + floor.sum()
    return _scalar_or_array(values, t)


def mse_mmse(channel: ChannelInstance, sigma2: float) -> float:
    """线性 MMSE 估计的 MSE：Σ σ²/(λ+σ²)"""
    _check_positive('sigma2', sigma2)
    if not np.any(channel.lam > 0):
        logger.warning("Gram 矩阵全部特征值为 0，MSE_mmse 退化为 n")
    return float(np.sum(sigma2 / (channel.lam + sigma2)))


def mse_asymptotic(channel: ChannelInstance, eta: float, sigma2: float) -> float:
    """t→∞ 的 MSE：Σ (η²+σ²λ)/(λ+η)²"""
    _check_positive('eta', eta)
    _check_positive('sigma2', sigma2)
    lam = channel.lam
    return float(np.sum((eta ** 2 + sigma2 * lam) / (lam + eta) ** 2))


def optimality_gap(channel: ChannelInstance, eta: float, sigma2: float) -> float:
    """MSE_∞ - MSE_mmse 的闭式 Σ λ(η-σ²)²/((λ+η)²(λ+σ²))"""
    _check_positive('eta', eta)
    _check_positive('sigma2', sigma2)
    lam = channel.lam
    return float(np.sum(lam * (eta - sigma2) ** 2 / ((lam + eta) ** 2 * (lam + sigma2))))


def mse_tode(channel: ChannelInstance, regularizer: Regularizer, sigma2: float, t: float,
             quad_tol: float = QUAD_TOL) -> float:
    """时变正则 tODE-MMSE 的 MSE(t)

    每个模态 g_i(t) = e^{-(λ_i t+ξ(t))} + ∫₀ᵗ e^{λ_i(u-t)+ξ(u)-ξ(t)} du，
    积分以平移形式计算，避免 e^{ξ(u)} 溢出；各模态共用一次自适应 Simpson。
    """
    _check_positive('sigma2', sigma2)
    _check_positive('quad_tol', quad_tol)
    _check_time(t)

    lam = channel.lam
    if t == 0:
        g = np.ones_like(lam)
    else:
        xi_t = float(regularizer.xi(t))

        def integrand(u: float) -> np.ndarray:
            return np.exp(lam * (u - t) + (float(regularizer.xi(u)) - xi_t))

        integral, _ = adaptive_simpson(integrand, 0.0, t, tol=quad_tol)
        g = np.exp(-(lam * t + xi_t)) + integral

    return float(mse_from_gain(lam, sigma2, g))


def mse_ode_curve(channel: ChannelInstance, eta: float, sigma2: float, times) -> MseCurve:
    times = np.asarray(times, dtype=float)
    return MseCurve(times, np.asarray(mse_ode(channel, eta, sigma2, times)))


def mse_tode_curve(channel: ChannelInstance, regularizer: Regularizer, sigma2: float, times,
                   quad_tol: float = QUAD_TOL) -> MseCurve:
    times = np.asarray(times, dtype=float)
    values = [mse_tode(channel, regularizer, sigma2, t, quad_tol) for t in times]
    return MseCurve(times, np.array(values))


# ---------------------------------------------------------------- 泛函与网格搜索

def functional_F(channel: ChannelInstance, regularizer: Regularizer, sigma2: float, T: float,
                 quad_tol: float = QUAD_TOL, n_points: int = F_GRID_POINTS) -> float:
    """F = ∫₀ᵀ MSE(t) dt，固定网格复合 Simpson

    常数正则直接用闭式 MSE(t)，时变正则逐点调用 mse_tode。
    """
    _check_positive('T', T)
    if regularizer.is_constant:
        eta = float(regularizer.eta(0.0))
        return composite_simpson(lambda t: mse_ode(channel, eta, sigma2, t), 0.0, T, n_points)
    return composite_simpson(lambda t: mse_tode(channel, regularizer, sigma2, t, quad_tol),
                             0.0, T, n_points)


def grid_search(channel: ChannelInstance,
                candidates: list[Regularizer],
                sigma2: float,
                T: float,
                quad_tol: float = QUAD_TOL,
                n_points: int = F_GRID_POINTS,
                threads: int = 1) -> tuple[Regularizer, pd.DataFrame]:
    """在候选 η(t) 中选择泛函 F 最小者

    Args:
        channel: 信道实例
        candidates: 候选正则（非空）
        sigma2: 噪声方差
        T: 泛函积分上限
        quad_tol: 内层积分容限
        n_points: 外层网格点数
        threads: 并行线程数（结果按候选顺序组装）

    Returns:
        (最优候选, DataFrame(candidate, F, error, is_best))
        并列时取最先出现者；数值失败的候选 F 记为 NaN
    """
    if not candidates:
        raise ConfigError("候选列表不能为空")

    def _evaluate(candidate: Regularizer):
        try:
            return functional_F(channel, candidate, sigma2, T, quad_tol, n_points), None
        except NumericalError as e:
            logger.warning(f"候选 {candidate.label} 计算失败，已排除: {e}")
            return math.nan, e

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(_evaluate, candidates))

    errors = [error for _, error in results if error is not None]
    if len(errors) == len(candidates):
        raise errors[0]

    values = np.array([value for value, _ in results])
    best_index = int(np.argmin(np.where(np.isnan(values), np.inf, values)))

    table = pd.DataFrame({
        'candidate': [c.label for c in candidates],
        'F': values,
        'error': ['' if error is None else str(error) for _, error in results],
        'is_best': [i == best_index for i in range(len(candidates))]
    })
    logger.info(f"网格搜索完成: 最优 {candidates[best_index].label}, F={values[best_index]:.6g}")
    return candidates[best_index], table
