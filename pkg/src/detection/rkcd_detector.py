"""RKCD 离散时间 MMSE 检测

Runge-Kutta-Chebyshev 下降：每 s 个内层阶段构成一轮，阶段系数来自第一类
Chebyshev 多项式，使显式迭代在刚性二次梯度流上也能取大步长。
另含欧拉离散检测器、精确 MMSE 检测、硬判决与 SER。
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from detection.analytic_core import gradient, mmse_estimate
from detection.channel_model import ChannelInstance, constellation
from detection.detection_config import Modulation
from detection.errors import ConfigError, DivergenceError
from detection.ode_simulator import euler_step
from utils.logging import setup_logger
from utils.rng import SeedLike, complex_normal, make_rng

logger = setup_logger(__name__)

TK_MODES = ('stage', 'literal')


# ---------------------------------------------------------------- Chebyshev 多项式

def chebyshev_T(s: int, z):
    """第一类 Chebyshev 多项式 T_s(z)，三项递推 T_{j+1} = 2z·T_j - T_{j-1}"""
    if s < 0:
        raise ConfigError(f"Chebyshev 阶数必须非负: s={s}")
    z = np.asarray(z, dtype=float)
    prev, curr = np.ones_like(z), z.copy()
    if s == 0:
        return prev if prev.ndim else float(prev)
    for _ in range(s - 1):
        prev, curr = curr, 2 * z * curr - prev
    return curr if curr.ndim else float(curr)


def chebyshev_T_prime(s: int, z):
    """T_s'(z)，伴随递推 T'_{j+1} = 2T_j + 2z·T'_j - T'_{j-1}"""
    if s < 0:
        raise ConfigError(f"Chebyshev 阶数必须非负: s={s}")
    z = np.asarray(z, dtype=float)
    t_prev, t_curr = np.ones_like(z), z.copy()
    d_prev, d_curr = np.zeros_like(z), np.ones_like(z)
    if s == 0:
        return d_prev if d_prev.ndim else float(d_prev)
    for _ in range(s - 1):
        d_prev, d_curr = d_curr, 2 * t_curr + 2 * z * d_curr - d_prev
        t_prev, t_curr = t_curr, 2 * z * t_curr - t_prev
    return d_curr if d_curr.ndim else float(d_curr)


def chebyshev_ratio(j: int, z: float) -> float:
    """r_j = T_{j-1}(z)/T_j(z)，由 1/r_j = 2z - r_{j-1}、r_1 = 1/z 递推，不会溢出"""
    if j < 1:
        raise ConfigError(f"比值下标必须 >= 1: j={j}")
    ratio = 1.0 / z
    for _ in range(j - 1):
        ratio = 1.0 / (2 * z - ratio)
    return ratio


# ---------------------------------------------------------------- 参数

@dataclass(frozen=True)
class RkcdParams:
    """RKCD 参数"""
    eps_damp: float  # 阻尼常数 ε
    s: int  # 每轮阶段数
    h: float  # 每轮步长
    omega0: float  # 1 + ε/s²
    omega1: float  # T_s(ω₀)/T_s'(ω₀)
    ell: float  # 特征值下界 ℓ
    L: float  # 特征值上界 L

    def __post_init__(self):
        if self.s < 1:
            raise ConfigError(f"阶段数必须 >= 1: s={self.s}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ConfigError(f"步长必须为有限正数: h={self.h}")
        if not self.omega0 > 1 or not self.omega1 > 0:
            raise ConfigError(f"ω₀ 须 > 1、ω₁ 须 > 0: omega0={self.omega0}, omega1={self.omega1}")

    @property
    def ratios(self) -> np.ndarray:
        """r_j = T_{j-1}(ω₀)/T_j(ω₀)，下标 0 对应 j=1"""
        return np.array([chebyshev_ratio(j, self.omega0) for j in range(1, self.s + 1)])

    @property
    def mu(self) -> np.ndarray:
        """μ_j = 2ω₁T_{j-1}/T_j"""
        return 2 * self.omega1 * self.ratios

    @property
    def nu(self) -> np.ndarray:
        """ν_j = 2ω₀T_{j-1}/T_j"""
        return 2 * self.omega0 * self.ratios

    def describe(self) -> dict:
        return {'eps_damp': self.eps_damp, 's': self.s, 'h': self.h, 'omega0': self.omega0,
                'omega1': self.omega1, 'ell': self.ell, 'L': self.L}


def make_rkcd_params(ell: float, L: float, eps_damp: float, eta: float,
                     s: Optional[int] = None, h: Optional[float] = None) -> RkcdParams:
    """按稳定性条件选取 RKCD 参数

    s = ⌈√((L/ℓ-1)ε/2)⌉（至少为 1），ω₀ = 1+ε/s²，ω₁ = T_s(ω₀)/T_s'(ω₀)，
    h = (ω₀-1)/(ω₁(ℓ+η))，按此顺序计算。

    Args:
        ell: Gram 特征值下界 ℓ，必须为正
        L: Gram 特征值上界
        eps_damp: 阻尼常数 ε
        eta: 正则参数 η
        s: 直接指定阶段数（覆盖公式）
        h: 直接指定步长（覆盖公式）
    """
    if not (math.isfinite(ell) and ell > 0):
        raise ConfigError(f"特征值下界 ℓ 必须为正（公式除以 ℓ），请提供 λ_n 或正下界: ell={ell}")
    if not (math.isfinite(L) and L >= ell):
        raise ConfigError(f"特征值上界须满足 L >= ℓ: L={L}, ell={ell}")
    for name, value in (('eps_damp', eps_damp), ('eta', eta)):
        if not (math.isfinite(value) and value > 0):
            raise ConfigError(f"{name} 必须为有限正数: {value}")

    if s is None:
        # 1e-12 吸收 √ 的舍入，避免整数结果被向上取整多一级
        s = max(1, math.ceil(math.sqrt((L / ell - 1) * eps_damp / 2) - 1e-12))
    omega0 = 1 + eps_damp / s ** 2
    omega1 = chebyshev_T(s, omega0) / chebyshev_T_prime(s, omega0)
    if h is None:
        h = (omega0 - 1) / (omega1 * (ell + eta))
    return RkcdParams(eps_damp=eps_damp, s=int(s), h=float(h), omega0=omega0, omega1=omega1,
                      ell=float(ell), L=float(L))


def rkcd_params_for(channel: ChannelInstance, eps_damp: float, eta: float,
                    s: Optional[int] = None, h: Optional[float] = None) -> RkcdParams:
    """以缓存的精确特征值 λ_n、λ₁ 作为 (ℓ, L)"""
    return make_rkcd_params(float(channel.lam[-1]), float(channel.lam[0]), eps_damp, eta, s=s, h=h)


def estimate_eigen_bounds(channel: ChannelInstance, iterations: int = 200,
                          seed: SeedLike = None) -> tuple[float, float]:
    """幂迭代估计 Gram 矩阵的 (ℓ, L)，只用矩阵-向量乘

    L 由 G 的幂迭代得到，ℓ 由 L·I - G 的幂迭代得到；ℓ 为近似值，
    病态谱上收敛较慢。
    """
    if iterations < 1:
        raise ConfigError(f"迭代次数必须为正: iterations={iterations}")
    rng = make_rng(seed, 0)

    def _power(apply) -> float:
        v = complex_normal(rng, (channel.n,), 1.0)
        v /= np.linalg.norm(v)
        value = 0.0
        for _ in range(iterations):
            w = apply(v)
            value = float(np.vdot(v, w).real)
            norm = np.linalg.norm(w)
            if norm == 0:
                return 0.0
            v = w / norm
        return value

    upper = _power(channel.apply_gram)
    lower = upper - _power(lambda v: upper * v - channel.apply_gram(v))
    return max(lower, 0.0), upper


# ---------------------------------------------------------------- 迭代-时间映射

def rkcd_stage_times(params: RkcdParams) -> np.ndarray:
    """一轮内各阶段对应的局部 ODE 时间 τ_0..τ_s

    τ_1 = hω₁/ω₀，τ_j = ν_j·τ_{j-1} + (1-ν_j)·τ_{j-2} + hμ_j，且 τ_s = h
    """
    mu, nu = params.mu, params.nu
    tau = np.zeros(params.s + 1)
    tau[1] = params.h * params.omega1 / params.omega0
    for j in range(2, params.s + 1):
        tau[j] = nu[j - 1] * tau[j - 1] + (1 - nu[j - 1]) * tau[j - 2] + params.h * mu[j - 1]
    return tau


def rkcd_times(params: RkcdParams, K: int, mode: str = 'stage') -> np.ndarray:
    """第 1..K 次迭代对应的虚拟时间 T_k（返回长度 K，下标 k-1）

    mode='stage'：T_k = t̃ + τ_j，每完成一轮 t̃ 增加 τ_s = h
    mode='literal'：按递推字面形式，以绝对时间做两项组合，且一轮结束时 t̃ ← t̃ + T_k，
    从第二轮起会重复累计已过时间，仅用于对照
    """
    if K < 1:
        raise ConfigError(f"迭代次数必须 >= 1: K={K}")
    if mode not in TK_MODES:
        raise ConfigError(f"未知 T_k 模式: {mode!r}，可选 {TK_MODES}")

    s = params.s
    times = np.zeros(K + 1)
    if mode == 'stage':
        tau = rkcd_stage_times(params)
        for k in range(1, K + 1):
            sweep, j = divmod(k - 1, s)
            times[k] = sweep * tau[s] + tau[j + 1]
        return times[1:]

    mu, nu = params.mu, params.nu
    elapsed = 0.0
    for k in range(1, K + 1):
        j = (k - 1) % s + 1
        if j == 1:
            times[k] = elapsed + params.h * params.omega1 / params.omega0
        else:
            times[k] = elapsed + nu[j - 1] * times[k - 1] + (1 - nu[j - 1]) * times[k - 2] + params.h * mu[j - 1]
        if j == s:
            elapsed += times[k]
    return times[1:]


# ---------------------------------------------------------------- 检测器

@dataclass(frozen=True, eq=False)
class DetectionRun:
    """一次检测：全部迭代估计 x^{[0..J]}、对应虚拟时间及最终硬判决"""
    estimates: np.ndarray
    times: np.ndarray
    detected: Optional[np.ndarray] = None

    @property
    def final(self) -> np.ndarray:
        return self.estimates[-1]


def _initial_state(hy: np.ndarray, x0) -> np.ndarray:
    if x0 is None or (isinstance(x0, str) and x0 == 'matched'):
        return hy.copy()
    if isinstance(x0, str):
        if x0 == 'zero':
            return np.zeros_like(hy)
        raise ConfigError(f"未知初值: {x0!r}，可选 'matched' / 'zero'")
    return np.array(np.broadcast_to(x0, hy.shape), dtype=complex)


def _check_finite(x: np.ndarray, k: int, solver: str):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"{solver} 第 {k} 次迭代出现非有限值，参数对该谱不稳定")


def _decide(x: np.ndarray, modulation) -> Optional[np.ndarray]:
    return None if modulation is None else symbol_detect(x, modulation)


def rkcd_detect(channel: ChannelInstance,
                y: np.ndarray,
                eta: float,
                params: RkcdParams,
                J: int,
                x0=None,
                modulation: 'str | Modulation | None' = None,
                tk_mode: str = 'stage') -> DetectionRun:
    """RKCD 迭代求解 (H^H H + ηI)x = H^H y

    Args:
        channel: 信道实例
        y: 接收向量（或 m×B 矩阵，同一信道下批量检测）
        eta: 正则参数 η
        params: RKCD 参数
        J: 迭代次数（内层阶段总数）
        x0: 'matched'（默认，H^H y）、'zero' 或给定向量
        modulation: 给定时对 x^{[J]} 做硬判决
        tk_mode: T_k 映射方式

    Returns:
        DetectionRun，estimates 长度 J+1，times[0] = 0
    """
    if J < 1:
        raise ConfigError(f"迭代次数必须 >= 1: J={J}")

    hy = channel.matched_filter(y)
    x_prev2 = None
    x_prev = _initial_state(hy, x0)
    estimates = [x_prev]
    mu, nu = params.mu, params.nu
    first_step = params.h * params.omega1 / params.omega0

    for k in range(1, J + 1):
        j = (k - 1) % params.s + 1
        grad = gradient(channel, x_prev, hy, eta)
        if j == 1:
            x = x_prev - first_step * grad
        else:
            # j=2 时 x_prev2 即本轮起点
            x = -params.h * mu[j - 1] * grad + nu[j - 1] * x_prev + (1 - nu[j - 1]) * x_prev2
        _check_finite(x, k, 'RKCD')
        estimates.append(x)
        x_prev2, x_prev = x_prev, x

    times = np.concatenate([[0.0], rkcd_times(params, J, tk_mode)])
    logger.debug(f"RKCD 完成: J={J}, s={params.s}, h={params.h:.4g}")
    return DetectionRun(estimates=np.stack(estimates), times=times, detected=_decide(x_prev, modulation))


def euler_detect(channel: ChannelInstance,
                 y: np.ndarray,
                 eta: float,
                 delta: float,
                 J: int,
                 x0=None,
                 modulation: 'str | Modulation | None' = None) -> DetectionRun:
    """显式欧拉离散检测器，x^{[k]} = x^{[k-1]} - δ((H^H H+ηI)x^{[k-1]} - H^H y)，T_k = kδ"""
    if J < 1:
        raise ConfigError(f"迭代次数必须 >= 1: J={J}")
    if not (math.isfinite(delta) and delta > 0):
        raise ConfigError(f"步长必须为正: delta={delta}")

    hy = channel.matched_filter(y)
    x = _initial_state(hy, x0)
    estimates = [x]
    for k in range(1, J + 1):
        x = euler_step(channel, x, hy, eta, delta)
        _check_finite(x, k, 'Euler')
        estimates.append(x)
    return DetectionRun(estimates=np.stack(estimates), times=delta * np.arange(J + 1),
                        detected=_decide(x, modulation))


def mmse_detect(channel: ChannelInstance, y: np.ndarray, sigma2: float,
                modulation: 'str | Modulation | None' = None) -> DetectionRun:
    """精确线性 MMSE 估计加硬判决，estimates 只含一个估计"""
    x = mmse_estimate(channel, y, sigma2)
    return DetectionRun(estimates=x[np.newaxis], times=np.zeros(1), detected=_decide(x, modulation))


def iterations_to_tolerance(run: DetectionRun, target: np.ndarray, tol: float) -> Optional[int]:
    """首个满足 ‖x^{[k]} - target‖/‖target‖ < tol 的迭代下标，未达到返回 None"""
    flat = run.estimates.reshape(len(run.estimates), -1)
    target = np.asarray(target).reshape(-1)
    errors = np.linalg.norm(flat - target, axis=1) / np.linalg.norm(target)
    hits = np.flatnonzero(errors < tol)
    return int(hits[0]) if hits.size else None


# ---------------------------------------------------------------- 判决与 SER

def symbol_detect(x: np.ndarray, modulation: 'str | Modulation') -> np.ndarray:
    """逐元素最近星座点判决

    距离差在舍入容差内视为等距，取星座下标较小者
    """
    points = constellation(modulation)
    x = np.asarray(x, dtype=complex)
    distances = np.abs(x[..., np.newaxis] - points) ** 2
    nearest = distances.min(axis=-1, keepdims=True)
    ties = distances <= nearest + 1e-12 * (1 + nearest)
    return points[np.argmax(ties, axis=-1)]


def ser(detected: np.ndarray, truth: np.ndarray) -> float:
    """符号错误率：不相等元素所占比例"""
    detected, truth = np.asarray(detected), np.asarray(truth)
    if detected.shape != truth.shape:
        raise ConfigError(f"判决结果与真值长度不一致: {detected.shape} vs {truth.shape}")
    if detected.size == 0:
        raise ConfigError("符号向量不能为空")
    return float(np.mean(detected != truth))
