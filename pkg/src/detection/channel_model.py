"""MIMO 信道模型 - 信道、发射符号与接收信号的生成

随机抽取顺序（PCG64，见 utils.rng）：
- gen_iid_channel: 先抽 m×n 实部，再抽 m×n 虚部
- gen_kronecker_channel: 同上抽取 G，再左右乘相关矩阵平方根
- gen_symbols: 一次 integers(0, M, n) 抽取星座标签
- observe: 先抽噪声实部，再抽虚部
"""
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh, toeplitz

from config.constants import CONSTELLATION_SCALE, EIGEN_CLAMP_TOL, MODULATION_ORDER
from detection.detection_config import Modulation
from detection.errors import ConfigError, NumericalError
from utils.logging import setup_logger
from utils.rng import SeedLike, complex_normal, make_rng

logger = setup_logger(__name__)


@dataclass(frozen=True, eq=False)
class ChannelInstance:
    """信道矩阵及其 Gram 矩阵特征分解缓存

    H^H H = U diag(lam) U^H，lam 降序且非负，kappa = lam[0]/lam[-1]
    """
    H: np.ndarray  # m×n 复信道矩阵
    lam: np.ndarray  # Gram 特征值，降序
    U: np.ndarray  # Gram 特征向量（列）
    kappa: float  # 条件数
    meta: dict = field(default_factory=dict)  # 生成参数，用于报告

    @classmethod
    def from_matrix(cls, H: np.ndarray, **meta) -> 'ChannelInstance':
        """由任意信道矩阵构造实例，并一次性完成特征分解"""
        H = np.atleast_2d(np.asarray(H, dtype=complex))
        if H.shape[0] < 1 or H.shape[1] < 1:
            raise ConfigError(f"信道矩阵维度非法: {H.shape}")
        if not np.all(np.isfinite(H)):
            raise ConfigError("信道矩阵含非有限值")

        gram = H.conj().T @ H
        gram = (gram + gram.conj().T) / 2
        lam, U = eigh(gram)
        lam, U = lam[::-1].copy(), U[:, ::-1].copy()

        # 舍入误差导致的微小负特征值截断为 0
        tol = EIGEN_CLAMP_TOL * max(1.0, float(lam[0]))
        if lam[-1] < -tol:
            raise NumericalError(f"Gram 矩阵出现负特征值 {lam[-1]:.3e}，超出舍入容差 {tol:.1e}")
        lam = np.clip(lam, 0.0, None)

        kappa = float(lam[0] / lam[-1]) if lam[-1] > 0 else math.inf
        logger.debug(f"信道 {H.shape[0]}x{H.shape[1]} 特征分解完成, kappa={kappa:.4g}")
        return cls(H=H, lam=lam, U=U, kappa=kappa, meta=dict(meta))

    @property
    def n(self) -> int:
        return self.H.shape[1]

    @property
    def m(self) -> int:
        return self.H.shape[0]

    def matched_filter(self, y: np.ndarray) -> np.ndarray:
        """匹配滤波 H^H y"""
        return self.H.conj().T @ y

    def apply_gram(self, x: np.ndarray) -> np.ndarray:
        """H^H (H x)，只用矩阵-向量乘"""
        return self.H.conj().T @ (self.H @ x)

    def to_modes(self, v: np.ndarray) -> np.ndarray:
        """U^H v：投影到 Gram 特征基"""
        return self.U.conj().T @ v

    def from_modes(self, c: np.ndarray) -> np.ndarray:
        """U c：从特征基变换回来"""
        return self.U @ c


@dataclass(frozen=True, eq=False)
class TransmitBlock:
    """一次发射：符号 s、噪声 w、接收 y = Hs + w"""
    s: np.ndarray
    w: np.ndarray
    y: np.ndarray


def _check_dims(n: int, m: int):
    if int(n) != n or int(m) != m or n < 1 or m < 1:
        raise ConfigError(f"天线数必须为正整数: n={n}, m={m}")


def gen_iid_channel(n: int, m: int, per_element_variance: float = 1.0,
                    seed: SeedLike = None) -> ChannelInstance:
    """i.i.d. 圆对称复高斯信道，元素服从 CN(0, per_element_variance)

    Args:
        n: 发射天线数（列）
        m: 接收天线数（行）
        per_element_variance: 元素方差，常用 1 或 1/m
        seed: 整数种子或 Generator
    """
    _check_dims(n, m)
    if not (math.isfinite(per_element_variance) and per_element_variance > 0):
        raise ConfigError(f"元素方差必须为有限正数: {per_element_variance}")

    rng = make_rng(seed, 0)
    H = complex_normal(rng, (m, n), per_element_variance)
    return ChannelInstance.from_matrix(H, model='iid', variance=per_element_variance)


def exponential_correlation(size: int, rho: float) -> np.ndarray:
    """指数相关矩阵 R_ij = rho^|i-j|"""
    return toeplitz(rho ** np.arange(size))


def correlation_sqrt(R: np.ndarray) -> np.ndarray:
    """对称特征分解求矩阵平方根 R^{1/2}"""
    w, V = eigh(R)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def gen_kronecker_channel(n: int, m: int, rho: float,
                          seed: SeedLike = None) -> ChannelInstance:
    """Kronecker 指数相关信道 H = R_R^{1/2} G R_T^{1/2}，G 元素 CN(0,1)

    Args:
        n: 发射天线数
        m: 接收天线数
        rho: 相关系数，0 <= rho < 1
        seed: 整数种子或 Generator
    """
    _check_dims(n, m)
    if not (0 <= rho < 1):
        raise ConfigError(f"相关系数须在 [0, 1) 内: rho={rho}")

    rng = make_rng(seed, 0)
    G = complex_normal(rng, (m, n), 1.0)
    if rho == 0:
        H = G
    else:
        H = correlation_sqrt(exponential_correlation(m, rho)) @ G @ correlation_sqrt(exponential_correlation(n, rho))
    return ChannelInstance.from_matrix(H, model='kronecker', rho=rho)


def gen_channel(model: str, n: int, m: int, variance: float = 1.0, rho: float = 0.0,
                seed: SeedLike = None) -> ChannelInstance:
    """按模型名生成信道（实验层调用）"""
    if model == 'iid':
        return gen_iid_channel(n, m, variance, seed)
    if model == 'kronecker':
        return gen_kronecker_channel(n, m, rho, seed)
    raise ConfigError(f"未知信道模型: {model!r}，可选 'iid' / 'kronecker'")


def _gray_to_binary(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = g >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return b


@lru_cache(maxsize=None)
def _constellation(modulation: Modulation) -> np.ndarray:
    order = MODULATION_ORDER[modulation.value]
    side = math.isqrt(order)
    half_bits = int(math.log2(side))

    labels = np.arange(order)
    i_level = _gray_to_binary(labels >> half_bits)
    q_level = _gray_to_binary(labels & (side - 1))
    points = (2 * i_level - (side - 1)) + 1j * (2 * q_level - (side - 1))
    points = CONSTELLATION_SCALE[modulation.value] * points
    points.setflags(write=False)
    return points


def constellation(modulation: str | Modulation) -> np.ndarray:
    """单位平均能量的方形 QAM 星座，下标即 Gray 比特标签

    标签高半部分比特 → 同相分量电平，低半部分 → 正交分量电平，
    每维按 Gray 码映射到 {-(√M-1), ..., √M-1}，再乘 1/sqrt(2(M-1)/3)。
    """
    return _constellation(Modulation.parse(modulation))


def bits_per_symbol(modulation: str | Modulation) -> int:
    return int(math.log2(MODULATION_ORDER[Modulation.parse(modulation).value]))


def gen_symbols(modulation: str | Modulation, n: int, seed: SeedLike = None) -> np.ndarray:
    """在星座上均匀抽取 n 个符号"""
    points = constellation(modulation)
    if n < 1:
        raise ConfigError(f"符号数必须为正: n={n}")
    rng = make_rng(seed, 0)
    return points[rng.integers(0, len(points), size=n)]


def observe(channel: ChannelInstance, s: np.ndarray, sigma2: float,
            seed: SeedLike = None) -> TransmitBlock:
    """y = Hs + w，w 元素服从 CN(0, sigma2)

    s 可以是长度 n 的向量，也可以是 n×B 矩阵（每列一次发射）
    """
    s = np.asarray(s, dtype=complex)
    if s.shape[0] != channel.n:
        raise ConfigError(f"符号维度 {s.shape[0]} 与信道发射天线数 {channel.n} 不匹配")
    if not (math.isfinite(sigma2) and sigma2 > 0):
        raise ConfigError(f"噪声方差必须为正: sigma2={sigma2}")

    rng = make_rng(seed, 0)
    w = complex_normal(rng, (channel.m,) + s.shape[1:], sigma2)
    return TransmitBlock(s=s, w=w, y=channel.H @ s + w)


def snr_to_sigma2(snr_db: float, n: int, variance: float = 1.0) -> float:
    """每接收天线 SNR = n·variance/σ² → σ²"""
    return n * variance / 10 ** (snr_db / 10)


def sigma2_to_snr(sigma2: float, n: int, variance: float = 1.0) -> float:
    return 10 * math.log10(n * variance / sigma2)
