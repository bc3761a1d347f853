"""
检测系统配置

系统参数（天线数、噪声方差、调制方式）
欧拉仿真参数（步长、时域长度、记录间隔、η 采样方式）
"""
import math
from dataclasses import dataclass
from enum import Enum

from config.constants import DEFAULT_DELTA, MAX_EULER_STEPS
from detection.errors import ConfigError


class Modulation(str, Enum):
    """调制方式"""
    QPSK = 'QPSK'
    QAM16 = 'QAM16'
    QAM64 = 'QAM64'

    @classmethod
    def parse(cls, value: 'str | Modulation') -> 'Modulation':
        """解析调制标签，兼容 16QAM / 64QAM 写法"""
        if isinstance(value, cls):
            return value
        tag = str(value).strip().upper().replace('-', '')
        aliases = {'4QAM': 'QPSK', 'QAM4': 'QPSK', '16QAM': 'QAM16', '64QAM': 'QAM64'}
        tag = aliases.get(tag, tag)
        try:
            return cls(tag)
        except ValueError:
            raise ConfigError(f"未知调制方式: {value!r}，可选 {[m.value for m in cls]}") from None


@dataclass(frozen=True)
class SystemConfig:
    """MIMO 系统参数"""
    n: int  # 发射天线数
    m: int  # 接收天线数
    sigma2: float  # 噪声方差 σ²
    modulation: Modulation = Modulation.QPSK

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ConfigError(f"天线数必须为正整数: n={self.n}, m={self.m}")
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ConfigError(f"噪声方差必须为正: sigma2={self.sigma2}")
        object.__setattr__(self, 'modulation', Modulation.parse(self.modulation))


@dataclass(frozen=True)
class EulerConfig:
    """显式欧拉仿真参数"""
    delta: float = DEFAULT_DELTA  # 步长 δ
    t_max: float = 3.0  # 时域长度
    record_stride: int = 1  # 每隔 k 步记录一次
    eta_sampling: str = 'average'  # 'average': (ξ(t_k)-ξ(t_{k-1}))/δ；'left': η(t_{k-1})
    max_steps: int = MAX_EULER_STEPS

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ConfigError(f"步长必须为正: delta={self.delta}")
        if not (self.t_max > 0 and math.isfinite(self.t_max)):
            raise ConfigError(f"时域长度必须为正: t_max={self.t_max}")
        if self.record_stride < 1:
            raise ConfigError(f"记录间隔必须为正整数: record_stride={self.record_stride}")
        if self.eta_sampling not in ('average', 'left'):
            raise ConfigError(f"eta_sampling 只能是 'average' 或 'left': {self.eta_sampling!r}")
        if self.n_steps > self.max_steps:
            raise ConfigError(f"步数 {self.n_steps} 超过上限 {self.max_steps}，请增大 delta 或减小 t_max")

    @property
    def n_steps(self) -> int:
        """总步数 t_max/δ（四舍五入）"""
        return max(1, int(round(self.t_max / self.delta)))
