"""正则参数 η / η(t) 及其积分 ξ(t)=∫₀ᵗ η(s)ds 的闭式"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from config.constants import EPS_REG
from detection.errors import ConfigError


def _positive(name: str, value: float):
    if not (math.isfinite(value) and value > 0):
        raise ConfigError(f"{name} 必须为有限正数: {value}")


class Regularizer(ABC):
    """正则参数基类"""

    @abstractmethod
    def eta(self, t):
        """η(t)"""

    @abstractmethod
    def xi(self, t):
        """ξ(t) = ∫₀ᵗ η(s) ds"""

    @property
    @abstractmethod
    def label(self) -> str:
        """报告中使用的简短名称"""

    @property
    def is_constant(self) -> bool:
        return False


@dataclass(frozen=True)
class ConstantRegularizer(Regularizer):
    """常数 η"""
    value: float

    def __post_init__(self):
        _positive('eta', self.value)

    def eta(self, t):
        return self.value + 0.0 * np.asarray(t, dtype=float)

    def xi(self, t):
        return self.value * np.asarray(t, dtype=float)

    @property
    def label(self) -> str:
        return f"eta={self.value:g}"

    @property
    def is_constant(self) -> bool:
        return True


@dataclass(frozen=True)
class InverseDecayRegularizer(Regularizer):
    """η(t) = 1/(αt+ε) + σ²"""
    alpha: float
    sigma2: float
    eps_reg: float = EPS_REG

    def __post_init__(self):
        _positive('alpha', self.alpha)
        _positive('sigma2', self.sigma2)
        _positive('eps_reg', self.eps_reg)

    def eta(self, t):
        t = np.asarray(t, dtype=float)
        return 1.0 / (self.alpha * t + self.eps_reg) + self.sigma2

    def xi(self, t):
        t = np.asarray(t, dtype=float)
        return np.log1p(self.alpha * t / self.eps_reg) / self.alpha + self.sigma2 * t

    @property
    def label(self) -> str:
        return f"alpha={self.alpha:g}"


@dataclass(frozen=True)
class ExpDecayRegularizer(Regularizer):
    """η(t) = β·exp(-γt) + σ²"""
    beta: float
    gamma: float
    sigma2: float

    def __post_init__(self):
        _positive('beta', self.beta)
        _positive('gamma', self.gamma)
        _positive('sigma2', self.sigma2)

    def eta(self, t):
        t = np.asarray(t, dtype=float)
        return self.beta * np.exp(-self.gamma * t) + self.sigma2

    def xi(self, t):
        t = np.asarray(t, dtype=float)
        return self.beta / self.gamma * -np.expm1(-self.gamma * t) + self.sigma2 * t

    @property
    def label(self) -> str:
        return f"beta={self.beta:g},gamma={self.gamma:g}"


def inverse_decay_candidates(alphas: list[float], sigma2: float,
                             eps_reg: float = EPS_REG) -> list[InverseDecayRegularizer]:
    """网格搜索候选 η(t)=1/(αt+ε)+σ²"""
    return [InverseDecayRegularizer(alpha, sigma2, eps_reg) for alpha in alphas]
