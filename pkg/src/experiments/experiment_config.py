"""
实验配置

ExperimentSpec：一次实验的全部参数（字段名即配置文件 KEY 与 CLI 选项名）
配置文件为 KEY=VALUE 平面文本，由 python-dotenv 解析；列表值以逗号分隔
优先级：CLI > 配置文件 > 字段默认值
"""
import math
import typing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from dotenv import dotenv_values

from config.constants import DEFAULT_DELTA, EPS_REG, EXPERIMENT_KINDS, F_GRID_POINTS, QUAD_TOL
from config.settings import settings
from detection.detection_config import EulerConfig, Modulation, SystemConfig
from detection.errors import ConfigError
from detection.regularizer import (ConstantRegularizer, ExpDecayRegularizer, InverseDecayRegularizer, Regularizer,
                                   inverse_decay_candidates)
from detection.rkcd_detector import TK_MODES

CHANNEL_MODELS = ('iid', 'kronecker')
REGULARIZERS = ('constant', 'inverse', 'exp')
SOLVERS = ('euler', 'rkcd', 'exact-mmse')
X0_MODES = ('matched', 'zero')
MAX_SEED = 2 ** 64 - 1


@dataclass
class ExperimentSpec:
    """实验参数"""
    kind: str  # 实验类型，见 EXPERIMENT_KINDS

    # 系统
    n: int = 8  # 发射天线数
    m: int = 8  # 接收天线数
    sigma2: float = 1.0  # 噪声方差
    modulation: str = 'QPSK'

    # 信道
    channel: str = 'iid'  # iid / kronecker
    variance: str = '1'  # iid 元素方差，数值或 '1/m'
    rho: float = 0.0  # Kronecker 相关系数

    # 正则
    regularizer: str = 'constant'  # constant / inverse / exp
    eta: float = 0.5
    etas: list[float] = field(default_factory=lambda: [0.1, 0.5, 1.0, 2.0])  # eta-sweep 扫描值
    alpha: float = 500.0
    alphas: list[float] = field(default_factory=lambda: [1.0, 10.0, 50.0, 100.0])  # grid-search 候选
    beta: float = 10.0
    gamma: float = 5.0
    eps_reg: float = EPS_REG

    # 欧拉仿真
    delta: float = DEFAULT_DELTA
    deltas: list[float] = field(default_factory=lambda: [0.05, 0.01, 0.005])  # delta-study 步长
    t_max: float = 3.0
    record_every: float = 0.05  # 记录时间间隔
    eta_sampling: str = 'average'

    # 蒙特卡洛
    trials: int = 1000
    seed: int = 0
    threads: int = settings.threads

    # 离散检测器
    solvers: list[str] = field(default_factory=lambda: ['euler', 'rkcd', 'exact-mmse'])
    eps_damp: float = 2.0  # RKCD 阻尼常数 ε
    iterations: int = 100  # 迭代预算 J
    s: Optional[int] = None  # 直接指定阶段数
    h: Optional[float] = None  # 直接指定步长
    x0: str = 'matched'  # matched / zero
    tk_mode: str = 'stage'
    snr_db: list[float] = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0, 20.0])

    # 泛函与积分
    T: float = 0.8
    quad_tol: float = QUAD_TOL
    n_points: int = F_GRID_POINTS

    out: str = ''  # 输出 CSV 路径，默认 <output_dir>/<kind>.csv

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------ 校验
    def validate(self):
        """在任何计算开始前校验全部字段"""
        if self.kind not in EXPERIMENT_KINDS.values():
            raise ConfigError(f"未知实验类型: {self.kind!r}，可选 {sorted(EXPERIMENT_KINDS.values())}")
        for name in ('n', 'm', 'trials', 'threads', 'iterations'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} 必须为正整数: {getattr(self, name)}")
        for name in ('sigma2', 'eta', 'alpha', 'beta', 'gamma', 'eps_reg', 'delta', 't_max', 'record_every',
                     'eps_damp', 'T', 'quad_tol'):
            _positive(name, getattr(self, name))
        for name in ('etas', 'alphas', 'deltas'):
            values = getattr(self, name)
            if not values:
                raise ConfigError(f"{name} 不能为空")
            for value in values:
                _positive(name, value)
        if not self.snr_db or not all(math.isfinite(v) for v in self.snr_db):
            raise ConfigError(f"snr_db 必须为非空有限数列: {self.snr_db}")

        Modulation.parse(self.modulation)
        _choice('channel', self.channel, CHANNEL_MODELS)
        _choice('regularizer', self.regularizer, REGULARIZERS)
        _choice('x0', self.x0, X0_MODES)
        _choice('tk_mode', self.tk_mode, TK_MODES)
        _choice('eta_sampling', self.eta_sampling, ('average', 'left'))
        for solver in self.solvers:
            _choice('solvers', solver, SOLVERS)
        if len(set(self.solvers)) != len(self.solvers):
            raise ConfigError(f"solvers 有重复: {self.solvers}")

        if not (0 <= self.rho < 1):
            raise ConfigError(f"相关系数须在 [0, 1) 内: rho={self.rho}")
        self.channel_variance  # 解析 '1/m' 或数值
        if not (0 <= self.seed <= MAX_SEED):
            raise ConfigError(f"seed 须为 64 位无符号整数: {self.seed}")
        if self.s is not None and self.s < 1:
            raise ConfigError(f"阶段数必须 >= 1: s={self.s}")
        if self.h is not None:
            _positive('h', self.h)
        if self.n_points < 3 or self.n_points % 2 == 0:
            raise ConfigError(f"n_points 须为 >= 3 的奇数: {self.n_points}")

        if self.kind == 'detector-race' and len(self.solvers) < 2:
            raise ConfigError(f"detector-race 至少需要两个求解器: {self.solvers}")
        if self.kind == 'analytic-vs-sim' and self.regularizer != 'constant':
            raise ConfigError("analytic-vs-sim 只对应常数 η，时变正则请使用 tode")
        if self.kind == 'mse-vs-Tk' and self.x0 != 'matched':
            raise ConfigError("mse-vs-Tk 只在 x0=matched 时与理论 MSE(T_k) 对应")
        if self.kind in ('analytic-vs-sim', 'tode-vs-ode'):
            self.euler_config()
        if self.kind == 'delta-study':
            for delta in self.deltas:
                self.euler_config(delta)

    # ------------------------------------------------------------ 派生对象
    @property
    def channel_variance(self) -> float:
        """iid 信道元素方差；'1/m' 表示按接收天线数归一化"""
        text = str(self.variance).strip()
        if text.replace(' ', '').lower() == '1/m':
            return 1.0 / self.m
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(f"variance 须为正数或 '1/m': {self.variance!r}") from None
        _positive('variance', value)
        return value

    def system(self, sigma2: Optional[float] = None) -> SystemConfig:
        return SystemConfig(self.n, self.m, self.sigma2 if sigma2 is None else sigma2,
                            Modulation.parse(self.modulation))

    def record_stride(self, delta: float) -> int:
        """记录间隔折算为步数，须为步长的整数倍"""
        ratio = self.record_every / delta
        stride = round(ratio)
        if stride < 1 or abs(ratio - stride) > 1e-9 * max(1.0, ratio):
            raise ConfigError(f"record_every={self.record_every} 不是步长 δ={delta} 的整数倍")
        return stride

    def euler_config(self, delta: Optional[float] = None) -> EulerConfig:
        delta = self.delta if delta is None else delta
        return EulerConfig(delta=delta, t_max=self.t_max, record_stride=self.record_stride(delta),
                           eta_sampling=self.eta_sampling)

    def build_regularizer(self) -> Regularizer:
        if self.regularizer == 'inverse':
            return InverseDecayRegularizer(self.alpha, self.sigma2, self.eps_reg)
        if self.regularizer == 'exp':
            return ExpDecayRegularizer(self.beta, self.gamma, self.sigma2)
        return ConstantRegularizer(self.eta)

    def candidates(self) -> list[InverseDecayRegularizer]:
        return inverse_decay_candidates(self.alphas, self.sigma2, self.eps_reg)

    @property
    def out_path(self) -> Path:
        return Path(self.out) if self.out else Path(settings.output_dir) / f"{self.kind}.csv"

    def to_dict(self) -> dict:
        return asdict(self)


def _positive(name: str, value: float):
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise ConfigError(f"{name} 必须为有限正数: {value}")


def _choice(name: str, value: str, options: tuple):
    if value not in options:
        raise ConfigError(f"{name} 取值非法: {value!r}，可选 {list(options)}")


# ---------------------------------------------------------------- 解析

FIELD_TYPES = typing.get_type_hints(ExperimentSpec)
FIELD_NAMES = [f.name for f in fields(ExperimentSpec)]
_KEY_LOOKUP = {name.lower(): name for name in FIELD_NAMES}


def parse_value(name: str, raw):
    """把字符串按字段类型转换；非字符串原样返回"""
    if name not in FIELD_TYPES:
        raise ConfigError(f"未知配置项: {name!r}")
    if not isinstance(raw, str):
        return raw

    target = FIELD_TYPES[name]
    text = raw.strip()
    optional = type(None) in typing.get_args(target)
    if optional:
        if text.lower() in ('', 'none'):
            return None
        target = next(a for a in typing.get_args(target) if a is not type(None))

    try:
        if typing.get_origin(target) is list:
            item_type = typing.get_args(target)[0]
            return [item_type(item.strip()) for item in text.split(',') if item.strip()]
        if target is int:
            return int(text)
        if target is float:
            return float(text)
    except ValueError:
        raise ConfigError(f"配置项 {name} 无法解析为 {target}: {raw!r}") from None
    return text


def read_config_file(path) -> dict:
    """读取 KEY=VALUE 配置文件，KEY 不区分大小写"""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"配置文件不存在: {path}")
    values = {}
    for key, raw in dotenv_values(path).items():
        name = _KEY_LOOKUP.get(key.strip().lower())
        if name is None:
            raise ConfigError(f"配置文件 {path} 含未知配置项: {key!r}")
        values[name] = parse_value(name, '' if raw is None else raw)
    return values


def load_spec(kind: str, config_path=None, overrides: Optional[dict] = None) -> ExperimentSpec:
    """合并默认值、配置文件与 CLI 覆盖项，构造并校验 ExperimentSpec

    Args:
        kind: 实验类型（由子命令决定）
        config_path: KEY=VALUE 配置文件，可选
        overrides: CLI 覆盖项 {字段名: 值或字符串}，值为 None 的项忽略
    """
    values = read_config_file(config_path) if config_path else {}
    file_kind = values.pop('kind', None)
    if file_kind is not None and file_kind != kind:
        raise ConfigError(f"配置文件中的 kind={file_kind!r} 与子命令对应的 {kind!r} 不一致")
    for name, raw in (overrides or {}).items():
        if raw is not None:
            values[name] = parse_value(name, raw)
    return ExperimentSpec(kind=kind, **values)
