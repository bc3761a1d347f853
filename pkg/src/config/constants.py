"""业务常量配置"""
import math

# 调制方式 → 每维电平数的平方（M），星座归一化系数 1/sqrt(2(M-1)/3)
MODULATION_ORDER = {
    'QPSK': 4,
    'QAM16': 16,
    'QAM64': 64
}

CONSTELLATION_SCALE = {
    name: 1 / math.sqrt(2 * (order - 1) / 3) for name, order in MODULATION_ORDER.items()
}

# 时变正则 η(t)=1/(αt+ε)+σ² 中的小常数 ε
EPS_REG = 1e-8

# 欧拉仿真步长：默认值与"真值"仿真的上限
DEFAULT_DELTA = 0.005
GROUND_TRUTH_DELTA = 0.01
MAX_EULER_STEPS = 10_000_000

# ‖x‖ 超过 DIVERGENCE_FACTOR·‖x(0)‖ 即判定发散
DIVERGENCE_FACTOR = 1e8

# Gram 矩阵特征值截断容差（相对 max(1, λ₁)）
EIGEN_CLAMP_TOL = 1e-12

# 数值积分
QUAD_TOL = 1e-8
QUAD_MAX_DEPTH = 60
F_GRID_POINTS = 401

# 蒙特卡洛固定分块大小（与线程数无关，保证结果逐字节一致）
MC_CHUNK_SIZE = 64

# 实验类型 ↔ CLI 子命令
EXPERIMENT_KINDS = {
    'analytic-mse': 'eta-sweep',
    'simulate': 'analytic-vs-sim',
    'tode': 'tode-vs-ode',
    'grid-search': 'grid-search',
    'rkcd': 'mse-vs-Tk',
    'race': 'detector-race',
    'delta-study': 'delta-study',
    'ser': 'ser-vs-snr'
}

# 各实验 CSV 列定义（首列固定为 seed）
CSV_SCHEMAS = {
    'eta-sweep': ['seed', 'eta', 't', 'mse_theory', 'mse_asymptotic', 'mse_mmse'],
    'analytic-vs-sim': ['seed', 't', 'mse_theory', 'mse_empirical', 'stderr'],
    'tode-vs-ode': ['seed', 't', 'mse_tode_theory', 'mse_tode_empirical', 'stderr', 'mse_ode_theory'],
    'grid-search': ['seed', 'candidate', 'alpha', 'F', 'is_best'],
    'mse-vs-Tk': ['seed', 'k', 'T_k', 'mse_theory', 'mse_empirical', 'stderr'],
    'delta-study': ['seed', 'delta', 't', 'mse_theory', 'mse_empirical', 'stderr'],
    'detector-race': ['seed', 'solver', 'iteration', 'mse', 'stderr'],
    'detector-race-ser': ['seed', 'solver', 'ser'],
    'ser-vs-snr': ['seed', 'snr_db', 'sigma2', 'solver', 'ser', 'mse']
}

# 退出码
EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3
