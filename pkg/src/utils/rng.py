"""随机数流工具

所有随机量均由 PCG64 生成，种子经 SeedSequence 派生：
(seed, *keys) 唯一确定一个流，与调度顺序、线程数无关。
"""
import numpy as np

SeedLike = int | np.random.Generator | None

# 子流编号：同一次试验中符号与噪声使用独立的流
STREAM_CHANNEL = 0
STREAM_SYMBOLS = 1
STREAM_NOISE = 2


def make_rng(seed: SeedLike, *keys: int) -> np.random.Generator:
    """由种子与子流编号构造生成器

    Args:
        seed: 整数种子；传入 Generator 时原样返回（keys 被忽略）
        keys: 子流编号，例如 (trial_index, STREAM_NOISE)

    Returns:
        PCG64 生成器
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        return np.random.Generator(np.random.PCG64())
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *keys])))


def complex_normal(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    """圆对称复高斯 CN(0, variance)：先抽实部再抽虚部，各方差 variance/2"""
    scale = np.sqrt(variance / 2)
    real = rng.standard_normal(shape)
    imag = rng.standard_normal(shape)
    return scale * (real + 1j * imag)
