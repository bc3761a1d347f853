"""蒙特卡洛统计指标"""
import numpy as np


def summarize_trials(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """按最后一维（试验）计算均值、样本标准差与标准误

    Args:
        samples: 形如 (..., trials) 的样本

    Returns:
        (mean, std, stderr)；只有一次试验时 std 与 stderr 取 0
    """
    samples = np.asarray(samples, dtype=float)
    trials = samples.shape[-1]
    mean = samples.mean(axis=-1)
    if trials < 2:
        zeros = np.zeros_like(mean)
        return mean, zeros, zeros
    std = samples.std(axis=-1, ddof=1)
    return mean, std, std / np.sqrt(trials)


def within_band(empirical: np.ndarray, theory: np.ndarray, stderr: np.ndarray,
                width: float = 3.0, floor: float = 0.0) -> np.ndarray:
    """逐点判断 |empirical - theory| <= width·stderr + floor"""
    empirical, theory, stderr = (np.asarray(a, dtype=float) for a in (empirical, theory, stderr))
    return np.abs(empirical - theory) <= width * stderr + floor

