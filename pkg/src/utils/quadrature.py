"""数值积分：自适应 Simpson（向量值被积函数）与固定网格复合 Simpson"""
from collections.abc import Callable

import numpy as np
from scipy.integrate import simpson

from config.constants import QUAD_MAX_DEPTH, QUAD_TOL
from detection.errors import ConfigError, QuadratureError


def adaptive_simpson(f: Callable[[float], np.ndarray],
                     a: float,
                     b: float,
                     tol: float = QUAD_TOL,
                     max_depth: int = QUAD_MAX_DEPTH) -> tuple[np.ndarray, float]:
    """自适应 Simpson 积分

    被积函数可以返回数组（各分量共用同一组节点），误差判据取各分量的最大绝对误差。

    Args:
        f: 被积函数 u -> 标量或数组
        a: 下限
        b: 上限
        tol: 绝对误差容限，每次二分时减半
        max_depth: 最大递归深度

    Returns:
        (积分值, 误差估计)

    Raises:
        QuadratureError: 达到最大深度仍未满足容限
    """
    if a == b:
        return np.zeros_like(np.asarray(f(a), dtype=float)), 0.0
    if a > b:
        value, error = adaptive_simpson(f, b, a, tol, max_depth)
        return -value, error

    failures = []

    def _simpson(fa, fm, fb, h):
        return h / 3.0 * (fa + 4.0 * fm + fb)

    def _adaptive(lo, hi, f_lo, f_mid, f_hi, whole, depth, tol):
        mid = (lo + hi) / 2.0
        h = (hi - lo) / 2.0
        f_lm = f((lo + mid) / 2.0)
        f_rm = f((mid + hi) / 2.0)

        left = _simpson(f_lo, f_lm, f_mid, h / 2.0)
        right = _simpson(f_mid, f_rm, f_hi, h / 2.0)
        delta = (left + right - whole) / 15.0
        error = float(np.max(np.abs(delta)))

        if error < tol:
            # Richardson 外推
            return left + right + delta, error
        if depth >= max_depth:
            failures.append((lo, hi, error))
            return left + right + delta, error

        left_value, left_error = _adaptive(lo, mid, f_lo, f_lm, f_mid, left, depth + 1, tol / 2.0)
        right_value, right_error = _adaptive(mid, hi, f_mid, f_rm, f_hi, right, depth + 1, tol / 2.0)
        return left_value + right_value, left_error + right_error

    f_a = np.asarray(f(a), dtype=float)
    f_b = np.asarray(f(b), dtype=float)
    f_m = np.asarray(f((a + b) / 2.0), dtype=float)
    whole = _simpson(f_a, f_m, f_b, (b - a) / 2.0)
    value, error = _adaptive(a, b, f_a, f_m, f_b, whole, 0, tol)

    if failures:
        lo, hi, worst = max(failures, key=lambda item: item[2])
        raise QuadratureError(
            f"自适应 Simpson 在 [{a}, {b}] 上未达到容限 {tol:g}："
            f"{len(failures)} 个子区间触及深度 {max_depth}，最差 [{lo:.3g}, {hi:.3g}] 误差 {worst:.3g}")
    return value, error


def composite_simpson(f: Callable[[float], float], a: float, b: float,
                      n_points: int) -> float:
    """固定网格复合 Simpson（n_points 取奇数，区间数为偶数）"""
    if n_points < 3 or n_points % 2 == 0:
        raise ConfigError(f"n_points 需为不小于 3 的奇数，当前 {n_points}")
    grid = np.linspace(a, b, n_points)
    values = np.array([f(t) for t in grid])
    return float(simpson(values, x=grid))
