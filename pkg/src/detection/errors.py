"""检测库异常定义"""


class DetectionError(Exception):
    """检测库异常基类"""


class ConfigError(DetectionError, ValueError):
    """参数或配置非法（CLI 退出码 2）"""


class NumericalError(DetectionError, ArithmeticError):
    """数值计算失败（CLI 退出码 3）"""


class DivergenceError(NumericalError):
    """迭代发散或出现非有限值"""


class QuadratureError(NumericalError):
    """数值积分未收敛"""
