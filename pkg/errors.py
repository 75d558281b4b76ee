"""
regret-lab 的异常层级

所有模块抛出的错误都派生自 RegretLabError，同时继承对应的内置类型，
调用方既可以按 ValueError / RuntimeError 捕获，也可以统一捕获 RegretLabError。
"""

from typing import Iterable, Optional


class RegretLabError(Exception):
    """所有 regret-lab 错误的基类"""


class ValidationError(RegretLabError, ValueError):
    """输入数据不合法：博弈张量、单纯形上的策略、非有限数值等"""


class DimensionMismatchError(ValidationError):
    """策略/权重维度与博弈不一致"""

    def __init__(self, what: str, expected, actual, player: Optional[int] = None):
        self.what = what
        self.player = player
        self.expected = expected
        self.actual = actual
        who = f"player {player}" if player is not None else "profile"
        super().__init__(f"{what} dimension mismatch for {who}: expected {expected}, got {actual}")


class ArgumentError(RegretLabError, ValueError):
    """标量参数越界（eps < 0, eta <= 0, n < 2 等）"""


class DomainError(ArgumentError):
    """点不在正则项的定义域内（熵正则要求严格正的坐标）"""


class ConfigurationError(RegretLabError, ValueError):
    """运行配置错误：未知键、取值越界、学习率递增、输出路径不可写"""

    def __init__(self, message: str, keys: Iterable[str] = ()):
        self.keys = tuple(keys)
        super().__init__(message)


class DiagnosticUnavailableError(RegretLabError, RuntimeError):
    """轨迹缺少计算某个证书所需的记录（例如 OFTRL 没有锚点 g）"""


class CorruptionBoundError(RegretLabError, RuntimeError):
    """内置腐蚀生成器累计的 C_i 超过了它的解析上界"""
