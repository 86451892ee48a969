"""
异常定义

每个异常带有稳定的错误码和命令行退出码，可转换为 ErrorResponse。
"""

from datetime import datetime
from typing import Optional, Tuple

from ldpbd.models import ErrorResponse


class LdpbdError(Exception):
    """所有领域错误的基类"""

    exit_code = 1

    def __init__(self, message: str, detail: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.detail = detail

    @property
    def error(self) -> str:
        return type(self).__name__

    def to_response(self) -> ErrorResponse:
        return ErrorResponse(
            error=self.error,
            message=self.message,
            detail=self.detail,
            timestamp=datetime.now(),
        )


class UsageError(LdpbdError):
    """参数或输入格式错误"""

    exit_code = 2


class InvalidParameter(UsageError):
    pass


class MalformedInput(UsageError):
    pass


class ProtocolMismatch(UsageError):
    pass


class RowLimitExceeded(UsageError):
    def __init__(self, rows: int, limit: int):
        super().__init__(
            f"区组数 {rows} 超过上限 {limit}",
            detail="可通过环境变量 LDPBD_ROW_LIMIT 调整",
        )
        self.rows = rows
        self.limit = limit


# 设计错误

class DesignError(LdpbdError):
    pass


class InvalidIncidence(DesignError):
    pass


class DuplicateBlocks(DesignError):
    def __init__(self, first: int, second: int):
        super().__init__(f"区组 {first} 与区组 {second} 相同")
        self.rows = (first, second)


class PointOutOfRange(DesignError):
    def __init__(self, point: int, v: int):
        super().__init__(f"点 {point} 不在 [0, {v}) 内")
        self.point = point


class NonConstantRowSum(DesignError):
    def __init__(self, row: int, value: int, expected: int):
        super().__init__(f"第 {row} 行的行和为 {value}，期望 {expected}")
        self.row = row
        self.value = value


class NonConstantColumnSum(DesignError):
    def __init__(self, column: int, value: int, expected: int):
        super().__init__(f"第 {column} 列的列和为 {value}，期望 {expected}")
        self.column = column
        self.value = value


class UnbalancedPairs(DesignError):
    def __init__(self, pair: Tuple[int, int], count: int, expected: int):
        super().__init__(
            f"点对 {{{pair[0]},{pair[1]}}} 出现在 {count} 个区组中，期望 λ = {expected}",
        )
        self.pair = pair
        self.count = count
        self.expected = expected


class FisherViolation(DesignError):
    def __init__(self, b: int, v: int):
        super().__init__(f"λ ≥ 1 时需要 b ≥ v，实际 b = {b}, v = {v}")


# 机制与估计错误

class DimensionMismatch(LdpbdError):
    pass


class InvalidDistribution(LdpbdError):
    pass


class ZeroProbability(LdpbdError):
    pass


class InfiniteRatio(LdpbdError):
    pass


class SingularGram(LdpbdError):
    def __init__(self, condition: float):
        super().__init__("Gram 矩阵奇异", detail=f"条件数估计 {condition:.3e}")
        self.condition = condition


class CountMismatch(LdpbdError):
    def __init__(self, total: int, n: int):
        super().__init__(f"计数之和 {total} 与 n = {n} 不一致")


class InvalidCounts(LdpbdError):
    pass


class NonPositiveBound(LdpbdError):
    pass


# 校验器错误

class MoreThanTwoValues(LdpbdError):
    def __init__(self, value: float, values: Tuple[float, float]):
        super().__init__(
            f"TPM 含有第三个取值 {value!r}",
            detail=f"已有取值 {values[0]!r}, {values[1]!r}",
        )
        self.value = value


class NonPositiveEntry(LdpbdError):
    pass
