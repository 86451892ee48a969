import itertools
import math
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import hadamard

from ldpbd.config import settings
from ldpbd.logger import logger
from ldpbd.models import DesignName, DesignParams, Polarity
from ldpbd.exceptions import (
    DuplicateBlocks,
    FisherViolation,
    InvalidIncidence,
    InvalidParameter,
    NonConstantColumnSum,
    NonConstantRowSum,
    PointOutOfRange,
    RowLimitExceeded,
    UnbalancedPairs,
)


# b×v 的 0/1 矩阵，A[i][j] = 1 当且仅当点 j 在区组 i 中
IncidenceMatrix = np.ndarray
BlockList = List[List[int]]


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def is_prime(n: int) -> bool:
    """试除法判断素数"""
    if n < 2:
        return False
    for x in range(2, math.isqrt(n) + 1):
        if n % x == 0:
            return False
    return True


def prime_power_base(n: int) -> Optional[int]:
    """n = p^m (m ≥ 2) 时返回 p，否则返回 None"""
    for p in range(2, math.isqrt(n) + 1):
        if n % p == 0:
            while n % p == 0:
                n //= p
            return p if n == 1 else None
    return None


class DesignService:
    """平衡不完全区组设计的构造与校验"""

    def verify_design(self, A: IncidenceMatrix) -> DesignParams:
        """
        校验关联矩阵是否为 BIBD

        Args:
            A: b×v 的 0/1 关联矩阵

        Returns:
            DesignParams: 提取出的 (v, b, r, k, λ)
        """
        A = self._as_incidence(A)
        b, v = A.shape
        self._check_distinct_rows(A)

        row_sums = A.sum(axis=1)
        k = int(row_sums[0])
        bad = np.flatnonzero(row_sums != k)
        if bad.size:
            raise NonConstantRowSum(int(bad[0]), int(row_sums[bad[0]]), k)
        if k == 0:
            raise InvalidIncidence("区组不能为空")

        column_sums = A.sum(axis=0)
        r = int(column_sums[0])
        bad = np.flatnonzero(column_sums != r)
        if bad.size:
            raise NonConstantColumnSum(int(bad[0]), int(column_sums[bad[0]]), r)

        # A'A 的非对角元就是每对点共同出现的区组数
        gram = A.T @ A
        rows, cols = np.triu_indices(v, 1)
        pair_counts = gram[rows, cols]
        lam = int(pair_counts[0])
        bad = np.flatnonzero(pair_counts != lam)
        if bad.size:
            i = bad[0]
            raise UnbalancedPairs((int(rows[i]), int(cols[i])), int(pair_counts[i]), lam)

        if b * k != v * r or r * (k - 1) != lam * (v - 1):
            raise InvalidIncidence(f"计数恒等式不成立: (v,b,r,k,λ) = ({v},{b},{r},{k},{lam})")
        if lam >= 1 and b < v:
            raise FisherViolation(b, v)

        params = DesignParams(v=v, b=b, r=r, k=k, lambda_=lam)
        logger.debug(f"设计校验通过: {params.as_tuple()}")
        return params

    def trivial_design(self, v: int) -> IncidenceMatrix:
        """平凡设计 I_v，对应 k-RR"""
        if v < 2:
            raise InvalidParameter(f"平凡设计需要 v ≥ 2，实际 v = {v}")
        self._check_row_limit(v)
        return _freeze(np.eye(v, dtype=np.uint8))

    def complete_design(self, v: int, k: int) -> IncidenceMatrix:
        """全部 k 元子集构成的设计（子集选择协议），按字典序排列"""
        if v < 2 or not 1 <= k <= v - 1:
            raise InvalidParameter(f"完全设计需要 1 ≤ k ≤ v-1，实际 v = {v}, k = {k}")
        rows = math.comb(v, k)
        self._check_row_limit(rows)

        A = np.zeros((rows, v), dtype=np.uint8)
        for i, subset in enumerate(itertools.combinations(range(v), k)):
            A[i, list(subset)] = 1
        logger.info(f"构造完全设计: v={v}, k={k}, b={rows}")
        return _freeze(A)

    def hadamard_design(self, t: int, polarity: Polarity = Polarity.MINUS) -> IncidenceMatrix:
        """
        Sylvester 型 Hadamard 矩阵去掉首行首列后得到的对称设计

        Args:
            t: 阶数为 2^t
            polarity: 取 +1 (plus) 或 -1 (minus) 的位置作为关联
        """
        if t < 2:
            raise InvalidParameter(f"Hadamard 设计需要 t ≥ 2，实际 t = {t}")
        self._check_row_limit(2 ** t - 1)
        polarity = Polarity(polarity)

        H = hadamard(2 ** t)[1:, 1:]
        sign = 1 if polarity == Polarity.PLUS else -1
        return _freeze((H == sign).astype(np.uint8))

    def projective_design(self, p: int, t: int) -> IncidenceMatrix:
        """
        素数域 F_p 上 t 维向量空间的点-超平面设计

        点与区组都用射影类的规范代表元（首个非零坐标为 1）按字典序编号，
        点积模 p 为 0 时关联。
        """
        if not is_prime(p):
            base = prime_power_base(p) if p > 1 else None
            if base is not None:
                raise InvalidParameter(f"{p} = {base}^m 是素数幂，仅支持素数域")
            raise InvalidParameter(f"p = {p} 不是素数")
        if t < 2:
            raise InvalidParameter(f"射影设计需要 t ≥ 2，实际 t = {t}")
        v = (p ** t - 1) // (p - 1)
        self._check_row_limit(v)

        points = np.array(
            [
                vector
                for vector in itertools.product(range(p), repeat=t)
                if next((x for x in vector if x), 0) == 1
            ],
            dtype=np.int64,
        )
        A = ((points @ points.T) % p == 0).astype(np.uint8)
        logger.info(f"构造射影设计: p={p}, t={t}, v={v}")
        return _freeze(A)

    def cyclic_design(self, v: int, base_block: Sequence[int]) -> IncidenceMatrix:
        """基区组模 v 循环展开"""
        if v < 2:
            raise InvalidParameter(f"循环设计需要 v ≥ 2，实际 v = {v}")
        if not base_block:
            raise InvalidParameter("基区组不能为空")
        self._check_row_limit(v)
        blocks = [sorted((x + shift) % v for x in base_block) for shift in range(v)]
        return self.incidence_from_blocks(blocks, v)

    def fano_design(self) -> IncidenceMatrix:
        """Fano 平面: {1,2,4} 模 7 循环展开"""
        return self.cyclic_design(7, (1, 2, 4))

    def blocks_from_incidence(self, A: IncidenceMatrix) -> BlockList:
        """关联矩阵转区组列表"""
        A = self._as_incidence(A)
        self._check_distinct_rows(A)
        return [np.flatnonzero(row).tolist() for row in A]

    def incidence_from_blocks(self, blocks: Sequence[Sequence[int]], v: int) -> IncidenceMatrix:
        """区组列表转关联矩阵"""
        if v < 1:
            raise InvalidParameter(f"点数必须为正，实际 v = {v}")
        self._check_row_limit(len(blocks))

        A = np.zeros((len(blocks), v), dtype=np.uint8)
        seen = {}
        for i, block in enumerate(blocks):
            members = [int(x) for x in block]
            for point in members:
                if not 0 <= point < v:
                    raise PointOutOfRange(point, v)
            if len(set(members)) != len(members):
                raise InvalidIncidence(f"区组 {i} 含有重复的点")
            key = frozenset(members)
            if key in seen:
                raise DuplicateBlocks(seen[key], i)
            seen[key] = i
            A[i, members] = 1
        return _freeze(A)

    def build_design(
        self,
        name: DesignName,
        v: Optional[int] = None,
        k: Optional[int] = None,
        t: Optional[int] = None,
        p: Optional[int] = None,
        polarity: Polarity = Polarity.MINUS,
        base: Optional[Sequence[int]] = None,
    ) -> IncidenceMatrix:
        """按名称构造设计"""
        name = DesignName(name)

        def need(value, flag):
            if value is None:
                raise InvalidParameter(f"设计 {name.value} 缺少参数 --{flag}")
            return value

        if name == DesignName.FANO:
            return self.fano_design()
        if name == DesignName.TRIVIAL:
            return self.trivial_design(need(v, "v"))
        if name == DesignName.COMPLETE:
            return self.complete_design(need(v, "v"), need(k, "k"))
        if name == DesignName.HADAMARD:
            return self.hadamard_design(need(t, "t"), polarity)
        if name == DesignName.PROJECTIVE:
            return self.projective_design(need(p, "p"), need(t, "t"))
        return self.cyclic_design(need(v, "v"), need(base, "base"))

    def _as_incidence(self, A) -> np.ndarray:
        A = np.asarray(A)
        if A.ndim != 2:
            raise InvalidIncidence(f"关联矩阵必须是二维的，实际维数 {A.ndim}")
        b, v = A.shape
        if b < 1 or v < 2:
            raise InvalidIncidence(f"关联矩阵至少需要 1 行 2 列，实际 {b}×{v}")
        if not np.isin(A, (0, 1)).all():
            raise InvalidIncidence("关联矩阵只能包含 0 和 1")
        return A.astype(np.int64)

    def _check_distinct_rows(self, A: np.ndarray):
        seen = {}
        for i, row in enumerate(A):
            key = row.tobytes()
            if key in seen:
                raise DuplicateBlocks(seen[key], i)
            seen[key] = i

    def _check_row_limit(self, rows: int):
        if rows > settings.row_limit:
            logger.warning(f"拒绝构造: 区组数 {rows} 超过上限 {settings.row_limit}")
            raise RowLimitExceeded(rows, settings.row_limit)


# 全局服务实例
design_service = DesignService()
