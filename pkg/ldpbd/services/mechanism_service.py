import math
from typing import Tuple

import numpy as np

from ldpbd.config import settings
from ldpbd.logger import logger
from ldpbd.models import MechanismSpec, PrivacyParam
from ldpbd.exceptions import (
    DimensionMismatch,
    InfiniteRatio,
    InvalidDistribution,
    InvalidParameter,
    ZeroProbability,
)
from ldpbd.services.design_service import IncidenceMatrix, design_service


# b×v 列随机矩阵，Q[i][j] = Pr[输出 i | 输入 j]
TransitionMatrix = np.ndarray
Distribution = np.ndarray


def comm_bits(b: int) -> int:
    """⌈log₂ b⌉，整数运算"""
    return (b - 1).bit_length()


def inverse_cdf(cdf: np.ndarray, draws) -> np.ndarray:
    """在累积分布上做逆变换采样，落在尾部舍入误差外的抽样截到最后一个概率为正的结果"""
    index = np.searchsorted(cdf, draws, side="right")
    last = int(np.flatnonzero(np.diff(cdf, prepend=0.0) > 0)[-1])
    return np.minimum(index, last)


def as_distribution(mu, size: int = None) -> Distribution:
    """校验并返回概率向量"""
    mu = np.asarray(mu, dtype=np.float64)
    if mu.ndim != 1:
        raise InvalidDistribution("分布必须是一维向量")
    if size is not None and mu.shape[0] != size:
        raise DimensionMismatch(f"分布长度 {mu.shape[0]} 与期望 {size} 不一致")
    if (mu < 0).any() or not np.isfinite(mu).all():
        raise InvalidDistribution("分布含有负数或非有限值")
    if abs(mu.sum() - 1.0) > settings.structure_tol * max(1, mu.shape[0]):
        raise InvalidDistribution(f"分布之和为 {mu.sum()!r}，不等于 1")
    return mu


def uniform(size: int) -> Distribution:
    return np.full(size, 1.0 / size)


class MechanismService:
    """区组设计随机响应机制"""

    def build_mechanism(self, A: IncidenceMatrix, eps: PrivacyParam) -> Tuple[TransitionMatrix, MechanismSpec]:
        """
        由设计和隐私参数构造转移概率矩阵

        Q[i][j] = p·e^ε 若区组 i 含点 j，否则为 p，其中 p = 1/(r(e^ε-1)+b)

        Args:
            A: 关联矩阵，需通过 verify_design
            eps: 隐私参数

        Returns:
            (Q, spec): 转移概率矩阵与机制参数
        """
        params = design_service.verify_design(A)
        e = eps.e_eps
        p = 1.0 / (params.r * (e - 1.0) + params.b)
        large = p * e

        Q = np.where(np.asarray(A) == 1, large, p)
        Q.setflags(write=False)

        spec = MechanismSpec(
            epsilon=eps.epsilon,
            design=params,
            p=p,
            p0=1.0 / (params.v + params.k * (e - 1.0)),
            large=large,
            small=p,
            comm_bits=comm_bits(params.b),
        )
        logger.info(f"构造机制: (v,b,r,k,λ)={params.as_tuple()}, ε={eps.epsilon!r}, p={p!r}")
        return Q, spec

    def ldp_ratio(self, Q: TransitionMatrix) -> float:
        """每个输出下跨输入的最大/最小概率比，取所有输出的最大值"""
        Q = self._as_tpm(Q)
        row_min = Q.min(axis=1)
        if (row_min <= 0).any():
            raise InfiniteRatio(f"第 {int(np.argmax(row_min <= 0))} 行含有零概率，比值无穷大")
        return float((Q.max(axis=1) / row_min).max())

    def induced_distribution(self, Q: TransitionMatrix, mu) -> Distribution:
        """输出分布 ν = Qμ"""
        Q = self._as_tpm(Q)
        mu = as_distribution(mu, Q.shape[1])
        return Q @ mu

    def trace_objective(self, v: int, k: int, eps: PrivacyParam) -> float:
        """
        子集大小为 k 时 tr(Q'D_ν^{-1}Q) 的值

        f(k) = v²(k(e^{2ε}-1) + v) / (k(e^ε-1) + v)²
        """
        if not 1 <= k <= v - 1:
            raise InvalidParameter(f"子集大小需要 1 ≤ k ≤ v-1，实际 v = {v}, k = {k}")
        e = eps.e_eps
        return v * v * (k * (e * e - 1.0) + v) / (k * (e - 1.0) + v) ** 2

    def optimal_subset_size(self, v: int, eps: PrivacyParam) -> int:
        """
        在 ⌊v/(1+e^ε)⌋ 和 ⌈v/(1+e^ε)⌉ 中取迹目标较大者，相等时取下取整

        Returns:
            q: 最优子集大小
        """
        if v <= 2:
            raise InvalidParameter(f"最优子集大小需要 v > 2，实际 v = {v}")
        x = v / (1.0 + eps.e_eps)
        floor, ceil = math.floor(x), math.ceil(x)
        if floor >= 1 and self.trace_objective(v, floor, eps) >= self.trace_objective(v, ceil, eps):
            return floor
        return max(ceil, 1)

    def sample_output(self, Q: TransitionMatrix, input_j: int, uniform_draw: float) -> int:
        """沿第 j 列做逆 CDF 采样"""
        Q = self._as_tpm(Q)
        if not 0 <= input_j < Q.shape[1]:
            raise InvalidParameter(f"输入 {input_j} 不在 [0, {Q.shape[1]}) 内")
        return int(inverse_cdf(np.cumsum(Q[:, input_j]), uniform_draw))

    def sample_outputs(self, Q: TransitionMatrix, inputs: np.ndarray, draws: np.ndarray) -> np.ndarray:
        """sample_output 的向量化版本，按输入列分组"""
        Q = self._as_tpm(Q)
        inputs = np.asarray(inputs)
        draws = np.asarray(draws)
        cdf = np.cumsum(Q, axis=0)
        outputs = np.empty(inputs.shape[0], dtype=np.int64)
        for j in range(Q.shape[1]):
            users = inputs == j
            outputs[users] = inverse_cdf(cdf[:, j], draws[users])
        return outputs

    def gram_matrix(self, Q: TransitionMatrix, nu) -> np.ndarray:
        """Q'·diag(1/ν)·Q"""
        Q = self._as_tpm(Q)
        nu = np.asarray(nu, dtype=np.float64)
        if nu.shape != (Q.shape[0],):
            raise DimensionMismatch(f"ν 的长度 {nu.shape} 与输出数 {Q.shape[0]} 不一致")
        if (nu <= 0).any():
            raise ZeroProbability(f"ν 的第 {int(np.argmax(nu <= 0))} 个分量为零")
        return Q.T @ (Q / nu[:, None])

    def krr_probability(self, v: int, eps: PrivacyParam) -> float:
        """k-RR 如实回答的概率 e^ε/(e^ε+v-1)"""
        return eps.e_eps / (eps.e_eps + v - 1)

    def _as_tpm(self, Q) -> np.ndarray:
        Q = np.asarray(Q, dtype=np.float64)
        if Q.ndim != 2 or Q.shape[0] < 1 or Q.shape[1] < 1:
            raise DimensionMismatch(f"转移矩阵必须是非空二维矩阵，实际形状 {Q.shape}")
        return Q


# 全局服务实例
mechanism_service = MechanismService()
