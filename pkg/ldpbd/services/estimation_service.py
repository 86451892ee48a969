from typing import Optional, Tuple

import numpy as np

from ldpbd.config import settings
from ldpbd.logger import logger
from ldpbd.models import PrivacyParam, RiskConstants
from ldpbd.exceptions import CountMismatch, DimensionMismatch, InvalidCounts, NonPositiveBound, SingularGram
from ldpbd.services.mechanism_service import (
    TransitionMatrix,
    as_distribution,
    mechanism_service,
    uniform,
)


# v×b 线性估计器 L，满足 LQ = I
DebiasMatrix = np.ndarray


def fit_structure(G: np.ndarray, tol: float) -> Tuple[bool, float, float, float]:
    """
    拟合 G ≈ aI + bJ

    b 取非对角元均值，a 取对角元均值减去 b。

    Returns:
        (structured, a, b, max_deviation): 最大逐元素偏差不超过 tol·max(1, max|G|) 时 structured 为真
    """
    v = G.shape[0]
    off_diagonal = G[~np.eye(v, dtype=bool)]
    b = float(off_diagonal.mean()) if off_diagonal.size else 0.0
    a = float(np.diag(G).mean()) - b
    deviation = float(np.abs(G - (a * np.eye(v) + b)).max())
    return deviation <= tol * max(1.0, float(np.abs(G).max())), a, b, deviation


class EstimationService:
    """无偏去偏估计与风险常数"""

    def debias_matrix(self, Q: TransitionMatrix, nu=None) -> DebiasMatrix:
        """
        L = (Q'D_ν^{-1}Q)^{-1} Q'D_ν^{-1}

        Args:
            Q: 转移概率矩阵
            nu: 严格正的权重向量，默认取均匀输入诱导的输出分布

        Returns:
            L: 去偏矩阵
        """
        Q = np.asarray(Q, dtype=np.float64)
        nu = self._weights(Q, nu)
        G = mechanism_service.gram_matrix(Q, nu)
        v = G.shape[0]
        weighted = Q.T / nu

        structured, a, b, _ = fit_structure(G, settings.structure_tol)
        if structured and a > settings.float_tol * max(1.0, abs(b)) and abs(a + v * b) > 0:
            # (aI + bJ)^{-1} = (1/a)(I - (b/(a+vb))J)
            inverse = (np.eye(v) - b / (a + v * b)) / a
            return inverse @ weighted

        self._check_conditioning(G)
        try:
            return np.linalg.solve(G, weighted)
        except np.linalg.LinAlgError:
            raise SingularGram(float("inf"))

    def estimate(self, L: DebiasMatrix, counts, n: int) -> np.ndarray:
        """L·(counts/n)，不做投影，分量可能为负"""
        L = np.asarray(L, dtype=np.float64)
        counts = np.asarray(counts)
        if counts.shape != (L.shape[1],):
            raise DimensionMismatch(f"计数长度 {counts.shape} 与输出数 {L.shape[1]} 不一致")
        counts = self._check_counts(counts, n)
        return L @ (counts / n)

    def trace_inverse_gram(self, Q: TransitionMatrix, nu=None, dense: bool = False) -> float:
        """
        tr((Q'D_ν^{-1}Q)^{-1})

        识别到 aI + bJ 结构时用闭式 (v-1)/a + 1/(a+vb)，否则求稠密逆。
        """
        Q = np.asarray(Q, dtype=np.float64)
        G = mechanism_service.gram_matrix(Q, self._weights(Q, nu))
        v = G.shape[0]

        structured, a, b, _ = fit_structure(G, settings.structure_tol)
        if not dense and structured and a > settings.float_tol * max(1.0, abs(b)):
            return (v - 1) / a + 1.0 / (a + v * b)

        self._check_conditioning(G)
        try:
            return float(np.trace(np.linalg.inv(G)))
        except np.linalg.LinAlgError:
            raise SingularGram(float("inf"))

    def minimax_bound(self, v: int, k: int, eps: PrivacyParam, mu=None) -> float:
        """
        n·E‖μ̂-μ‖² 的下界 (v-1)²/(f(k)-v) + 1/v - ‖μ‖²

        mu 为 None 时取均匀分布。
        """
        f = mechanism_service.trace_objective(v, k, eps)
        if f <= v:
            raise NonPositiveBound(f"f(k) = {f!r} 不大于 v = {v}")
        mu = uniform(v) if mu is None else as_distribution(mu, v)
        return (v - 1) ** 2 / (f - v) + 1.0 / v - float(mu @ mu)

    def risk_constants(self, v: int, k: int, eps: PrivacyParam) -> RiskConstants:
        """子集大小 k 下的 f_q, a_q, b_q 及特征值"""
        f = mechanism_service.trace_objective(v, k, eps)
        a = (f - v) / (v - 1)
        if a <= 0:
            raise NonPositiveBound(f"a_q = {a!r} 不为正")
        trace_inv = (v - 1) / a + 1.0 / v
        return RiskConstants(
            v=v,
            k=k,
            epsilon=eps.epsilon,
            f_q=f,
            a_q=a,
            b_q=1.0 - a / v,
            eig_small=a,
            eig_large=float(v),
            trace_inv=trace_inv,
            minimax_n_risk=self.minimax_bound(v, k, eps),
        )

    def plugin_distribution(self, counts, n: int, b: Optional[int] = None) -> np.ndarray:
        """经验 ν̂，下限为 1/(factor·n·b) 后重新归一化"""
        counts = self._check_counts(np.asarray(counts), n)
        b = counts.shape[0] if b is None else b
        floor = 1.0 / (settings.plugin_floor_factor * n * b)
        nu = np.maximum(counts / n, floor)
        return nu / nu.sum()

    def project_to_simplex(self, x) -> np.ndarray:
        """欧氏投影到概率单纯形上（与风险公式无关的后处理）"""
        x = np.asarray(x, dtype=np.float64)
        u = np.sort(x)[::-1]
        cumulative = np.cumsum(u) - 1.0
        index = np.arange(1, x.shape[0] + 1)
        rho = np.flatnonzero(u - cumulative / index > 0)[-1]
        theta = cumulative[rho] / (rho + 1)
        return np.maximum(x - theta, 0.0)

    def _check_counts(self, counts: np.ndarray, n: int) -> np.ndarray:
        """计数须为非负整数且总和恰为 n"""
        if counts.dtype.kind not in "iu":
            if counts.dtype.kind not in "fb" or not np.isfinite(counts).all() or (counts != np.floor(counts)).any():
                raise InvalidCounts("计数必须是整数")
        counts = counts.astype(np.int64)
        if (counts < 0).any():
            raise InvalidCounts(f"第 {int(np.argmax(counts < 0))} 个计数为负")
        total = int(counts.sum())
        if n < 1 or total != n:
            raise CountMismatch(total, n)
        return counts

    def _weights(self, Q: np.ndarray, nu) -> np.ndarray:
        if nu is None:
            return Q @ uniform(Q.shape[1])
        return np.asarray(nu, dtype=np.float64)

    def _check_conditioning(self, G: np.ndarray):
        condition = float(np.linalg.cond(G))
        if not np.isfinite(condition) or condition > settings.singular_cond_limit:
            logger.warning(f"Gram 矩阵病态: 条件数 {condition:.3e}")
            raise SingularGram(condition)


# 全局服务实例
estimation_service = EstimationService()
