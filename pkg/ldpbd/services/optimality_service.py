"""
最优性校验

任意转移概率矩阵满足全部必要条件时才判定为极小极大最优，
并从大元素位置提取设计、校验其为 BIBD。
"""

import math
from typing import Optional, Tuple

import numpy as np

from ldpbd.config import settings
from ldpbd.logger import logger
from ldpbd.models import Failure, GramCheck, PrivacyParam, VerifierReport
from ldpbd.exceptions import (
    DesignError,
    LdpbdError,
    MoreThanTwoValues,
    NonPositiveEntry,
    ZeroProbability,
)
from ldpbd.services.design_service import IncidenceMatrix, design_service
from ldpbd.services.estimation_service import fit_structure
from ldpbd.services.mechanism_service import TransitionMatrix, mechanism_service, uniform


def _constant(values: np.ndarray) -> Optional[int]:
    return int(values[0]) if (values == values[0]).all() else None


class OptimalityService:
    """极小极大最优性校验器"""

    def check_binary_structure(
        self, Q: TransitionMatrix, tol: float = None
    ) -> Tuple[float, float, IncidenceMatrix]:
        """
        把 TPM 的元素按相对容差聚成至多两类

        Returns:
            (large, small, positions): 大小两个取值及大元素位置的 0/1 矩阵；
            只有一个取值时 large = small，positions 全为 1
        """
        tol = settings.cluster_tol if tol is None else tol
        Q = np.asarray(Q, dtype=np.float64)
        if (Q <= 0).any() or not np.isfinite(Q).all():
            raise NonPositiveEntry("TPM 的元素必须为正的有限值")

        starts = []
        for value in np.unique(Q):
            if not starts or value - starts[-1] > tol * value:
                starts.append(float(value))
                if len(starts) > 2:
                    raise MoreThanTwoValues(float(value), (starts[0], starts[1]))

        if len(starts) == 1:
            positions = np.ones(Q.shape, dtype=np.uint8)
            value = float(Q.mean())
            return value, value, positions

        positions = (Q >= starts[1]).astype(np.uint8)
        return float(Q[positions == 1].mean()), float(Q[positions == 0].mean()), positions

    def check_ratio(self, large: float, small: float, eps: PrivacyParam) -> bool:
        """大小元素之比是否为 1 或 e^ε"""
        ratio = large / small
        return math.isclose(ratio, 1.0, rel_tol=settings.cluster_tol, abs_tol=0.0) or math.isclose(
            ratio, eps.e_eps, rel_tol=settings.cluster_tol, abs_tol=0.0
        )

    def extract_design(self, positions: IncidenceMatrix) -> IncidenceMatrix:
        """大元素位置矩阵即为设计，须通过 verify_design"""
        design_service.verify_design(positions)
        A = np.array(positions, dtype=np.uint8)
        A.setflags(write=False)
        return A

    def check_gram_condition(self, Q: TransitionMatrix, eps: PrivacyParam, q: int = None) -> GramCheck:
        """
        均匀输入下 G = Q'D_ν^{-1}Q 是否逐元素等于 a_q I + b_q J

        Args:
            q: 比较用的子集大小，默认取大元素的行权重
        """
        Q = np.asarray(Q, dtype=np.float64)
        v = Q.shape[1]
        nu = Q @ uniform(v)
        if (nu <= 0).any():
            raise ZeroProbability("诱导分布 ν 含有零分量")
        G = mechanism_service.gram_matrix(Q, nu)
        structured, a, b, deviation = fit_structure(G, settings.gram_tol)

        if q is None:
            _, _, positions = self.check_binary_structure(Q)
            q = _constant(positions.sum(axis=1))
        if q is None or not 1 <= q <= v - 1:
            return GramCheck(ok=False, structured=structured, a=a, b=b, q=q, max_deviation=deviation)

        f = mechanism_service.trace_objective(v, q, eps)
        a_q = (f - v) / (v - 1)
        b_q = 1.0 - a_q / v
        tol = settings.gram_tol
        ok = (
            structured
            and math.isclose(a, a_q, rel_tol=0.0, abs_tol=tol * max(1.0, abs(a_q)))
            and math.isclose(b, b_q, rel_tol=0.0, abs_tol=tol * max(1.0, abs(b_q)))
        )
        return GramCheck(ok=ok, structured=structured, a=a, b=b, q=q, a_q=a_q, b_q=b_q, max_deviation=deviation)

    def verify_optimal(
        self, Q: TransitionMatrix, eps: Optional[PrivacyParam] = None, infer_epsilon: bool = False
    ) -> VerifierReport:
        """
        运行全部检查，失败原因作为数据写入报告

        Args:
            Q: 任意转移概率矩阵
            eps: 调用方给出的 ε；为 None 且 infer_epsilon 为真时使用 ln(large/small)
        """
        Q = np.asarray(Q, dtype=np.float64)
        b, v = Q.shape
        report = VerifierReport(v=v, b=b, epsilon=eps.epsilon if eps else None)

        def fail(check: str, error: str, message: str, detail: str = None):
            report.failures.append(Failure(check=check, error=error, message=message, detail=detail))

        def note(check: str, error: str, message: str):
            report.notes.append(Failure(check=check, error=error, message=message))

        report.is_stochastic = bool(np.all(np.abs(Q.sum(axis=0) - 1.0) <= settings.cluster_tol))
        if not report.is_stochastic:
            note("stochastic", "NotColumnStochastic", "存在列和不为 1 的列")

        report.output_size_ok = b <= v
        if not report.output_size_ok:
            note("output_size", "OutputLargerThanInput", f"输出数 b = {b} 大于输入数 v = {v}")

        try:
            large, small, positions = self.check_binary_structure(Q)
        except (MoreThanTwoValues, NonPositiveEntry) as exc:
            fail("binary", exc.error, exc.message, exc.detail)
            return self._finish(report)
        report.is_binary = True
        report.large, report.small = large, small
        report.epsilon_inferred = math.log(large / small)

        if eps is None and infer_epsilon and large > small:
            eps = PrivacyParam(epsilon=report.epsilon_inferred)
            report.epsilon = eps.epsilon
        if eps is None:
            fail("ratio", "MissingEpsilon", "未给出 ε，且无法从 TPM 推断")
            return self._finish(report)

        report.ratio_ok = self.check_ratio(large, small, eps)
        if not report.ratio_ok:
            fail("ratio", "RatioMismatch", f"大小元素之比 {large / small!r} 不等于 1 或 e^ε = {eps.e_eps!r}")

        report.row_weight = _constant(positions.sum(axis=1))
        report.column_weight = _constant(positions.sum(axis=0))
        if v > 2:
            report.optimal_q = mechanism_service.optimal_subset_size(v, eps)
        if report.row_weight is None:
            fail("subset_size", "NonConstantRowSum", "各行大元素个数不相同")
        elif report.optimal_q is None:
            fail("subset_size", "DomainTooSmall", f"v = {v} ≤ 2 时最优子集大小无定义")
        else:
            report.subset_size_ok = report.row_weight == report.optimal_q
            if not report.subset_size_ok:
                fail(
                    "subset_size",
                    "SubsetSizeMismatch",
                    f"行权重 k = {report.row_weight} 不等于最优子集大小 q = {report.optimal_q}",
                )

        try:
            gram = self.check_gram_condition(Q, eps, report.row_weight)
            report.gram_ok = gram.ok
            report.gram_a, report.gram_b = gram.a, gram.b
            if not gram.ok:
                fail(
                    "gram",
                    "GramMismatch",
                    "Q'D^{-1}Q 不等于 a_q I + b_q J",
                    detail=f"structured={gram.structured}, a={gram.a!r}, b={gram.b!r}, a_q={gram.a_q!r}, b_q={gram.b_q!r}",
                )
        except LdpbdError as exc:
            fail("gram", exc.error, exc.message, exc.detail)

        # A'A = c1·I + c2·J 的整数系数，不成立时留空
        A = positions.astype(np.int64)
        gram = A.T @ A
        c2 = int(gram[0, 1]) if A.shape[1] > 1 else 0
        c1 = int(gram[0, 0]) - c2
        if (gram == c1 * np.eye(A.shape[1], dtype=np.int64) + c2).all():
            report.c1, report.c2 = c1, c2

        try:
            params = design_service.verify_design(self.extract_design(positions))
            report.is_bibd = True
            report.lambda_extracted = params.lambda_
        except DesignError as exc:
            fail("bibd", exc.error, exc.message, exc.detail)
        report.is_sbibd = report.is_bibd and b == v

        if report.column_weight is not None:
            reconstructed = small * (positions * (eps.e_eps - 1.0) + 1.0)
            report.reconstruction_ok = bool(np.abs(reconstructed - Q).max() <= settings.reconstruction_tol)
            if not report.reconstruction_ok:
                note("reconstruction", "ReconstructionMismatch", "Q 不等于 p(A(e^ε-1)+J')")

        return self._finish(report)

    def _finish(self, report: VerifierReport) -> VerifierReport:
        report.is_minimax_optimal = (
            report.is_binary
            and report.ratio_ok
            and report.subset_size_ok
            and report.gram_ok
            and report.is_bibd
        )
        logger.info(
            f"最优性校验: v={report.v}, b={report.b}, optimal={report.is_minimax_optimal}, "
            f"failures={[failure.check for failure in report.failures]}"
        )
        return report


# 全局服务实例
optimality_service = OptimalityService()
