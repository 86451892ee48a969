import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from ldpbd.logger import logger
from ldpbd.models import DChoice, MechanismSpec, PrivacyParam, ProtocolRow, SimConfig, Summary, TrialRecord
from ldpbd.exceptions import ProtocolMismatch
from ldpbd.formats import resolve_design
from ldpbd.services.estimation_service import DebiasMatrix, estimation_service
from ldpbd.services.mechanism_service import (
    TransitionMatrix,
    as_distribution,
    inverse_cdf,
    mechanism_service,
    uniform,
)
from ldpbd.services.optimality_service import optimality_service


def trial_seed(master_seed: int, trial_index: int) -> int:
    """由 (master_seed, trial_index) 派生的 64 位试验种子"""
    state = np.random.SeedSequence([master_seed, trial_index]).generate_state(1, dtype=np.uint64)
    return int(state[0])


class Experiment(NamedTuple):
    """构造好的机制及其理论量"""
    label: str
    eps: PrivacyParam
    Q: TransitionMatrix
    spec: MechanismSpec
    mu: np.ndarray
    L: Optional[DebiasMatrix]
    theory_bound: float


class SimulationService:
    """蒙特卡洛风险模拟"""

    def run_trial(
        self,
        Q: TransitionMatrix,
        L: Optional[DebiasMatrix],
        mu,
        n: int,
        seed: int,
        trial_index: int = 0,
        d_choice: DChoice = DChoice.UNIFORM_INDUCED,
    ) -> TrialRecord:
        """
        单次试验：从 μ 抽 n 个输入，经 Q 随机化，计数、去偏并计算 ‖μ̂-μ‖²

        Philox 是计数器型生成器，用户 u 固定使用流中第 2u、2u+1 个均匀数
        （分别用于输入和输出），结果与求值顺序无关。

        Args:
            L: 去偏矩阵；d_choice 为 empirical 或 L 为 None 时按经验 ν̂ 重建
            seed: 试验种子
        """
        Q = np.asarray(Q, dtype=np.float64)
        mu = np.asarray(mu, dtype=np.float64)
        rng = np.random.Generator(np.random.Philox(key=seed))
        draws = rng.random((n, 2))

        inputs = inverse_cdf(np.cumsum(mu), draws[:, 0])
        outputs = mechanism_service.sample_outputs(Q, inputs, draws[:, 1])
        counts = np.bincount(outputs, minlength=Q.shape[0])

        if L is None or d_choice == DChoice.EMPIRICAL:
            L = estimation_service.debias_matrix(Q, estimation_service.plugin_distribution(counts, n))
        estimate = estimation_service.estimate(L, counts, n)
        return TrialRecord(
            trial_index=trial_index,
            l2sq_error=float(((estimate - mu) ** 2).sum()),
            seed_used=seed,
            estimate=estimate.tolist(),
        )

    def prepare(self, config: SimConfig) -> Experiment:
        """构造设计、机制、去偏矩阵与理论下界"""
        A = resolve_design(config.design)
        eps = PrivacyParam(epsilon=config.epsilon)
        Q, spec = mechanism_service.build_mechanism(A, eps)
        v = spec.design.v
        mu = uniform(v) if config.mu == "uniform" else as_distribution(config.mu, v)
        L = estimation_service.debias_matrix(Q) if config.d_choice == DChoice.UNIFORM_INDUCED else None
        bound = estimation_service.minimax_bound(v, spec.design.k, eps, mu)
        return Experiment(config.design.label, eps, Q, spec, mu, L, bound)

    def run_experiment(self, config: SimConfig) -> Tuple[Summary, List[TrialRecord]]:
        """
        执行 T 次试验并汇总

        每次试验的种子只依赖 (master_seed, trial_index)，线程数不影响结果。
        """
        return self._run(self.prepare(config), config)

    def compare_protocols(self, configs: List[SimConfig]) -> List[ProtocolRow]:
        """在相同 (v, ε, μ, n, T) 下比较多个协议"""
        if not configs:
            raise ProtocolMismatch("协议列表为空")
        first = configs[0]
        for config in configs[1:]:
            for field in ("epsilon", "mu", "n", "trials", "master_seed", "d_choice"):
                if getattr(config, field) != getattr(first, field):
                    raise ProtocolMismatch(f"协议 {config.design.label} 的 {field} 与其他协议不一致")

        experiments = [self.prepare(config) for config in configs]
        domain_sizes = {experiment.spec.design.v for experiment in experiments}
        if len(domain_sizes) != 1:
            raise ProtocolMismatch(f"各协议的输入域大小不一致: {sorted(domain_sizes)}")

        rows = []
        for experiment, config in zip(experiments, configs):
            summary, _ = self._run(experiment, config)
            report = optimality_service.verify_optimal(experiment.Q, experiment.eps)
            rows.append(
                ProtocolRow(
                    protocol=experiment.label,
                    v=summary.v,
                    b=summary.b,
                    k=summary.k,
                    comm_bits=summary.comm_bits,
                    mean_n_risk=summary.mean_n_risk,
                    std_error=summary.std_error,
                    theory_bound=summary.theory_bound,
                    z_gap=summary.z_gap,
                    is_minimax_optimal=report.is_minimax_optimal,
                )
            )
        return rows

    def _run(self, experiment: Experiment, config: SimConfig) -> Tuple[Summary, List[TrialRecord]]:
        start_time = time.time()
        logger.info(
            f"开始实验: n={config.n}, T={config.trials}, workers={config.workers}",
            extra={"design": experiment.label},
        )

        def work(trial_index: int) -> TrialRecord:
            return self.run_trial(
                experiment.Q,
                experiment.L,
                experiment.mu,
                config.n,
                trial_seed(config.master_seed, trial_index),
                trial_index,
                config.d_choice,
            )

        with ThreadPoolExecutor(max_workers=config.workers) as executor:
            records = list(executor.map(work, range(config.trials)))

        summary = self._summarise(experiment, config, records)
        duration = time.time() - start_time
        logger.info(
            f"实验完成: 耗时 {duration:.2f}秒, n·风险 {summary.mean_n_risk:.4f}, 理论下界 {summary.theory_bound:.4f}",
            extra={"design": experiment.label},
        )
        return summary, records

    def _summarise(self, experiment: Experiment, config: SimConfig, records: List[TrialRecord]) -> Summary:
        n, trials = config.n, len(records)
        errors = np.array([record.l2sq_error for record in records])
        estimates = np.array([record.estimate for record in records])
        mean_n_risk = float(n * errors.mean())

        std_error = z_gap = estimate_std_error = error = None
        if trials >= 2:
            std_error = float(n * errors.std(ddof=1) / math.sqrt(trials))
            estimate_std_error = (estimates.std(axis=0, ddof=1) / math.sqrt(trials)).tolist()
            if std_error > 0:
                z_gap = (mean_n_risk - experiment.theory_bound) / std_error
            else:
                error = "各次试验误差相同，标准误为零"
        else:
            error = "只有一次试验，标准误无定义"

        design = experiment.spec.design
        return Summary(
            protocol=experiment.label,
            v=design.v,
            b=design.b,
            k=design.k,
            comm_bits=experiment.spec.comm_bits,
            mean_n_risk=mean_n_risk,
            std_error=std_error,
            theory_bound=experiment.theory_bound,
            z_gap=z_gap,
            mean_estimate=estimates.mean(axis=0).tolist(),
            estimate_std_error=estimate_std_error,
            error=error,
            config=config,
        )


# 全局服务实例
simulation_service = SimulationService()
