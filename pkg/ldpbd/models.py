import math
from typing import Optional, List, Literal, Union
from enum import Enum
from datetime import datetime
from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator


class DesignName(str, Enum):
    """设计构造器名称"""
    FANO = "fano"
    TRIVIAL = "trivial"
    COMPLETE = "complete"
    HADAMARD = "hadamard"
    PROJECTIVE = "projective"
    CYCLIC = "cyclic"


class Polarity(str, Enum):
    """Hadamard 设计取 +1 还是 -1 的位置"""
    PLUS = "plus"
    MINUS = "minus"


class DChoice(str, Enum):
    """去偏矩阵中 D 的取法"""
    UNIFORM_INDUCED = "uniform-induced"
    EMPIRICAL = "empirical"


class DesignParams(BaseModel):
    """(v, b, r, k, λ) 参数"""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    v: int = Field(..., ge=1, description="点数（输入字母表大小）")
    b: int = Field(..., ge=1, description="区组数（输出字母表大小）")
    r: int = Field(..., ge=1, description="每个点所在的区组数")
    k: int = Field(..., ge=1, description="区组大小")
    lambda_: int = Field(..., ge=0, alias="lambda", description="每对点共同所在的区组数")

    def satisfies_identities(self) -> bool:
        """两个计数恒等式，λ ≥ 1 时还要满足 Fisher 不等式"""
        if self.b * self.k != self.v * self.r:
            return False
        if self.r * (self.k - 1) != self.lambda_ * (self.v - 1):
            return False
        if self.lambda_ >= 1 and self.b < self.v:
            return False
        return 1 <= self.k <= self.v

    @property
    def is_symmetric(self) -> bool:
        return self.b == self.v

    def as_tuple(self) -> tuple:
        return (self.v, self.b, self.r, self.k, self.lambda_)


class DesignDocument(BaseModel):
    """设计的 JSON 表示（区组形式）；参数字段可省略"""
    model_config = ConfigDict(populate_by_name=True)

    v: int = Field(..., ge=1)
    b: Optional[int] = None
    r: Optional[int] = None
    k: Optional[int] = None
    lambda_: Optional[int] = Field(None, alias="lambda")
    blocks: List[List[int]]

    def declared_params(self) -> Optional[DesignParams]:
        """文件中声明的参数，不完整时返回 None"""
        if None in (self.b, self.r, self.k, self.lambda_):
            return None
        return DesignParams(v=self.v, b=self.b, r=self.r, k=self.k, lambda_=self.lambda_)


class DenseDesignDocument(BaseModel):
    """设计的 JSON 表示（稠密关联矩阵形式）"""
    incidence: List[List[int]]


class PrivacyParam(BaseModel):
    """隐私预算 ε"""
    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(..., gt=0, allow_inf_nan=False, description="隐私预算 ε")

    @computed_field
    @property
    def e_eps(self) -> float:
        return math.exp(self.epsilon)


class MechanismSpec(BaseModel):
    """区组设计随机响应机制的参数"""
    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(..., description="隐私预算 ε")
    design: DesignParams = Field(..., description="设计参数")
    p: float = Field(..., description="归一化因子 1/(r(e^ε-1)+b)")
    p0: float = Field(..., description="1/(v+k(e^ε-1))")
    large: float = Field(..., description="大元素 p·e^ε")
    small: float = Field(..., description="小元素 p")
    comm_bits: int = Field(..., description="通信比特数 ⌈log₂ b⌉")

    @computed_field
    @property
    def ldp_ratio(self) -> float:
        """大小元素之比，即 e^ε"""
        return self.large / self.small

    @property
    def is_symmetric(self) -> bool:
        return self.design.is_symmetric


class RiskConstants(BaseModel):
    """与 ε 相关的风险常数"""
    v: int
    k: int
    epsilon: float
    f_q: float = Field(..., description="子集大小 k 处的迹目标")
    a_q: float = Field(..., description="(f_q - v)/(v - 1)")
    b_q: float = Field(..., description="1 - a_q/v")
    eig_small: float = Field(..., description="重数 v-1 的特征值")
    eig_large: float = Field(..., description="重数 1 的特征值")
    trace_inv: float = Field(..., description="逆 Gram 矩阵的迹")
    minimax_n_risk: float = Field(..., description="均匀 μ 下的 n·E‖μ̂-μ‖² 下界")


class Failure(BaseModel):
    """校验失败原因"""
    check: str = Field(..., description="失败的检查项")
    error: str = Field(..., description="错误类型")
    message: str = Field(..., description="错误消息")
    detail: Optional[str] = Field(None, description="详细信息")


class GramCheck(BaseModel):
    """Gram 矩阵结构检查结果"""
    ok: bool
    structured: bool = Field(..., description="是否为 aI + bJ 形式")
    a: float
    b: float
    q: Optional[int] = Field(None, description="用于比较的子集大小")
    a_q: Optional[float] = None
    b_q: Optional[float] = None
    max_deviation: float


class VerifierReport(BaseModel):
    """极小极大最优性校验报告"""
    v: int
    b: int
    epsilon: Optional[float] = None
    epsilon_inferred: Optional[float] = None
    is_stochastic: bool = False
    is_binary: bool = False
    large: Optional[float] = None
    small: Optional[float] = None
    ratio_ok: bool = False
    row_weight: Optional[int] = Field(None, description="每行大元素个数，不恒定时为 None")
    optimal_q: Optional[int] = None
    subset_size_ok: bool = False
    column_weight: Optional[int] = Field(None, description="每列大元素个数，不恒定时为 None")
    gram_ok: bool = False
    gram_a: Optional[float] = None
    gram_b: Optional[float] = None
    c1: Optional[int] = Field(None, description="A'A = c1·I + c2·J 中的 c1")
    c2: Optional[int] = None
    is_bibd: bool = False
    lambda_extracted: Optional[int] = None
    output_size_ok: bool = False
    is_sbibd: bool = False
    reconstruction_ok: Optional[bool] = None
    is_minimax_optimal: bool = False
    failures: List[Failure] = Field(default_factory=list)
    notes: List[Failure] = Field(default_factory=list, description="不影响结论的提示")


class DesignSource(BaseModel):
    """设计来源：构造器名称加参数，或设计文件"""
    name: Optional[DesignName] = None
    v: Optional[int] = None
    k: Optional[int] = None
    t: Optional[int] = None
    p: Optional[int] = None
    polarity: Polarity = Polarity.MINUS
    base: Optional[List[int]] = None
    file: Optional[str] = None

    @model_validator(mode="after")
    def check_exclusive(self):
        if (self.name is None) == (self.file is None):
            raise ValueError("必须且只能指定设计名称或设计文件之一")
        return self

    @property
    def label(self) -> str:
        if self.file is not None:
            return f"file:{self.file}"
        parts = [
            f"{key}={value}"
            for key, value in (("v", self.v), ("k", self.k), ("t", self.t), ("p", self.p))
            if value is not None
        ]
        if self.name == DesignName.HADAMARD:
            parts.append(f"polarity={self.polarity.value}")
        if self.base is not None:
            parts.append("base=" + "-".join(str(x) for x in self.base))
        return self.name.value + (":" + ",".join(parts) if parts else "")


class SimConfig(BaseModel):
    """蒙特卡洛实验配置"""
    design: DesignSource
    epsilon: float = Field(..., gt=0, allow_inf_nan=False)
    mu: Union[Literal["uniform"], List[float]] = "uniform"
    n: int = Field(..., ge=1, description="每次试验的用户数")
    trials: int = Field(..., ge=1, description="试验次数 T")
    master_seed: int = Field(0, ge=0, lt=2**64)
    d_choice: DChoice = DChoice.UNIFORM_INDUCED
    workers: int = Field(1, ge=1)


class TrialRecord(BaseModel):
    """单次试验结果"""
    trial_index: int
    l2sq_error: float = Field(..., ge=0)
    seed_used: int
    estimate: List[float] = Field(default_factory=list, description="未投影的估计 μ̂")


class Summary(BaseModel):
    """实验汇总"""
    protocol: str
    v: int
    b: int
    k: int
    comm_bits: int
    mean_n_risk: float
    std_error: Optional[float] = None
    theory_bound: float
    z_gap: Optional[float] = None
    mean_estimate: List[float]
    estimate_std_error: Optional[List[float]] = None
    error: Optional[str] = None
    config: SimConfig


class ProtocolRow(BaseModel):
    """协议对比表中的一行"""
    protocol: str
    v: int
    b: int
    k: int
    comm_bits: int
    mean_n_risk: float
    std_error: Optional[float] = None
    theory_bound: float
    z_gap: Optional[float] = None
    is_minimax_optimal: bool


class ErrorResponse(BaseModel):
    """错误响应模型"""
    error: str = Field(..., description="错误类型")
    message: str = Field(..., description="错误消息")
    detail: Optional[str] = Field(None, description="详细信息")
    timestamp: datetime = Field(..., description="错误时间")
