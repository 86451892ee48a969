from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """应用配置"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="LDPBD_",
        case_sensitive=False,
        extra="ignore",
    )

    # 应用基础配置
    app_name: str = "ldpbd"
    app_version: str = "1.0.0"
    debug: bool = False

    # 日志配置
    log_level: str = "INFO"
    log_format: str = "json"

    # 资源限制
    row_limit: int = 1_000_000  # 完全设计的最大区组数 (LDPBD_ROW_LIMIT)
    max_workers: int = 1  # 模拟默认并行线程数

    # 数值容差
    structure_tol: float = 1e-12  # 结构性等式
    float_tol: float = 1e-10  # 推导量比较
    cluster_tol: float = 1e-9  # TPM 取值聚类（相对）
    gram_tol: float = 1e-9  # Gram 矩阵逐元素检查
    reconstruction_tol: float = 1e-12  # p(A(e^ε-1)+J') 重建
    singular_cond_limit: float = 1e12  # 超过此条件数视为奇异

    # 经验 ν̂ 的下限因子: 1/(factor·n·b)
    plugin_floor_factor: float = 10.0


# 全局配置实例
settings = Settings()
