import sys
import json
import logging
from datetime import datetime, timezone
from ldpbd.config import settings


# 可附加到日志记录上的上下文字段
CONTEXT_FIELDS = ("command", "design", "trial")


class JSONFormatter(logging.Formatter):
    """JSON格式日志格式化器"""

    def format(self, record):
        log_entry = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "message": record.getMessage(),
            "module": record.module,
            "function": record.funcName,
            "line": record.lineno,
        }

        # 添加上下文字段
        for field in CONTEXT_FIELDS:
            if hasattr(record, field):
                log_entry[field] = getattr(record, field)
        if record.exc_info:
            log_entry["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_entry, ensure_ascii=False)


class SimpleFormatter(logging.Formatter):
    """简单格式日志格式化器"""

    def format(self, record):
        timestamp = datetime.fromtimestamp(record.created).strftime('%Y-%m-%d %H:%M:%S')
        context = " ".join(
            f"{field}={getattr(record, field)}" for field in CONTEXT_FIELDS if hasattr(record, field)
        )
        suffix = f" [{context}]" if context else ""
        return f"{timestamp} | {record.levelname:8} | {record.module}:{record.funcName}:{record.lineno} - {record.getMessage()}{suffix}"


def setup_logger(level: str = None, log_format: str = None):
    """
    设置日志配置

    标准输出用于命令结果，日志一律写入标准错误。
    """
    logger = logging.getLogger('ldpbd')
    logger.setLevel(getattr(logging, (level or ("DEBUG" if settings.debug else settings.log_level)).upper()))
    logger.propagate = False

    # 清除现有处理器
    logger.handlers.clear()

    console_handler = logging.StreamHandler(sys.stderr)

    if (log_format or settings.log_format).lower() == 'json':
        formatter = JSONFormatter()
    else:
        formatter = SimpleFormatter()

    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    return logger


# 初始化日志
logger = setup_logger()
