"""
统一错误处理系统

为咳嗽频谱合成流水线提供统一的异常层级、错误记录和退出码映射
"""

import traceback
from datetime import datetime
from enum import Enum
from hashlib import sha256
from typing import Any, Dict, List, Optional

from app.utils.logger import get_logger

logger = get_logger(__name__)


class ErrorLevel(Enum):
    """错误级别枚举"""
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


class ErrorCategory(Enum):
    """错误分类枚举"""
    # 配置相关
    CONFIG = "CONFIG"                 # 配置文件/参数错误

    # 数据相关
    DATA = "DATA"                     # 数据内容错误（标签、清单、样本集）
    FORMAT = "FORMAT"                 # 文件格式错误（WAV、CSV、容器）
    DOMAIN = "DOMAIN"                 # 参数超出定义域
    SHAPE = "SHAPE"                   # 张量形状不匹配

    # 训练相关
    TRAINING = "TRAINING"             # 训练发散、非有限值

    # 系统相关
    FILE_IO = "FILE_IO"               # 文件读写错误
    CONTRACT = "CONTRACT"             # 调用约定被破坏（如缓存不匹配）

    UNKNOWN = "UNKNOWN"


# 命令行退出码：0 成功, 2 配置, 3 数据, 4 训练发散, 5 I/O
EXIT_CODES: Dict[ErrorCategory, int] = {
    ErrorCategory.CONFIG: 2,
    ErrorCategory.DATA: 3,
    ErrorCategory.FORMAT: 3,
    ErrorCategory.DOMAIN: 3,
    ErrorCategory.SHAPE: 3,
    ErrorCategory.TRAINING: 4,
    ErrorCategory.FILE_IO: 5,
    ErrorCategory.CONTRACT: 1,
    ErrorCategory.UNKNOWN: 1,
}


class ErrorContext:
    """错误上下文信息"""

    def __init__(self, operation: str = "", component: str = "", **kwargs):
        self.operation = operation       # 执行的操作
        self.component = component       # 出错的组件
        self.timestamp = datetime.now()  # 错误时间
        self.extra = kwargs              # 额外信息（文件、轮次等）

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典"""
        return {
            "operation": self.operation,
            "component": self.component,
            "timestamp": self.timestamp.isoformat(),
            "extra": {k: str(v) for k, v in self.extra.items()},
        }


class CoughGanError(Exception):
    """流水线基础异常类"""

    category = ErrorCategory.UNKNOWN
    level = ErrorLevel.ERROR

    def __init__(self,
                 message: str,
                 context: Optional[ErrorContext] = None,
                 original_exception: Optional[BaseException] = None,
                 user_message: Optional[str] = None):
        super().__init__(message)
        self.context = context or ErrorContext()
        self.original_exception = original_exception
        self.user_message = user_message or message
        self.error_id = self._generate_error_id()

    def _generate_error_id(self) -> str:
        """生成唯一错误ID"""
        content = f"{self.category.value}_{self.context.timestamp}_{str(self)}"
        return sha256(content.encode()).hexdigest()[:8]

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.category]

    def to_dict(self) -> Dict[str, Any]:
        """转换为字典"""
        return {
            "error_id": self.error_id,
            "message": str(self),
            "user_message": self.user_message,
            "category": self.category.value,
            "level": self.level.value,
            "exit_code": self.exit_code,
            "context": self.context.to_dict(),
            "original_exception": str(self.original_exception) if self.original_exception else None,
            "traceback": "".join(traceback.format_exception(self.original_exception))
            if self.original_exception else None,
        }


# === 具体异常类 ===

class ConfigError(CoughGanError):
    """配置相关异常"""
    category = ErrorCategory.CONFIG


class DataError(CoughGanError):
    """数据相关异常"""
    category = ErrorCategory.DATA


class FormatError(CoughGanError):
    """文件格式异常"""
    category = ErrorCategory.FORMAT


class UnsupportedFormatError(FormatError):
    """格式合法但编码不受支持"""


class ManifestSchemaError(DataError):
    """清单CSV缺少必需列"""


class ManifestRowError(DataError):
    """清单CSV某一行无法解析"""

    def __init__(self, message: str, row_index: int, **kwargs):
        super().__init__(message, **kwargs)
        self.row_index = row_index


class DomainError(CoughGanError):
    """参数超出定义域"""
    category = ErrorCategory.DOMAIN


class ShapeError(CoughGanError):
    """张量形状不匹配"""
    category = ErrorCategory.SHAPE


class ContractError(CoughGanError):
    """调用约定被破坏"""
    category = ErrorCategory.CONTRACT


class TrainingError(CoughGanError):
    """训练过程出现非有限值或发散"""
    category = ErrorCategory.TRAINING
    level = ErrorLevel.CRITICAL

    def __init__(self, message: str, epoch: Optional[int] = None, parameter: Optional[str] = None, **kwargs):
        super().__init__(message, **kwargs)
        self.epoch = epoch
        self.parameter = parameter


class StorageError(CoughGanError):
    """文件读写异常"""
    category = ErrorCategory.FILE_IO


class StratificationWarning(UserWarning):
    """分层划分无法满足比例时的警告"""


# === 错误处理器 ===

class ErrorHandler:
    """统一错误处理器：按级别记日志，保留有限长度的错误历史"""

    def __init__(self, max_history: int = 1000):
        self._error_history: List[CoughGanError] = []
        self._max_history = max_history

    def handle_error(self, error: CoughGanError) -> None:
        """记录错误"""
        self._record_error(error)

    def _record_error(self, error: CoughGanError) -> None:
        """记录错误"""
        self._error_history.append(error)
        if len(self._error_history) > self._max_history:
            self._error_history.pop(0)

        log_message = (f"[{error.error_id}] {error} | Category: {error.category.value}"
                       f" | Component: {error.context.component}")
        if error.level == ErrorLevel.CRITICAL:
            logger.critical(log_message)
        elif error.level == ErrorLevel.ERROR:
            logger.error(log_message)
        elif error.level == ErrorLevel.WARNING:
            logger.warning(log_message)
        else:
            logger.info(log_message)

    def clear(self) -> None:
        """清空历史（每次命令行调用开始时）"""
        self._error_history.clear()

    def get_error_stats(self) -> Dict[str, Any]:
        """获取错误统计信息"""
        total = len(self._error_history)
        by_category: Dict[str, int] = {}
        for error in self._error_history:
            cat = error.category.value
            by_category[cat] = by_category.get(cat, 0) + 1

        recent_errors = [
            {
                "id": error.error_id,
                "message": error.user_message,
                "category": error.category.value,
                "timestamp": error.context.timestamp.isoformat(),
            }
            for error in self._error_history[-10:]
        ]
        return {"total": total, "by_category": by_category, "recent_errors": recent_errors}


# === 全局错误处理器实例 ===
_global_handler = ErrorHandler()


def get_error_handler() -> ErrorHandler:
    """获取全局错误处理器"""
    return _global_handler


def handle_exception(e: BaseException,
                     operation: str = "",
                     component: str = "",
                     **context_kwargs) -> CoughGanError:
    """
    处理已捕获异常的便捷函数

    已是 CoughGanError 的异常原样记录，其他异常包装为 UNKNOWN 类别

    Returns:
        CoughGanError: 被记录的错误对象
    """
    if isinstance(e, CoughGanError):
        error = e
    else:
        context = ErrorContext(operation=operation, component=component, **context_kwargs)
        error = CoughGanError(f"操作 {operation} 失败: {e}", context=context, original_exception=e)
    _global_handler.handle_error(error)
    return error
