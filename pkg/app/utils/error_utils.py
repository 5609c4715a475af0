"""
错误处理工具函数

提供上下文管理器，把底层 I/O 异常统一转换为 StorageError
"""

from contextlib import contextmanager
from typing import Iterator

from app.utils.error_handler import CoughGanError, ErrorContext, StorageError, handle_exception
from app.utils.logger import get_logger

logger = get_logger(__name__)


@contextmanager
def error_context(operation: str, component: str = "", **kwargs) -> Iterator[None]:
    """错误上下文管理器

    OSError 转换为 StorageError，流水线异常记录后原样抛出

    用法:
        with error_context("写入分段WAV", "preprocess", path=out_path):
            write_wav(clip, out_path)
    """
    try:
        yield
    except CoughGanError as e:
        if not e.context.operation:
            e.context = ErrorContext(operation=operation, component=component, **kwargs)
        raise
    except OSError as e:
        error = StorageError(
            f"{operation} 失败: {e}",
            context=ErrorContext(operation=operation, component=component, **kwargs),
            original_exception=e,
        )
        logger.debug(f"操作失败 [{error.error_id}]: {operation}")
        raise error from e


def log_and_skip(e: BaseException, operation: str, component: str = "", **kwargs) -> str:
    """记录一个可跳过的错误并返回错误ID（批处理中单个文件失败时使用）"""
    error = handle_exception(e, operation=operation, component=component, **kwargs)
    logger.warning(f"已跳过 [{error.error_id}]: {operation}: {e}")
    return error.error_id
