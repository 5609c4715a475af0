"""
统一日志管理系统

所有模块通过 get_logger(__name__) 获取日志器，
日志级别和日志文件可由配置、环境变量(.env)或命令行覆盖
"""

import logging
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

ENV_LOG_LEVEL = "COUGHGAN_LOG_LEVEL"
ENV_LOG_FILE = "COUGHGAN_LOG_FILE"


class AppLogger:
    """应用程序日志管理器"""

    _loggers = {}
    _initialized = False

    @classmethod
    def setup_logging(cls, log_level: Optional[str] = None, log_file: Optional[str] = None, force: bool = False,
                      default_level: str = "INFO", default_file: Optional[str] = None):
        """
        初始化日志系统

        Args:
            log_level: 日志级别 (DEBUG, INFO, WARNING, ERROR)，None 时读取环境变量
            log_file: 日志文件路径，None 时读取环境变量，仍为空则只输出到控制台
            force: 已初始化时是否重新配置（命令行入口使用）
            default_level: 命令行和环境变量都未给出时的级别（来自配置文件）
            default_file: 命令行和环境变量都未给出时的日志文件（来自配置文件）
        """
        if cls._initialized and not force:
            return

        load_dotenv()
        log_level = log_level or os.getenv(ENV_LOG_LEVEL) or default_level
        log_file = log_file or os.getenv(ENV_LOG_FILE) or default_file

        level = getattr(logging, str(log_level).upper(), logging.INFO)
        handlers = [logging.StreamHandler()]
        if log_file:
            # 确保日志目录存在
            log_path = Path(log_file)
            log_path.parent.mkdir(parents=True, exist_ok=True)
            handlers.insert(0, logging.FileHandler(log_path, encoding="utf-8"))

        logging.basicConfig(
            level=level,
            format=LOG_FORMAT,
            datefmt=DATE_FORMAT,
            handlers=handlers,
            force=True,
        )
        cls._initialized = True

    @classmethod
    def get_logger(cls, name: str) -> logging.Logger:
        """
        获取指定名称的日志器

        Args:
            name: 日志器名称，通常使用模块名

        Returns:
            Logger实例
        """
        if not cls._initialized:
            cls.setup_logging()

        if name not in cls._loggers:
            cls._loggers[name] = logging.getLogger(name)

        return cls._loggers[name]


# 便捷函数，供其他模块使用
def get_logger(name: str) -> logging.Logger:
    """获取日志器的便捷函数"""
    return AppLogger.get_logger(name)
