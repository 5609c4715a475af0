"""
配置加载模块

从 JSON 文件加载流水线配置（缺失或字段不合法时抛出 ConfigError，由命令行映射为退出码 2）
"""

import json
import os
from dataclasses import replace
from typing import Optional

from app.config.schema import PipelineConfig, pipeline_config_from_dict
from app.utils.error_handler import ConfigError
from app.utils.logger import get_logger
from utils.paths import get_config_path

logger = get_logger(__name__)


def load_config(config_path: Optional[str] = None, seed: Optional[int] = None) -> PipelineConfig:
    """
    加载配置

    Args:
        config_path: 配置文件路径，默认为 config/config.json
        seed: 命令行 --seed，覆盖文件中的根种子

    Returns:
        PipelineConfig
    """
    config_path = config_path or get_config_path()
    if not os.path.exists(config_path):
        raise ConfigError(f"<file>: 未找到配置文件 {config_path}",
                          user_message=f"[配置错误] 未找到配置文件: {config_path}")
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"<file>: 解析 {config_path} 失败: {e}", original_exception=e) from e
    except OSError as e:
        raise ConfigError(f"<file>: 读取 {config_path} 失败: {e}", original_exception=e) from e

    base_dir = os.path.dirname(os.path.abspath(config_path))
    config = pipeline_config_from_dict(data, base_dir=base_dir)
    if seed is not None:
        if seed < 0:
            raise ConfigError(f"seed: 必须为非负整数，实际 {seed}")
        config = replace(config, seed=seed)
    logger.info(f"配置加载完成: {config_path} (seed={config.seed})")
    return config
