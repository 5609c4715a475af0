"""
配置模块

流水线配置结构与校验
"""

from .schema import PipelineConfig, pipeline_config_from_dict

__all__ = ["PipelineConfig", "pipeline_config_from_dict"]
