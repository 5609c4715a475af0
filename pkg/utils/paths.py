"""
路径工具模块

提供应用根目录、默认配置文件以及工作目录内各产物的路径
"""

import os
import sys
from dataclasses import dataclass
from typing import Optional

from app.utils.logger import get_logger

logger = get_logger(__name__)


def get_app_root():
    """
    获取应用根目录路径

    Returns:
        应用根目录的绝对路径
    """
    if getattr(sys, "frozen", False):
        # 打包后的可执行文件，返回执行文件所在目录
        return os.path.dirname(sys.executable)
    current_dir = os.path.dirname(os.path.abspath(__file__))
    return os.path.dirname(current_dir)


def get_config_path(config_filename="config.json"):
    """获取默认配置文件的路径"""
    return os.path.join(get_app_root(), "config", config_filename)


def resolve_path(base_dir: str, path: Optional[str]) -> Optional[str]:
    """相对路径以配置文件所在目录为基准"""
    if path is None:
        return None
    if os.path.isabs(path):
        return path
    return os.path.normpath(os.path.join(base_dir, path))


def ensure_dir(path: str) -> str:
    if not os.path.isdir(path):
        os.makedirs(path, exist_ok=True)
        logger.debug(f"创建目录: {path}")
    return path


@dataclass(frozen=True)
class WorkPaths:
    """
    工作目录布局

    work/
      segments/<uuid>_<k>.wav     预处理后的咳嗽片段
      segments.csv                片段索引
      features.acgn               梅尔谱记录
      split.json                  按 uuid 的数据划分 + 测试集哈希
      gan/                        生成器/判别器检查点、训练历史、样本快照
      synth/                      合成谱记录（及可选音频）
      classifier/                 分类器检查点、训练历史、评估指标
      plots/                      图像
    """

    root: str

    @property
    def segments_dir(self) -> str:
        return os.path.join(self.root, "segments")

    @property
    def segment_index(self) -> str:
        return os.path.join(self.root, "segments.csv")

    @property
    def features(self) -> str:
        return os.path.join(self.root, "features.acgn")

    @property
    def split(self) -> str:
        return os.path.join(self.root, "split.json")

    @property
    def stats_dir(self) -> str:
        return os.path.join(self.root, "stats")

    @property
    def gan_dir(self) -> str:
        return os.path.join(self.root, "gan")

    @property
    def synth_dir(self) -> str:
        return os.path.join(self.root, "synth")

    @property
    def classifier_dir(self) -> str:
        return os.path.join(self.root, "classifier")

    @property
    def plots_dir(self) -> str:
        return os.path.join(self.root, "plots")
