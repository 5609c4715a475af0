"""
数据访问层(Data Access Layer)

提供产物的读写接口，包括：
- ACGN 检查点容器
- 谱图记录集
- 模型检查点
- CSV/JSON 产物
"""

from .checkpoint import CheckpointContainer, load_container, save_container
from .spectrogram_store import SpectrogramSet, load_records, save_records

__all__ = [
    'CheckpointContainer',
    'load_container',
    'save_container',
    'SpectrogramSet',
    'load_records',
    'save_records',
]
