"""
检查点容器

二进制布局（小端）：
    b"ACGN" | 版本 u32 | 元数据长度 u32 | 元数据 UTF-8 JSON |
    条目数 u32 | 每个条目: 名称长度 u32, 名称 UTF-8, 秩 u32, 各维 u32 × 秩, float64 数据

模型权重、优化器状态和谱图记录都用这一格式保存；load(save(x)) 逐位相同
"""

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from app.utils.error_handler import FormatError, UnsupportedFormatError
from app.utils.error_utils import error_context
from app.utils.logger import get_logger

logger = get_logger(__name__)

MAGIC = b"ACGN"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")


@dataclass
class CheckpointContainer:
    """元数据 + 有序的命名数组"""

    metadata: Dict[str, Any] = field(default_factory=dict)
    entries: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)

    @property
    def kind(self) -> Optional[str]:
        return self.metadata.get("kind")

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self.entries:
            raise FormatError(f"重复的条目名: {name}")
        self.entries[name] = np.asarray(value, dtype=np.float64)

    def subset(self, prefix: str) -> "OrderedDict[str, np.ndarray]":
        """名称以 prefix 开头的条目（保留原顺序）"""
        return OrderedDict((k, v) for k, v in self.entries.items() if k.startswith(prefix))


def encode_container(container: CheckpointContainer) -> bytes:
    """序列化为字节"""
    meta = json.dumps(container.metadata, sort_keys=True, ensure_ascii=False, separators=(",", ":"),
                      allow_nan=False).encode("utf-8")
    parts = [MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(meta)), meta, _U32.pack(len(container.entries))]
    for name, value in container.entries.items():
        encoded = name.encode("utf-8")
        array = np.ascontiguousarray(value, dtype="<f8")
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(array.ndim))
        parts.extend(_U32.pack(dim) for dim in array.shape)
        parts.append(array.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise FormatError(f"检查点被截断: 读取{what}时需要 {size} 字节，剩余 {len(self.data) - self.offset}")
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def decode_container(data: bytes) -> CheckpointContainer:
    """从字节解析，校验魔数、版本和长度自洽"""
    reader = _Reader(data)
    if reader.take(4, "魔数") != MAGIC:
        raise FormatError("不是 ACGN 检查点文件（魔数不符）")
    version = reader.u32("版本")
    if version != FORMAT_VERSION:
        raise UnsupportedFormatError(f"不支持的检查点版本 {version}（当前 {FORMAT_VERSION}）")
    meta_bytes = reader.take(reader.u32("元数据长度"), "元数据")
    try:
        metadata = json.loads(meta_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"检查点元数据不是合法的 UTF-8 JSON: {e}", original_exception=e) from e

    container = CheckpointContainer(metadata=metadata)
    for _ in range(reader.u32("条目数")):
        try:
            name = reader.take(reader.u32("名称长度"), "名称").decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"条目名不是合法 UTF-8: {e}", original_exception=e) from e
        rank = reader.u32(f"{name} 的秩")
        shape = tuple(reader.u32(f"{name} 的维度") for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        raw = reader.take(count * 8, f"{name} 的数据")
        container.add(name, np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64))
    if reader.offset != len(data):
        raise FormatError(f"检查点末尾有 {len(data) - reader.offset} 字节多余数据")
    return container


def save_container(container: CheckpointContainer, path: str) -> None:
    payload = encode_container(container)
    with error_context("写入检查点", "checkpoint", path=path):
        with open(path, "wb") as f:
            f.write(payload)
    logger.debug(f"检查点已写入: {path} ({len(container.entries)} 个条目, {len(payload)} 字节)")


def load_container(path: str) -> CheckpointContainer:
    with error_context("读取检查点", "checkpoint", path=path):
        with open(path, "rb") as f:
            data = f.read()
    return decode_container(data)
