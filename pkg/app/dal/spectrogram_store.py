"""
谱图记录集

带标签的 1×128×24 单位化梅尔谱集合，以 ACGN 容器保存：
每条记录一个条目 "record/000000"，标签、片段 id、来源写在元数据里
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Sequence, Tuple

import numpy as np

from app.dal.checkpoint import CheckpointContainer, load_container, save_container
from app.utils.error_handler import DataError, FormatError
from app.utils.logger import get_logger

logger = get_logger(__name__)

KIND = "spectrogram_records"
PROVENANCE_VALUES = ("real", "synthetic")


@dataclass
class SpectrogramSet:
    """
    带标签的谱图集合

    spectrograms: N×1×h×w，取值 [-1, 1]
    labels: 类别索引（对应 classes）
    uuids: 片段标识（真实样本为 <uuid>_<k>，合成样本为 synth_<类别>_<k>）
    provenance: 每条记录来源 real / synthetic
    """

    spectrograms: np.ndarray
    labels: np.ndarray
    classes: Tuple[str, ...]
    uuids: Tuple[str, ...] = ()
    provenance: Tuple[str, ...] = ()
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.spectrograms = np.asarray(self.spectrograms, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.classes = tuple(self.classes)
        count = self.labels.shape[0]
        if self.spectrograms.shape[0] != count or (count and self.spectrograms.ndim != 4):
            raise DataError(f"谱图 {self.spectrograms.shape} 与标签数 {count} 不一致")
        if count and (self.labels.min() < 0 or self.labels.max() >= len(self.classes)):
            raise DataError(f"标签超出类别表 {self.classes}")
        self.uuids = tuple(self.uuids) or tuple(f"record_{i:06d}" for i in range(count))
        self.provenance = tuple(self.provenance) or ("real",) * count
        if len(self.uuids) != count or len(self.provenance) != count:
            raise DataError("uuids/provenance 长度与记录数不一致")
        unknown = set(self.provenance) - set(PROVENANCE_VALUES)
        if unknown:
            raise DataError(f"未知来源标记: {sorted(unknown)}")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def image_shape(self) -> Tuple[int, ...]:
        return tuple(self.spectrograms.shape[1:])

    def take(self, index: Sequence[int]) -> "SpectrogramSet":
        index = np.asarray(index, dtype=np.int64)
        return SpectrogramSet(self.spectrograms[index], self.labels[index], self.classes,
                              tuple(self.uuids[i] for i in index), tuple(self.provenance[i] for i in index),
                              dict(self.metadata))

    def class_counts(self) -> Dict[str, int]:
        counts = np.bincount(self.labels, minlength=len(self.classes))
        return {name: int(counts[i]) for i, name in enumerate(self.classes)}

    def synthetic_count(self) -> int:
        return sum(1 for p in self.provenance if p == "synthetic")


def _record_name(index: int) -> str:
    return f"record/{index:06d}"


def to_container(records: SpectrogramSet, metadata: Dict[str, Any] = None) -> CheckpointContainer:
    meta = dict(records.metadata)
    meta.update(metadata or {})
    meta.update({
        "kind": KIND,
        "classes": list(records.classes),
        "labels": [int(v) for v in records.labels],
        "uuids": list(records.uuids),
        "provenance": list(records.provenance),
    })
    container = CheckpointContainer(metadata=meta)
    for index in range(len(records)):
        container.add(_record_name(index), records.spectrograms[index, 0])
    return container


def from_container(container: CheckpointContainer) -> SpectrogramSet:
    meta = dict(container.metadata)
    if meta.get("kind") != KIND:
        raise FormatError(f"不是谱图记录文件: kind={meta.get('kind')!r}")
    labels = meta.pop("labels")
    classes = meta.pop("classes")
    uuids = meta.pop("uuids")
    provenance = meta.pop("provenance")
    meta.pop("kind")
    if len(container.entries) != len(labels):
        raise FormatError(f"记录数 {len(container.entries)} 与标签数 {len(labels)} 不一致")
    arrays = [container.entries[_record_name(i)] for i in range(len(labels))]
    if arrays:
        spectrograms = np.stack(arrays)[:, None, :, :]
    else:
        spectrograms = np.zeros((0, 1, 0, 0))
    return SpectrogramSet(spectrograms, np.asarray(labels, dtype=np.int64), tuple(classes), tuple(uuids),
                          tuple(provenance), meta)


def save_records(records: SpectrogramSet, path: str, metadata: Dict[str, Any] = None) -> None:
    save_container(to_container(records, metadata), path)
    logger.info(f"已写入 {len(records)} 条谱图记录: {path} {records.class_counts()}")


def load_records(path: str) -> SpectrogramSet:
    records = from_container(load_container(path))
    logger.debug(f"已读取 {len(records)} 条谱图记录: {path}")
    return records


def concatenate(first: SpectrogramSet, second: SpectrogramSet) -> SpectrogramSet:
    """按顺序拼接两个记录集（类别表必须一致）"""
    if first.classes != second.classes:
        raise DataError(f"类别表不一致: {first.classes} vs {second.classes}")
    if len(first) and len(second) and first.image_shape != second.image_shape:
        raise DataError(f"谱图形状不一致: {first.image_shape} vs {second.image_shape}")
    if not len(first):
        return second.take(range(len(second)))
    if not len(second):
        return first.take(range(len(first)))
    return SpectrogramSet(np.concatenate([first.spectrograms, second.spectrograms]),
                          np.concatenate([first.labels, second.labels]), first.classes,
                          first.uuids + second.uuids, first.provenance + second.provenance,
                          dict(first.metadata))
