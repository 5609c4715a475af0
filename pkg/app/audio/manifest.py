"""
数据清单模块

读取众包咳嗽数据集的元数据CSV，按质量过滤，做分层划分和统计
"""

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.utils.error_handler import (
    DataError,
    DomainError,
    ErrorContext,
    ManifestRowError,
    ManifestSchemaError,
    StorageError,
    StratificationWarning,
)
from app.utils.logger import get_logger

logger = get_logger(__name__)

STATUS_VALUES = ("healthy", "symptomatic", "COVID-19")
STATUS_SSL_VALUES = ("healthy", "COVID-19")

MANDATORY_COLUMNS = ("uuid", "cough_detected")
HISTOGRAM_BINS = 10


@dataclass(frozen=True)
class ManifestRecord:
    """清单中的一条录音记录"""

    uuid: str
    audio_path: str
    cough_detected: float
    status: Optional[str] = None
    status_ssl: Optional[str] = None
    snr: Optional[float] = None

    @property
    def label(self) -> Optional[str]:
        """分层用的类别：优先 status_SSL，其次 status"""
        return self.status_ssl if self.status_ssl is not None else self.status


@dataclass(frozen=True)
class DatasetSplit:
    """按 uuid 互不相交的训练/验证/测试划分"""

    train: Tuple[ManifestRecord, ...]
    validation: Tuple[ManifestRecord, ...]
    test: Tuple[ManifestRecord, ...]
    seed: int

    def part_of(self) -> Dict[str, str]:
        """uuid -> 所属部分名"""
        mapping = {}
        for name, part in (("train", self.train), ("validation", self.validation), ("test", self.test)):
            for record in part:
                mapping[record.uuid] = name
        return mapping

    def test_hash(self) -> str:
        """测试集指纹：排序后的 uuid 的 sha256"""
        return uuid_hash(r.uuid for r in self.test)


def uuid_hash(uuids) -> str:
    digest = hashlib.sha256()
    for uuid in sorted(uuids):
        digest.update(uuid.encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


@dataclass
class ManifestStats:
    """清单统计表"""

    record_count: int
    class_counts: Dict[str, int] = field(default_factory=dict)
    histogram_edges: List[float] = field(default_factory=list)
    histogram_counts: List[int] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        """类别计数与直方图合并为一张长表，便于打印和写CSV"""
        rows = [{"section": "class", "key": k, "count": v} for k, v in self.class_counts.items()]
        for lo, hi, count in zip(self.histogram_edges[:-1], self.histogram_edges[1:], self.histogram_counts):
            rows.append({"section": "cough_detected", "key": f"[{lo:.1f},{hi:.1f}{']' if hi >= 1.0 else ')'}",
                         "count": count})
        return pd.DataFrame(rows, columns=["section", "key", "count"])


def _optional_str(value: str) -> Optional[str]:
    value = value.strip()
    return value or None


def load_manifest(csv_path: Union[str, Path]) -> List[ManifestRecord]:
    """
    读取清单CSV

    必需列 uuid, cough_detected；可选列 status, status_SSL, SNR, audio_path。
    音频路径相对于清单所在目录，缺省为 <uuid>.wav

    Args:
        csv_path: 清单CSV路径

    Returns:
        按行顺序的记录列表
    """
    csv_path = Path(csv_path)
    if not csv_path.exists():
        raise StorageError(f"清单文件不存在: {csv_path}",
                           context=ErrorContext(operation="load_manifest", component="manifest"))
    try:
        frame = pd.read_csv(csv_path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ManifestSchemaError(f"清单CSV无法解析 {csv_path}: {e}", original_exception=e) from e

    missing = [c for c in MANDATORY_COLUMNS if c not in frame.columns]
    if missing:
        raise ManifestSchemaError(f"清单缺少必需列 {missing}: {csv_path}")

    records: List[ManifestRecord] = []
    seen = set()
    for row_index, row in enumerate(frame.to_dict(orient="records")):
        uuid = row["uuid"].strip()
        if not uuid:
            raise ManifestRowError(f"第 {row_index} 行: uuid 为空", row_index=row_index)
        if uuid in seen:
            raise ManifestRowError(f"第 {row_index} 行: uuid 重复 {uuid}", row_index=row_index)
        seen.add(uuid)

        try:
            cough_detected = float(row["cough_detected"])
        except ValueError as e:
            raise ManifestRowError(f"第 {row_index} 行: cough_detected 无法解析 {row['cough_detected']!r}",
                                   row_index=row_index, original_exception=e) from e
        if not 0.0 <= cough_detected <= 1.0:
            raise ManifestRowError(f"第 {row_index} 行: cough_detected 超出 [0,1]: {cough_detected}",
                                   row_index=row_index)

        status = _optional_str(row.get("status", ""))
        if status is not None and status not in STATUS_VALUES:
            raise ManifestRowError(f"第 {row_index} 行: 未知 status {status!r}", row_index=row_index)
        status_ssl = _optional_str(row.get("status_SSL", ""))
        if status_ssl is not None and status_ssl not in STATUS_SSL_VALUES:
            raise ManifestRowError(f"第 {row_index} 行: 未知 status_SSL {status_ssl!r}", row_index=row_index)

        snr_text = _optional_str(row.get("SNR", ""))
        try:
            snr = float(snr_text) if snr_text is not None else None
        except ValueError as e:
            raise ManifestRowError(f"第 {row_index} 行: SNR 无法解析 {snr_text!r}",
                                   row_index=row_index, original_exception=e) from e

        audio_path = _optional_str(row.get("audio_path", "")) or f"{uuid}.wav"
        records.append(ManifestRecord(uuid, audio_path, cough_detected, status, status_ssl, snr))

    logger.info(f"清单已加载: {csv_path} 共 {len(records)} 条记录")
    return records


def filter_manifest(records: Sequence[ManifestRecord],
                    min_cough_detected: float,
                    require_ssl: bool) -> List[ManifestRecord]:
    """
    按质量过滤：cough_detected >= 阈值（含边界），可选要求 status_SSL 存在

    保持输入顺序
    """
    if not 0.0 <= min_cough_detected <= 1.0:
        raise DomainError(f"min_cough_detected 必须在 [0,1] 内: {min_cough_detected}")
    kept = [
        r for r in records
        if r.cough_detected >= min_cough_detected and (not require_ssl or r.status_ssl is not None)
    ]
    logger.info(f"质量过滤: 保留 {len(kept)}/{len(records)} (阈值 {min_cough_detected}, require_ssl={require_ssl})")
    return kept


def _group_by_label(records: Sequence[ManifestRecord]) -> Dict[str, List[ManifestRecord]]:
    groups: Dict[str, List[ManifestRecord]] = {}
    for record in records:
        if record.label is None:
            raise DataError(f"记录 {record.uuid} 没有类别标签，无法分层")
        groups.setdefault(record.label, []).append(record)
    return groups


def balance_classes(records: Sequence[ManifestRecord], seed: int) -> List[ManifestRecord]:
    """
    类别均衡：每个类别随机下采样到最小类别的数量

    输出按原始顺序排列
    """
    groups = _group_by_label(records)
    if not groups:
        return []
    minority = min(len(g) for g in groups.values())
    rng = np.random.default_rng(seed)
    keep = set()
    for label in sorted(groups):
        members = groups[label]
        chosen = rng.permutation(len(members))[:minority]
        keep.update(members[i].uuid for i in chosen)
    balanced = [r for r in records if r.uuid in keep]
    logger.info(f"类别均衡: 每类 {minority} 条，共 {len(balanced)} 条")
    return balanced


def _part_sizes(n: int, ratios: Tuple[float, float, float]) -> Tuple[int, int, int]:
    n_train = int(math.floor(n * ratios[0] + 0.5))
    n_val = int(math.floor(n * ratios[1] + 0.5))
    n_train = min(n_train, n)
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def stratified_split(records: Sequence[ManifestRecord],
                     ratios: Tuple[float, float, float],
                     seed: int) -> DatasetSplit:
    """
    分层划分训练/验证/测试集

    每个类别用种子打乱后按比例连续切分；少于3条的类别整体放入训练集并给出警告

    Args:
        records: 带类别标签的记录
        ratios: (train, validation, test) 比例，和为 1
        seed: 随机种子，相同种子得到相同划分
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DomainError(f"划分比例必须为三个正数且和为1: {ratios}")

    groups = _group_by_label(records)
    rng = np.random.default_rng(seed)
    train: List[ManifestRecord] = []
    validation: List[ManifestRecord] = []
    test: List[ManifestRecord] = []
    for label in sorted(groups):
        members = groups[label]
        if len(members) < 3:
            message = f"类别 {label!r} 只有 {len(members)} 条记录，整体放入训练集"
            logger.warning(message)
            warnings.warn(message, StratificationWarning, stacklevel=2)
            train.extend(members)
            continue
        order = rng.permutation(len(members))
        shuffled = [members[i] for i in order]
        n_train, n_val, _ = _part_sizes(len(members), ratios)
        train.extend(shuffled[:n_train])
        validation.extend(shuffled[n_train:n_train + n_val])
        test.extend(shuffled[n_train + n_val:])

    logger.info(f"分层划分 (seed={seed}): train={len(train)} validation={len(validation)} test={len(test)}")
    return DatasetSplit(tuple(train), tuple(validation), tuple(test), seed)


def manifest_stats(records: Sequence[ManifestRecord]) -> ManifestStats:
    """类别计数 + cough_detected 直方图（10 个等宽区间覆盖 [0,1]）"""
    class_counts = {label: 0 for label in STATUS_VALUES}
    class_counts["unlabeled"] = 0
    for record in records:
        key = record.label if record.label is not None else "unlabeled"
        class_counts[key] = class_counts.get(key, 0) + 1

    values = np.array([r.cough_detected for r in records], dtype=np.float64)
    counts, edges = np.histogram(values, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    return ManifestStats(
        record_count=len(records),
        class_counts=class_counts,
        histogram_edges=[float(e) for e in edges],
        histogram_counts=[int(c) for c in counts],
    )
