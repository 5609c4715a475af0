"""
命令基类

每个子命令一个 BaseCommand 子类：持有配置与命令行参数，execute() 返回退出码
"""

import dataclasses
import os
from argparse import Namespace
from typing import Any, Dict, List, Optional, Sequence

from app.audio.manifest import ManifestRecord, balance_classes, filter_manifest, load_manifest, uuid_hash
from app.config.schema import PipelineConfig
from app.dal.artifacts import read_json, run_metadata
from app.dal.spectrogram_store import SpectrogramSet
from app.nn.tensor import derive_seed
from app.utils.error_handler import ConfigError, ContractError, DataError
from app.utils.logger import get_logger
from utils.paths import WorkPaths, ensure_dir, resolve_path

logger = get_logger(__name__)

PARTS = ("train", "validation", "test")


class BaseCommand:
    """
    命令模式基类，所有具体命令需实现 execute 方法。
    """

    name = ""

    def __init__(self, config: PipelineConfig, args: Optional[Namespace] = None):
        self.config = config
        self.args = args if args is not None else Namespace()
        self.work = WorkPaths(resolve_path(config.base_dir, config.paths.work_dir))

    def execute(self) -> int:
        raise NotImplementedError("子类必须实现execute方法")

    # === 公共工具 ===

    def arg(self, key: str, default: Any = None) -> Any:
        value = getattr(self.args, key, None)
        return default if value is None else value

    def seed_for(self, stream: str) -> int:
        """根种子的命名子流"""
        return derive_seed(self.config.seed, stream)

    def metadata(self, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """写入每个产物的配置快照与种子"""
        return run_metadata(self.name, self.config.to_dict(), self.config.seed, extra)

    def output_dir(self, default: str) -> str:
        return ensure_dir(self.arg("output", default))

    def manifest_path(self) -> str:
        return resolve_path(self.config.base_dir, self.config.paths.manifest)

    def audio_dir(self) -> str:
        audio_dir = self.config.paths.audio_dir
        if audio_dir is None:
            return os.path.dirname(self.manifest_path())
        return resolve_path(self.config.base_dir, audio_dir)

    def require_file(self, path: str, hint: str) -> str:
        if not os.path.exists(path):
            raise DataError(f"缺少 {hint}: {path}", user_message=f"[数据错误] 缺少 {hint}: {path}")
        return path


def relabel(records: Sequence[ManifestRecord], label_field: str) -> List[ManifestRecord]:
    """label_field 为 status 时去掉 SSL 标签，使 record.label 回落到自报状态"""
    if label_field == "status_SSL":
        return list(records)
    return [dataclasses.replace(r, status_ssl=None) for r in records]


def select_records(command: BaseCommand) -> List[ManifestRecord]:
    """
    preprocess 与 featurize 共用的记录选择：读取清单 -> 质量过滤 -> 选择标签字段 -> 可选类别均衡

    结果按 uuid 排序
    """
    manifest = command.config.manifest
    records = load_manifest(command.require_file(command.manifest_path(), "清单文件"))
    records = filter_manifest(records, manifest.min_cough_detected, manifest.require_ssl)
    records = relabel(records, manifest.label_field)
    unknown = sorted({r.label for r in records if r.label is not None} - set(manifest.classes))
    if unknown:
        raise DataError(f"清单中出现类别表 {manifest.classes} 之外的标签: {unknown}")
    if manifest.balance:
        records = balance_classes([r for r in records if r.label is not None], command.seed_for("split"))
    return sorted(records, key=lambda r: r.uuid)


def recording_uuid(segment_id: str) -> str:
    """片段 id 为 <uuid>_<k>"""
    return segment_id.rsplit("_", 1)[0]


def load_split(command: BaseCommand) -> Dict[str, Any]:
    doc = read_json(command.require_file(command.work.split, "split.json（请先运行 featurize）"))
    for key in ("parts", "test_hash"):
        if key not in doc:
            raise DataError(f"split.json 缺少字段 {key}")
    return doc


def partition(records: SpectrogramSet, split_doc: Dict[str, Any]) -> Dict[str, SpectrogramSet]:
    """
    按 split.json 把记录分到 train/validation/test，并核对测试集指纹
    """
    parts = split_doc["parts"]
    test_uuids = [u for u, p in parts.items() if p == "test"]
    if uuid_hash(test_uuids) != split_doc["test_hash"]:
        raise ContractError("测试集指纹与 split.json 记录不一致，测试集已被改动")
    index: Dict[str, List[int]] = {part: [] for part in PARTS}
    for i, segment_id in enumerate(records.uuids):
        part = parts.get(recording_uuid(segment_id))
        if part is None:
            raise DataError(f"记录 {segment_id} 不在 split.json 中")
        index[part].append(i)
    present = {recording_uuid(records.uuids[i]) for i in index["test"]}
    if present != set(test_uuids):
        raise ContractError("特征文件中的测试录音与 split.json 不一致")
    return {part: records.take(index[part]) for part in PARTS}


def class_index(config: PipelineConfig, value: str) -> int:
    """类别名或索引 -> 索引"""
    classes = config.classes
    if value in classes:
        return classes.index(value)
    if value.isdigit() and int(value) < len(classes):
        return int(value)
    raise ConfigError(f"--class: 未知类别 {value!r}，可选 {list(classes)}")
