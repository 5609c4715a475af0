"""
产物写出

CSV（pandas）、JSON 文档与运行元数据旁注文件；所有输出都不含时间戳，重跑逐字节一致
"""

import json
from typing import Any, Dict, Optional

import pandas as pd

from app.utils.error_handler import FormatError
from app.utils.error_utils import error_context
from app.utils.logger import get_logger

logger = get_logger(__name__)


def write_json(document: Dict[str, Any], path: str) -> None:
    with error_context("写入JSON", "artifacts", path=path):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(document, f, ensure_ascii=False, indent=2, sort_keys=True, allow_nan=False)
            f.write("\n")
    logger.debug(f"已写入: {path}")


def read_json(path: str) -> Dict[str, Any]:
    with error_context("读取JSON", "artifacts", path=path):
        with open(path, "r", encoding="utf-8") as f:
            try:
                return json.load(f)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path} 不是合法 JSON: {e}", original_exception=e) from e


def write_csv(frame: pd.DataFrame, path: str) -> None:
    with error_context("写入CSV", "artifacts", path=path):
        frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    logger.debug(f"已写入 {len(frame)} 行: {path}")


def read_csv(path: str, required_columns=(), dtype=None) -> pd.DataFrame:
    """读取 CSV；缺列或无法解析时抛 FormatError"""
    with error_context("读取CSV", "artifacts", path=path):
        try:
            frame = pd.read_csv(path, dtype=dtype, float_precision="round_trip")
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
            raise FormatError(f"{path} 无法解析为 CSV: {e}", original_exception=e) from e
    missing = [c for c in required_columns if c not in frame.columns]
    if missing:
        raise FormatError(f"{path} 缺少列 {missing}")
    return frame


def run_metadata(command: str, config_snapshot: Dict[str, Any], seed: int,
                 extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """嵌入每个产物的运行信息：命令、根种子、完整配置快照"""
    meta = {"command": command, "seed": int(seed), "config": config_snapshot}
    meta.update(extra or {})
    return meta


def write_sidecar(path: str, metadata: Dict[str, Any]) -> str:
    """CSV/图片等无法内嵌元数据的产物，旁边写一个 <文件>.meta.json"""
    sidecar = f"{path}.meta.json"
    write_json(metadata, sidecar)
    return sidecar
