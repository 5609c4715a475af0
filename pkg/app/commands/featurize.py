"""
featurize 命令

每个片段一条 1×128×24 记录（单位化梅尔谱），标签取自清单；
按录音 uuid 分层划分训练/验证/测试集并写入 split.json
"""

import os
from collections import Counter

import numpy as np
from tqdm import tqdm

from app.audio.features import mel_spectrogram_db, scale_to_unit
from app.audio.manifest import stratified_split
from app.audio.wav_io import read_wav
from app.commands.base_command import BaseCommand, select_records
from app.commands.preprocess import SEGMENT_COLUMNS
from app.dal.artifacts import read_csv, write_json
from app.dal.spectrogram_store import SpectrogramSet, save_records
from app.utils.error_handler import CoughGanError, DataError
from app.utils.error_utils import error_context, log_and_skip
from app.utils.logger import get_logger
from utils.paths import ensure_dir

logger = get_logger(__name__)


class FeaturizeCommand(BaseCommand):
    """提取梅尔谱特征"""

    name = "featurize"

    def execute(self) -> int:
        classes = self.config.classes
        top_db = self.config.features.top_db
        segments = read_csv(self.require_file(self.work.segment_index, "segments.csv（请先运行 preprocess）"),
                            SEGMENT_COLUMNS, dtype={"segment_id": str, "uuid": str, "path": str})
        by_uuid = {r.uuid: r for r in select_records(self)}
        ensure_dir(self.work.root)

        values, labels, ids = [], [], []
        skipped = 0
        for row in tqdm(segments.itertuples(index=False), total=len(segments), desc="featurize", unit="segment"):
            record = by_uuid.get(row.uuid)
            if record is None or record.label is None:
                logger.warning(f"片段 {row.segment_id} 没有可用标签，已跳过")
                skipped += 1
                continue
            path = os.path.join(self.work.root, row.path)
            try:
                with error_context("提取特征", self.name, segment=row.segment_id, path=path):
                    unit = scale_to_unit(mel_spectrogram_db(read_wav(path), top_db))
            except CoughGanError as e:
                log_and_skip(e, "提取特征", self.name, segment=row.segment_id)
                skipped += 1
                continue
            values.append(unit.values)
            labels.append(classes.index(record.label))
            ids.append(row.segment_id)

        if not values:
            raise DataError("没有得到任何特征记录")
        records = SpectrogramSet(np.stack(values)[:, None], np.asarray(labels), classes, tuple(ids))

        # 只对真正产生了特征的录音做划分
        featurized = set(ids)
        with_features = sorted({row.uuid for row in segments.itertuples(index=False) if row.segment_id in featurized})
        split = stratified_split([by_uuid[u] for u in with_features], self.config.manifest.split_ratios,
                                 self.seed_for("split"))
        parts = split.part_of()
        write_json({
            "seed": split.seed,
            "ratios": list(self.config.manifest.split_ratios),
            "parts": dict(sorted(parts.items())),
            "test_hash": split.test_hash(),
            "counts": dict(Counter(parts.values())),
        }, self.work.split)

        save_records(records, self.work.features, self.metadata({"top_db": top_db, "scale": "unit"}))
        summary = ", ".join(f"{name}={count}" for name, count in records.class_counts().items())
        print(f"特征提取完成: 记录 {len(records)} 条 ({summary}), 跳过 {skipped} 个片段")
        print(f"数据划分: train={len(split.train)} validation={len(split.validation)} test={len(split.test)} "
              f"录音, 测试集指纹 {split.test_hash()[:12]}")
        return 0
