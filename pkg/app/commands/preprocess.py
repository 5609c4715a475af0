"""
preprocess 命令

对每条入选录音：峰值归一化 -> Butterworth 低通 -> 重采样 -> 迟滞分段，
每个片段写成一个 WAV，并输出片段索引 segments.csv
"""

import glob
import os

import pandas as pd
from tqdm import tqdm

from app.audio.dsp import extract_segment, preprocess_clip, segment_coughs
from app.audio.wav_io import read_wav, write_wav
from app.commands.base_command import BaseCommand, select_records
from app.dal.artifacts import write_csv, write_sidecar
from app.utils.error_handler import CoughGanError, DataError, get_error_handler
from app.utils.error_utils import error_context, log_and_skip
from app.utils.logger import get_logger
from utils.paths import ensure_dir

logger = get_logger(__name__)

SEGMENT_COLUMNS = ["segment_id", "uuid", "segment_index", "start_sample", "end_sample", "sample_rate_hz", "path"]


def segment_id(uuid: str, index: int) -> str:
    return f"{uuid}_{index:03d}"


class PreprocessCommand(BaseCommand):
    """预处理并分段"""

    name = "preprocess"

    def execute(self) -> int:
        dsp = self.config.dsp
        records = select_records(self)
        segments_dir = ensure_dir(self.work.segments_dir)
        # 重跑时先清掉旧片段，保证输出只取决于输入
        for stale in glob.glob(os.path.join(segments_dir, "*.wav")):
            os.remove(stale)

        rows = []
        failures = 0
        audio_dir = self.audio_dir()
        for record in tqdm(records, desc="preprocess", unit="file"):
            source = os.path.join(audio_dir, record.audio_path)
            try:
                with error_context("预处理录音", self.name, uuid=record.uuid, path=source):
                    clip = preprocess_clip(read_wav(source), dsp.filter_order, dsp.cutoff_hz, dsp.target_rate_hz)
                    for index, bounds in enumerate(segment_coughs(clip, dsp.segmentation)):
                        name = segment_id(record.uuid, index)
                        write_wav(extract_segment(clip, bounds), os.path.join(segments_dir, f"{name}.wav"))
                        rows.append([name, record.uuid, index, bounds.start_sample, bounds.end_sample,
                                     clip.sample_rate_hz, f"segments/{name}.wav"])
            except CoughGanError as e:
                failures += 1
                log_and_skip(e, "预处理录音", self.name, uuid=record.uuid)

        frame = pd.DataFrame(rows, columns=SEGMENT_COLUMNS)
        by_category = get_error_handler().get_error_stats()["by_category"]
        write_csv(frame, self.work.segment_index)
        write_sidecar(self.work.segment_index, self.metadata({"recordings": len(records), "failures": failures,
                                                              "failures_by_category": by_category}))
        print(f"预处理完成: 录音 {len(records)} 条, 片段 {len(frame)} 个, 失败 {failures} 条")
        if failures:
            error = DataError(f"{failures} 条录音无法处理，已跳过 {by_category}")
            logger.error(f"[{error.error_id}] {error}")
            return error.exit_code
        return 0
