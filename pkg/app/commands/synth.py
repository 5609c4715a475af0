"""
synth 命令

用生成器检查点按类别合成谱图，保存为记录文件；可选用 Griffin-Lim 还原为音频
"""

import os

import numpy as np

from app.audio.dsp import normalize_peak
from app.audio.features import UnitSpectrogram, griffin_lim, unscale
from app.audio.wav_io import write_wav
from app.commands.base_command import BaseCommand, class_index
from app.dal.model_store import load_model
from app.dal.spectrogram_store import SpectrogramSet, save_records
from app.gan.training import synthesize
from app.utils.error_handler import ConfigError, DomainError
from app.utils.logger import get_logger
from utils.paths import ensure_dir

logger = get_logger(__name__)


class SynthCommand(BaseCommand):
    """条件合成"""

    name = "synth"

    def execute(self) -> int:
        count = self.arg("count", self.config.augmentation.count_per_class)
        if count is None:
            raise ConfigError("augmentation.count_per_class: 未设置，且命令行未给出 --count",
                              user_message="[配置错误] 请用 --count 指定每类合成数量")
        if count <= 0:
            raise ConfigError(f"--count: 必须为正整数，实际 {count}")
        classes = self.config.classes
        wanted = [class_index(self.config, self.args.class_label)] if self.arg("class_label") else \
            list(range(len(classes)))

        checkpoint = self.arg("checkpoint", os.path.join(self.work.gan_dir, "generator.acgn"))
        generator, container = load_model(self.require_file(checkpoint, "生成器检查点（请先运行 train-gan）"),
                                          "generator")
        if generator.cfg.n_classes != len(classes):
            raise DomainError(f"生成器类别数 {generator.cfg.n_classes} 与配置类别表 {classes} 不一致")

        out_dir = self.output_dir(self.work.synth_dir)
        spectrograms, labels, ids = [], [], []
        for label in wanted:
            samples = synthesize(generator, label, count, self.seed_for(f"synth/{classes[label]}"),
                                 self.config.synthesis.batch_size)
            spectrograms.append(samples.spectrograms)
            labels.append(samples.labels)
            ids.extend(f"synth_{label}_{k:05d}" for k in range(count))
        records = SpectrogramSet(np.concatenate(spectrograms), np.concatenate(labels), classes, tuple(ids),
                                 ("synthetic",) * len(ids))
        path = os.path.join(out_dir, "synthetic.acgn")
        save_records(records, path, self.metadata({
            "generator_checkpoint": os.path.basename(checkpoint),
            "generator_epoch": container.metadata.get("epoch"),
            "count_per_class": count,
        }))
        if self.config.synthesis.export_audio:
            self._export_audio(records, ensure_dir(os.path.join(out_dir, "audio")))
        print(f"合成完成: {len(records)} 条记录 {records.class_counts()} -> {path}")
        return 0

    def _export_audio(self, records: SpectrogramSet, audio_dir: str) -> None:
        top_db = self.config.features.top_db
        iterations = self.config.features.griffin_lim_iterations
        for index, segment_id in enumerate(records.uuids):
            spec = unscale(UnitSpectrogram(records.spectrograms[index, 0]), top_db)
            clip = normalize_peak(griffin_lim(spec, iterations))
            write_wav(clip, os.path.join(audio_dir, f"{segment_id}.wav"))
        logger.info(f"已导出 {len(records)} 段 Griffin-Lim 音频: {audio_dir}")
