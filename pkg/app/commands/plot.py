"""
plot 命令

--input 为历史 CSV 时画训练曲线；为谱图记录文件时画灰度网格，
再给 --compare 时把两组谱图并排对比
"""

import os

from app.commands.base_command import BaseCommand
from app.dal.artifacts import read_csv, write_sidecar
from app.dal.spectrogram_store import load_records
from app.reporting import plots
from app.utils.error_handler import ConfigError, FormatError
from app.utils.logger import get_logger

logger = get_logger(__name__)

MAX_GRID_RECORDS = 64


class PlotCommand(BaseCommand):
    """绘图"""

    name = "plot"

    def execute(self) -> int:
        source = self.arg("input")
        if not source:
            raise ConfigError("--input: 需要历史 CSV 或谱图记录文件")
        self.require_file(source, "绘图输入")
        out_dir = self.output_dir(self.work.plots_dir)
        stem = os.path.splitext(os.path.basename(source))[0]

        if source.endswith(".csv"):
            written = self._curves(source, out_dir, stem)
        elif source.endswith(".acgn"):
            written = self._grids(source, out_dir, stem)
        else:
            raise FormatError(f"无法识别的绘图输入: {source}（需要 .csv 或 .acgn）")
        for path in written:
            write_sidecar(path, self.metadata({"input": os.path.basename(source)}))
            print(path)
        return 0

    def _curves(self, source: str, out_dir: str, stem: str):
        frame = read_csv(source, ["epoch"])
        fmt, dpi = self.config.plot.format, self.config.plot.dpi
        written = []
        for name, columns in plots.curve_groups(frame).items():
            path = os.path.join(out_dir, f"{stem}_{name}.{fmt}")
            written.append(plots.plot_history(frame, path, columns, title=name, fmt=fmt, dpi=dpi))
        return written

    def _grids(self, source: str, out_dir: str, stem: str):
        cfg = self.config.plot
        records = load_records(source)
        if not len(records):
            raise FormatError(f"{source} 中没有记录")
        shown = records.take(range(min(len(records), MAX_GRID_RECORDS)))
        titles = [f"{records.classes[label]}" for label in shown.labels]
        compare = self.arg("compare")
        if compare:
            other = load_records(self.require_file(compare, "对比记录文件"))
            path = os.path.join(out_dir, f"{stem}_vs_{os.path.splitext(os.path.basename(compare))[0]}.{cfg.format}")
            return [plots.plot_comparison(shown.spectrograms, other.spectrograms, path,
                                          left_title=stem, right_title=os.path.basename(compare),
                                          ncols=cfg.grid_columns, fmt=cfg.format, dpi=cfg.dpi)]
        path = os.path.join(out_dir, f"{stem}_grid.{cfg.format}")
        return [plots.plot_spectrogram_grid(shown.spectrograms, path, titles, cfg.grid_columns, cfg.format, cfg.dpi)]
