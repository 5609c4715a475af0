"""
stats 命令

清单统计：各类别记录数与 cough_detected 直方图（全部记录与质量过滤后各一份）
"""

import os

from app.audio.manifest import filter_manifest, load_manifest, manifest_stats
from app.commands.base_command import BaseCommand, relabel
from app.dal.artifacts import write_csv, write_sidecar
from app.utils.logger import get_logger

logger = get_logger(__name__)


class StatsCommand(BaseCommand):
    """清单统计"""

    name = "stats"

    def execute(self) -> int:
        manifest = self.config.manifest
        records = load_manifest(self.require_file(self.manifest_path(), "清单文件"))
        selections = {
            "all": records,
            "filtered": relabel(filter_manifest(records, manifest.min_cough_detected, manifest.require_ssl),
                                manifest.label_field),
        }
        out_dir = self.output_dir(self.work.stats_dir)
        for name, selected in selections.items():
            stats = manifest_stats(selected)
            path = os.path.join(out_dir, f"manifest_{name}.csv")
            write_csv(stats.to_frame(), path)
            write_sidecar(path, self.metadata({"selection": name, "record_count": stats.record_count}))
            counts = ", ".join(f"{label}={count}" for label, count in stats.class_counts.items())
            print(f"[{name}] 记录 {stats.record_count} 条: {counts}")
            print(f"[{name}] cough_detected 直方图: {list(stats.histogram_counts)}")
        return 0
