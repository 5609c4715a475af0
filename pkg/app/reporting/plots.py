"""
绘图

训练曲线与灰度谱图网格。使用 Agg 后端，去掉 PNG/SVG 中的软件和日期元数据，固定 SVG 哈希盐，
同样的输入重跑得到逐字节相同的图像
"""

import math
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from app.utils.error_handler import FormatError  # noqa: E402
from app.utils.error_utils import error_context  # noqa: E402
from app.utils.logger import get_logger  # noqa: E402

logger = get_logger(__name__)

plt.rcParams["svg.hashsalt"] = "coughgan"
plt.rcParams["path.simplify"] = False

# 历史 CSV 的曲线分组：图名 -> 列
GAN_CURVES: Dict[str, List[str]] = {
    "losses": ["disc_real_loss", "disc_fake_loss", "gen_loss"],
    "adversarial_probability": ["p_real", "p_fake"],
    "real_class_accuracy": ["real_class_acc"],
    "noise_variance": ["noise_var"],
}

CLASSIFIER_CURVES: Dict[str, List[str]] = {
    "loss": ["train_loss", "val_loss"],
    "accuracy": ["train_accuracy", "val_accuracy"],
}

COLORS = ["#d73c49", "#417e90", "#6a9a3a", "#8c6bb1"]


def _metadata(fmt: str) -> dict:
    if fmt == "svg":
        return {"Date": None, "Creator": None}
    return {"Software": None}


def _save(fig, path: str, fmt: str, dpi: int) -> str:
    with error_context("保存图像", "plots", path=path):
        fig.savefig(path, format=fmt, dpi=dpi, metadata=_metadata(fmt))
    plt.close(fig)
    logger.debug(f"图像已保存: {path}")
    return path


def curve_groups(frame: pd.DataFrame) -> Dict[str, List[str]]:
    """根据列名判断是 GAN 历史还是分类器历史"""
    for groups in (GAN_CURVES, CLASSIFIER_CURVES):
        if all(c in frame.columns for cols in groups.values() for c in cols):
            return groups
    raise FormatError(f"无法识别的历史 CSV 列: {list(frame.columns)}")


def plot_history(frame: pd.DataFrame, path: str, columns: Sequence[str], title: str = "",
                 fmt: str = "png", dpi: int = 100) -> str:
    """一张图中画若干条随 epoch 变化的曲线"""
    if "epoch" not in frame.columns:
        raise FormatError("历史 CSV 缺少 epoch 列")
    fig, ax = plt.subplots(figsize=(8, 4))
    epochs = frame["epoch"].to_numpy() + 1
    for index, column in enumerate(columns):
        values = pd.to_numeric(frame[column], errors="coerce").to_numpy()
        if np.any(~np.isfinite(values)):
            raise FormatError(f"列 {column} 含有非数值")
        ax.plot(epochs, values, label=column, linewidth=0.8, color=COLORS[index % len(COLORS)])
    ax.set_xlabel("Epoch")
    ax.set_title(title)
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.grid(True)
    ax.legend(loc=1, borderaxespad=0.0)
    fig.tight_layout()
    return _save(fig, path, fmt, dpi)


def plot_spectrogram_grid(spectrograms: np.ndarray, path: str, titles: Optional[Sequence[str]] = None,
                          ncols: int = 4, fmt: str = "png", dpi: int = 100, suptitle: str = "") -> str:
    """
    灰度谱图网格

    Args:
        spectrograms: N×1×h×w 或 N×h×w，取值 [-1, 1]
        ncols: 每行列数，行数 = ceil(N / ncols)
    """
    images = np.asarray(spectrograms, dtype=np.float64)
    if images.ndim == 4:
        images = images[:, 0]
    if images.ndim != 3 or images.shape[0] == 0:
        raise FormatError(f"谱图网格需要非空的 N×h×w 输入，实际 {images.shape}")
    count = images.shape[0]
    ncols = min(ncols, count)
    nrows = math.ceil(count / ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(1.6 * ncols, 3.2 * nrows), squeeze=False)
    for index, ax in enumerate(axes.flat):
        ax.set_xticks([])
        ax.set_yticks([])
        if index >= count:
            ax.axis("off")
            continue
        ax.imshow(images[index], cmap="gray", origin="lower", aspect="auto", vmin=-1.0, vmax=1.0,
                  interpolation="nearest")
        if titles is not None:
            ax.set_title(titles[index], fontsize=7)
    if suptitle:
        fig.suptitle(suptitle)
    fig.tight_layout()
    return _save(fig, path, fmt, dpi)


def plot_comparison(left: np.ndarray, right: np.ndarray, path: str, left_title: str = "real",
                    right_title: str = "synthetic", ncols: int = 4, fmt: str = "png", dpi: int = 100) -> str:
    """左右并排对比两组谱图（例如真实样本与合成样本）"""
    groups = []
    for name, images in ((left_title, left), (right_title, right)):
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 4:
            images = images[:, 0]
        if images.ndim != 3 or images.shape[0] == 0:
            raise FormatError(f"{name}: 需要非空的 N×h×w 输入，实际 {images.shape}")
        groups.append((name, images[:ncols]))
    fig, axes = plt.subplots(1, 2 * ncols, figsize=(1.4 * 2 * ncols, 3.4), squeeze=False)
    for side, (name, images) in enumerate(groups):
        for slot in range(ncols):
            ax = axes[0, side * ncols + slot]
            ax.set_xticks([])
            ax.set_yticks([])
            if slot >= images.shape[0]:
                ax.axis("off")
                continue
            ax.imshow(images[slot], cmap="gray", origin="lower", aspect="auto", vmin=-1.0, vmax=1.0,
                      interpolation="nearest")
            if slot == 0:
                ax.set_title(name, fontsize=8, loc="left")
    fig.tight_layout()
    return _save(fig, path, fmt, dpi)
