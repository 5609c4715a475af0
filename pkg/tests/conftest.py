"""
测试公共夹具

合成的咳嗽样音频、小型清单、缩小尺寸的模型配置，以及一个可以完整跑通流水线的临时工作区
"""

import json

import numpy as np
import pytest

from app.audio.wav_io import AudioClip, write_wav
from app.config.schema import ClassifierConfig, GanConfig

RATE = 12000


def burst_clip(bursts, length=12000, rate=RATE, amplitude=1.0) -> AudioClip:
    """全零片段中放入若干个 [start, end) 的常幅脉冲"""
    samples = np.zeros(length)
    for start, end in bursts:
        samples[start:end] = amplitude
    return AudioClip(samples, rate)


def tone_recording(rng: np.random.Generator, frequency_hz: float, rate: int = 16000,
                   duration_s: float = 1.0) -> np.ndarray:
    """一段带一两个正弦短脉冲的录音（模拟咳嗽），其余部分为低幅噪声"""
    n = int(rate * duration_s)
    t = np.arange(n) / rate
    samples = 0.001 * rng.standard_normal(n)
    starts = [0.2, 0.6] if rng.random() < 0.5 else [0.35]
    for start in starts:
        lo, hi = int(start * rate), int((start + 0.15) * rate)
        samples[lo:hi] += 0.8 * np.sin(2 * np.pi * frequency_hz * t[lo:hi])
    return np.clip(samples, -1.0, 1.0)


def toy_spectrograms(n_per_class: int, shape=(16, 8), seed: int = 0):
    """
    可分的两类谱图：类别 0 的能量集中在低频行，类别 1 集中在高频行

    Returns:
        (N×1×h×w 的 [-1,1] 数组, 标签)
    """
    rng = np.random.default_rng(seed)
    height, width = shape
    images, labels = [], []
    for label in (0, 1):
        for _ in range(n_per_class):
            image = -0.8 + 0.1 * rng.standard_normal((height, width))
            rows = slice(0, height // 3) if label == 0 else slice(height - height // 3, height)
            image[rows] = 0.7 + 0.1 * rng.standard_normal(image[rows].shape)
            images.append(np.clip(image, -1.0, 1.0))
            labels.append(label)
    return np.stack(images)[:, None], np.asarray(labels, dtype=np.int64)


@pytest.fixture
def single_burst() -> AudioClip:
    return burst_clip([(1000, 2000)])


@pytest.fixture
def double_burst() -> AudioClip:
    return burst_clip([(1000, 2000), (2500, 3500)])


@pytest.fixture
def tiny_gan_cfg() -> GanConfig:
    """16×8 谱图、个位数通道的 ACGAN，结构与默认配置相同"""
    return GanConfig(latent_dim=6, embedding_dim=3, epochs=3, batch_size=4, image_shape=(16, 8),
                     gen_base_maps=4, gen_channels=(3, 2), disc_filters=(2, 3, 3, 4, 4), disc_dropout=0.0,
                     seed=7)


@pytest.fixture
def tiny_clf_cfg() -> ClassifierConfig:
    return ClassifierConfig(image_shape=(16, 8), filters=(2, 3, 3, 4, 4), dropout=0.0, epochs=2, batch_size=8,
                            seed=3)


@pytest.fixture
def manifest_csv(tmp_path):
    """五行清单：覆盖空 status、缺 SSL 标签和低 cough_detected"""
    path = tmp_path / "metadata.csv"
    path.write_text(
        "uuid,cough_detected,status,status_SSL,SNR\n"
        "u1,0.93,,COVID-19,12.1\n"
        "u2,0.70,healthy,healthy,\n"
        "u3,0.69,healthy,healthy,3.0\n"
        "u4,0.95,symptomatic,,\n"
        "u5,1.0,COVID-19,COVID-19,20\n",
        encoding="utf-8",
    )
    return path


def write_pipeline_workspace(root, recordings_per_class: int = 10, seed: int = 0) -> str:
    """
    在 root 下写出一个可跑通全部子命令的小数据集与配置

    healthy 录音为 300 Hz 脉冲，COVID-19 录音为 2500 Hz 脉冲；另有一条静音录音、
    一条低 cough_detected 录音和一条没有 SSL 标签的录音
    """
    rng = np.random.default_rng(seed)
    data_dir = root / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    rows = ["uuid,cough_detected,status,status_SSL,SNR"]
    for label, frequency in (("healthy", 300.0), ("COVID-19", 2500.0)):
        for k in range(recordings_per_class):
            uuid = f"{label.lower().replace('-', '')}{k:02d}"
            write_wav(AudioClip(tone_recording(rng, frequency), 16000), data_dir / f"{uuid}.wav")
            rows.append(f"{uuid},0.9,{label},{label},10")
    write_wav(AudioClip(np.zeros(16000), 16000), data_dir / "silent.wav")
    rows.append("silent,0.8,healthy,healthy,")
    write_wav(AudioClip(tone_recording(rng, 300.0), 16000), data_dir / "lowq.wav")
    rows.append("lowq,0.2,healthy,healthy,")
    write_wav(AudioClip(tone_recording(rng, 300.0), 16000), data_dir / "nossl.wav")
    rows.append("nossl,0.9,healthy,,")
    (data_dir / "metadata.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")

    config = {
        "version": 1,
        "seed": 42,
        "paths": {"manifest": "data/metadata.csv", "audio_dir": None, "work_dir": "work"},
        "logging": {"level": "WARNING", "file": None},
        "manifest": {"min_cough_detected": 0.7, "require_ssl": True, "label_field": "status_SSL",
                     "balance": False, "split_ratios": [0.8, 0.1, 0.1]},
        "dsp": {"filter_order": 4, "cutoff_hz": 6000.0, "target_rate_hz": 12000,
                "segmentation": {"high_rms_factor": 2.0, "low_rms_factor": 0.1, "pad_s": 0.1,
                                 "hangover_s": 0.0}},
        "features": {"top_db": 80.0, "griffin_lim_iterations": 4},
        "gan": {"latent_dim": 4, "n_classes": 2, "embedding_dim": 2, "epochs": 2, "batch_size": 8,
                "gen_base_maps": 2, "gen_channels": [2, 2], "disc_filters": [2, 2, 2, 2, 2],
                "checkpoint_every": 1, "save_samples_every": 1, "seed": None},
        "classifier": {"epochs": 2, "batch_size": 8, "n_outputs": 1, "filters": [2, 2, 2, 2, 2], "seed": None},
        "augmentation": {"count_per_class": 3},
        "synthesis": {"export_audio": True, "batch_size": 2},
        "plot": {"format": "png", "dpi": 40, "grid_columns": 4},
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=2), encoding="utf-8")
    return str(config_path)


@pytest.fixture
def pipeline_config(tmp_path) -> str:
    return write_pipeline_workspace(tmp_path)
