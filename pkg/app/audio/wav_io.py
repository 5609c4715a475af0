"""
WAV音频读写模块

读取 PCM16 / float32 的 RIFF WAV，写出 float32 单声道 WAV
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.io import wavfile

from app.utils.error_handler import DomainError, ErrorContext, FormatError, StorageError, UnsupportedFormatError
from app.utils.logger import get_logger

logger = get_logger(__name__)

PCM16_SCALE = 32768.0


@dataclass(frozen=True)
class AudioClip:
    """单声道音频片段：采样值 + 采样率"""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if int(self.sample_rate_hz) <= 0:
            raise DomainError(f"采样率必须为正整数: {self.sample_rate_hz}")
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))
        if not np.all(np.isfinite(samples)):
            raise DomainError("音频包含 NaN/Inf 采样")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def with_samples(self, samples: np.ndarray, sample_rate_hz: int = None) -> "AudioClip":
        """用新采样值构造片段，默认保持采样率"""
        return AudioClip(samples, sample_rate_hz or self.sample_rate_hz)


def read_wav(path: Union[str, Path]) -> AudioClip:
    """
    读取WAV文件

    立体声按通道均值混为单声道；PCM16 除以 32768 映射到 [-1, 1)

    Args:
        path: WAV文件路径

    Returns:
        AudioClip
    """
    path = Path(path)
    context = ErrorContext(operation="read_wav", component="audio", path=path)
    if not path.exists():
        raise StorageError(f"音频文件不存在: {path}", context=context)
    try:
        rate, data = wavfile.read(path)
    except ValueError as e:
        # scipy 对无法识别的编码和损坏的头部都抛 ValueError
        message = str(e)
        if "Unknown wave file format" in message or "Unsupported" in message:
            raise UnsupportedFormatError(f"不支持的WAV编码 {path}: {message}", context=context,
                                         original_exception=e) from e
        raise FormatError(f"WAV头部损坏 {path}: {message}", context=context, original_exception=e) from e
    except OSError as e:
        raise StorageError(f"读取WAV失败 {path}: {e}", context=context, original_exception=e) from e

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / PCM16_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedFormatError(f"不支持的采样格式 {data.dtype}（仅支持 PCM16 / float32）: {path}",
                                     context=context)

    if samples.ndim == 2:
        if samples.shape[1] > 2:
            raise UnsupportedFormatError(f"不支持 {samples.shape[1]} 声道音频: {path}", context=context)
        samples = samples.mean(axis=1)

    return AudioClip(samples, rate)


def write_wav(clip: AudioClip, path: Union[str, Path]) -> None:
    """
    写出 IEEE float32 单声道 WAV

    float32 可表示的采样（如 read_wav 读到的任何采样）可逐位往返
    """
    path = Path(path)
    samples = clip.samples
    if samples.size and np.max(np.abs(samples)) > 1.0:
        raise DomainError(f"采样超出 [-1, 1]，最大幅值 {np.max(np.abs(samples)):.6f}: {path}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        wavfile.write(path, clip.sample_rate_hz, samples.astype(np.float32))
    except OSError as e:
        raise StorageError(f"写入WAV失败 {path}: {e}",
                           context=ErrorContext(operation="write_wav", component="audio", path=path),
                           original_exception=e) from e
    logger.debug(f"已写出 {len(clip)} 个采样 -> {path}")
