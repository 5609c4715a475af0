"""
音频预处理模块

峰值归一化、Butterworth 低通、Kaiser 窗多相重采样，以及基于 RMS 双阈值迟滞比较器的咳嗽分段
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Sequence

import numpy as np
from scipy import signal

from app.audio.wav_io import AudioClip
from app.utils.error_handler import DomainError
from app.utils.logger import get_logger

logger = get_logger(__name__)

MIN_SEGMENT_S = 0.1
RESAMPLE_WINDOW = ("kaiser", 5.0)


@dataclass(frozen=True)
class SegmentBounds:
    """半开区间 [start_sample, end_sample)，单位为重采样后的采样点"""

    start_sample: int
    end_sample: int

    def __post_init__(self):
        if self.start_sample < 0 or self.end_sample <= self.start_sample:
            raise DomainError(f"非法分段边界: ({self.start_sample}, {self.end_sample})")

    def __len__(self) -> int:
        return self.end_sample - self.start_sample


@dataclass(frozen=True)
class SegmentationParams:
    """迟滞分段参数：阈值为全片 RMS 的倍数，时间单位为秒"""

    high_rms_factor: float = 2.0
    low_rms_factor: float = 0.1
    pad_s: float = 0.1
    hangover_s: float = 0.0

    def __post_init__(self):
        if not self.high_rms_factor > self.low_rms_factor > 0:
            raise DomainError(f"需要 high_rms_factor > low_rms_factor > 0: "
                              f"{self.high_rms_factor}, {self.low_rms_factor}")
        if self.pad_s < 0 or self.hangover_s < 0:
            raise DomainError(f"pad_s / hangover_s 不能为负: {self.pad_s}, {self.hangover_s}")


def min_segment_samples(sample_rate_hz: int) -> int:
    return int(math.ceil(MIN_SEGMENT_S * sample_rate_hz - 1e-9))


def normalize_peak(clip: AudioClip) -> AudioClip:
    """峰值归一化到 [-1, 1]；全零片段原样返回"""
    if len(clip) == 0:
        raise DomainError("不能归一化空音频")
    peak = np.max(np.abs(clip.samples))
    if peak == 0.0:
        return clip
    return clip.with_samples(clip.samples / peak)


def design_butterworth_lowpass(order: int, cutoff_hz: float, sample_rate_hz: int) -> np.ndarray:
    """
    双线性变换 Butterworth 低通设计

    Returns:
        二阶节级联系数，形状 (order/2, 6)，每行 [b0, b1, b2, 1, a1, a2]
    """
    if order < 2 or order % 2 != 0:
        raise DomainError(f"滤波器阶数必须为不小于2的偶数: {order}")
    if not 0 < cutoff_hz < sample_rate_hz / 2:
        raise DomainError(f"截止频率 {cutoff_hz} Hz 必须在 (0, {sample_rate_hz / 2}) 内")
    return signal.butter(order, cutoff_hz, btype="lowpass", output="sos", fs=sample_rate_hz)


def _check_stable(sos: np.ndarray) -> None:
    sos = np.atleast_2d(np.asarray(sos, dtype=np.float64))
    if sos.ndim != 2 or sos.shape[1] != 6:
        raise DomainError(f"二阶节系数形状必须为 (n, 6): {sos.shape}")
    for section in sos:
        poles = np.roots(section[3:] / section[3])
        if np.any(np.abs(poles) >= 1.0):
            raise DomainError(f"滤波器不稳定，极点模值 {np.max(np.abs(poles)):.6f}")


def apply_filter(clip: AudioClip, coeffs: np.ndarray) -> AudioClip:
    """因果 DF-II 转置级联滤波，零初始状态，输出长度不变"""
    _check_stable(coeffs)
    return clip.with_samples(signal.sosfilt(coeffs, clip.samples))


def resample(clip: AudioClip, target_rate_hz: int) -> AudioClip:
    """
    Kaiser 窗 sinc 多相重采样

    输出长度 round(n * target / source)；同采样率时原样返回
    """
    if target_rate_hz <= 0:
        raise DomainError(f"目标采样率必须为正: {target_rate_hz}")
    if target_rate_hz == clip.sample_rate_hz:
        return clip
    ratio = Fraction(target_rate_hz, clip.sample_rate_hz)
    out = signal.resample_poly(clip.samples, ratio.numerator, ratio.denominator, window=RESAMPLE_WINDOW)
    expected = int(math.floor(len(clip) * target_rate_hz / clip.sample_rate_hz + 0.5))
    if out.shape[0] > expected:
        out = out[:expected]
    elif out.shape[0] < expected:
        out = np.pad(out, (0, expected - out.shape[0]))
    return AudioClip(out, target_rate_hz)


def preprocess_clip(clip: AudioClip, filter_order: int, cutoff_hz: float, target_rate_hz: int) -> AudioClip:
    """
    归一化 -> 低通 -> 重采样

    源采样率的奈奎斯特频率不高于截止频率时（例如源文件已是 12 kHz）不做低通
    """
    normalized = normalize_peak(clip)
    if cutoff_hz >= normalized.sample_rate_hz / 2:
        logger.debug(f"源采样率 {normalized.sample_rate_hz} Hz 不超过截止频率的两倍，跳过低通")
        return resample(normalized, target_rate_hz)
    coeffs = design_butterworth_lowpass(filter_order, cutoff_hz, normalized.sample_rate_hz)
    filtered = apply_filter(normalized, coeffs)
    return resample(filtered, target_rate_hz)


def rms(samples: Sequence[float]) -> float:
    """均方根"""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise DomainError("不能计算空序列的 RMS")
    return float(np.sqrt(np.mean(samples * samples)))


def _raw_segments(magnitude: np.ndarray, high: float, low: float, hangover: int) -> List[List[int]]:
    """
    迟滞比较器：|x| >= high 开段；|x| < low 连续 max(hangover,1) 个采样后在低段起点收段
    """
    # 只在超过高阈值处开段，逐段扫描，避免对每个采样跑 Python 循环
    required = max(hangover, 1)
    below = magnitude < low
    above_high = np.flatnonzero(magnitude >= high)
    n = magnitude.shape[0]
    segments = []
    pos = 0
    while True:
        idx = np.searchsorted(above_high, pos)
        if idx >= above_high.shape[0]:
            break
        start = int(above_high[idx])
        end = n
        cursor = start
        while cursor < n:
            rel = np.flatnonzero(below[cursor:])
            if rel.shape[0] == 0:
                end = n
                cursor = n
                break
            run_start = cursor + int(rel[0])
            rel_end = np.flatnonzero(~below[run_start:])
            run_end = run_start + int(rel_end[0]) if rel_end.shape[0] else n
            if run_end - run_start >= required:
                end = run_start
                cursor = run_start + required
                break
            if run_end >= n:
                # 片段结束时低段未满足 hangover，在低段起点收段
                end = run_start
                cursor = n
                break
            cursor = run_end
        segments.append([start, end])
        pos = cursor
    return segments


def segment_coughs(clip: AudioClip, params: SegmentationParams = SegmentationParams()) -> List[SegmentBounds]:
    """
    RMS 双阈值迟滞分段

    每段两侧各补 pad_s/2 秒并截断到片段范围，短于 0.1 秒的段向未截断一侧扩展，
    重叠段合并，按起点升序返回；静音返回空列表
    """
    n = len(clip)
    if n == 0:
        return []
    level = rms(clip.samples)
    if level == 0.0:
        return []
    magnitude = np.abs(clip.samples)
    high = params.high_rms_factor * level
    low = params.low_rms_factor * level
    hangover = int(round(params.hangover_s * clip.sample_rate_hz))
    pad = int(round(params.pad_s * clip.sample_rate_hz / 2))
    min_len = min_segment_samples(clip.sample_rate_hz)
    if n < min_len:
        logger.debug(f"片段长度 {n} 小于最小分段长度 {min_len}，不分段")
        return []

    padded = []
    for start, end in _raw_segments(magnitude, high, low, hangover):
        start = max(0, start - pad)
        end = min(n, end + pad)
        if end - start < min_len:
            end = min(n, start + min_len)
            start = max(0, end - min_len)
        padded.append([start, end])

    merged: List[List[int]] = []
    for start, end in padded:
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return [SegmentBounds(s, e) for s, e in merged]


def extract_segment(clip: AudioClip, bounds: SegmentBounds) -> AudioClip:
    """复制 [start, end) 的采样，采样率不变"""
    if bounds.end_sample > len(clip):
        raise DomainError(f"分段 ({bounds.start_sample}, {bounds.end_sample}) 超出片段长度 {len(clip)}")
    return clip.with_samples(clip.samples[bounds.start_sample:bounds.end_sample].copy())
