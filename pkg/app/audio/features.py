"""
特征提取模块

把 12 kHz 咳嗽分段转换为固定形状 128x24 的 dB Mel 频谱，缩放到 [-1,1] 供生成器使用，
并可通过 Griffin-Lim 把频谱还原成音频用于试听
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import List

import librosa
import numpy as np

from app.audio.wav_io import AudioClip
from app.utils.error_handler import DomainError, ShapeError
from app.utils.logger import get_logger

logger = get_logger(__name__)

SAMPLE_RATE_HZ = 12000
N_FFT = 2048
HOP = 512
N_MELS = 128
N_FRAMES = 24
FMIN_HZ = 0.0
FMAX_HZ = 6000.0
TOP_DB = 80.0
AMIN = 1e-10
# 23 * 512：居中 STFT 恰好得到 24 帧
CANONICAL_LENGTH = (N_FRAMES - 1) * HOP
GRIFFIN_LIM_ITERATIONS = 60


@dataclass(frozen=True)
class MelSpectrogram:
    """dB 刻度 Mel 频谱及其提取参数"""

    values: np.ndarray
    n_mels: int = N_MELS
    n_frames: int = N_FRAMES
    n_fft: int = N_FFT
    hop: int = HOP
    sample_rate_hz: int = SAMPLE_RATE_HZ
    fmin_hz: float = FMIN_HZ
    fmax_hz: float = FMAX_HZ
    top_db: float = TOP_DB

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.n_mels, self.n_frames):
            raise ShapeError(f"Mel 频谱形状应为 {(self.n_mels, self.n_frames)}，实际 {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("Mel 频谱包含非有限值")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class UnitSpectrogram:
    """缩放到 [-1,1] 的频谱（生成器 tanh 输出的取值范围）"""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.size and (values.min() < -1.0 or values.max() > 1.0):
            raise DomainError(f"单位频谱超出 [-1,1]: [{values.min()}, {values.max()}]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


@dataclass
class GriffinLimResult:
    """Griffin-Lim 输出：音频 + 每次迭代的谱收敛残差"""

    clip: AudioClip
    residuals: List[float] = field(default_factory=list)


def to_canonical(segment: AudioClip) -> np.ndarray:
    """
    把分段变为 11776 个采样：长则居中裁剪，短则两侧对称补零
    """
    if segment.sample_rate_hz != SAMPLE_RATE_HZ:
        raise DomainError(f"分段采样率应为 {SAMPLE_RATE_HZ} Hz，实际 {segment.sample_rate_hz}")
    n = len(segment)
    if n == 0:
        raise DomainError("空分段无法规整长度")
    samples = segment.samples
    if n >= CANONICAL_LENGTH:
        offset = (n - CANONICAL_LENGTH) // 2
        return samples[offset:offset + CANONICAL_LENGTH].copy()
    deficit = CANONICAL_LENGTH - n
    left = deficit // 2
    return np.pad(samples, (left, deficit - left))


def stft(samples: np.ndarray, n_fft: int = N_FFT, hop: int = HOP) -> np.ndarray:
    """
    居中 STFT：两侧各反射填充 n_fft/2，周期 Hann 窗

    Returns:
        复数矩阵 (n_fft/2 + 1, 1 + len // hop)
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.size == 0:
        raise DomainError("不能对空序列做 STFT")
    return librosa.stft(samples, n_fft=n_fft, hop_length=hop, window="hann", center=True, pad_mode="reflect")


@lru_cache(maxsize=8)
def mel_filterbank(sample_rate_hz: int = SAMPLE_RATE_HZ, n_fft: int = N_FFT, n_mels: int = N_MELS,
                   fmin_hz: float = FMIN_HZ, fmax_hz: float = FMAX_HZ) -> np.ndarray:
    """
    Slaney 刻度三角滤波器组，Slaney 面积归一化

    结果被缓存并设为只读

    Returns:
        (n_mels, n_fft/2 + 1) 矩阵
    """
    if not 0 <= fmin_hz < fmax_hz <= sample_rate_hz / 2:
        raise DomainError(f"需要 0 <= fmin < fmax <= {sample_rate_hz / 2}: {fmin_hz}, {fmax_hz}")
    bank = librosa.filters.mel(sr=sample_rate_hz, n_fft=n_fft, n_mels=n_mels, fmin=fmin_hz, fmax=fmax_hz,
                               htk=False, norm="slaney", dtype=np.float64)
    bank.setflags(write=False)
    return bank


def power_to_db(power: np.ndarray, top_db: float = TOP_DB) -> np.ndarray:
    """10*log10(S / max(S))，下限截断到 -top_db；峰值不超过 AMIN 时整幅图会塌成常数，直接拒绝"""
    peak = float(np.max(power))
    if peak <= AMIN:
        raise DomainError(f"频谱峰值 {peak:.3g} 不高于下限 {AMIN:g}，没有可用的 dB 参考值")
    return librosa.power_to_db(power, ref=peak, amin=AMIN, top_db=top_db)


def mel_spectrogram_db(segment: AudioClip, top_db: float = TOP_DB) -> MelSpectrogram:
    """分段 -> 规整长度 -> |STFT|^2 -> Mel 投影 -> dB"""
    canonical = to_canonical(segment)
    power = np.abs(stft(canonical)) ** 2
    mel_power = mel_filterbank() @ power
    return MelSpectrogram(power_to_db(mel_power, top_db=top_db), top_db=top_db)


def scale_to_unit(spec: MelSpectrogram) -> UnitSpectrogram:
    """[-top_db, 0] dB 仿射映射到 [-1, 1]"""
    values = spec.values
    if values.min() < -spec.top_db or values.max() > 0.0:
        raise DomainError(f"频谱超出 [-{spec.top_db}, 0] dB: [{values.min()}, {values.max()}]")
    return UnitSpectrogram(values / (spec.top_db / 2.0) + 1.0)


def unscale(unit: UnitSpectrogram, top_db: float = TOP_DB) -> MelSpectrogram:
    """scale_to_unit 的逆映射"""
    return MelSpectrogram((np.asarray(unit.values) - 1.0) * (top_db / 2.0), top_db=top_db)


def scale_batch(values_db: np.ndarray, top_db: float = TOP_DB) -> np.ndarray:
    """批量版 scale_to_unit，用于训练集 (N, 128, 24)"""
    values_db = np.asarray(values_db, dtype=np.float64)
    if values_db.size and (values_db.min() < -top_db or values_db.max() > 0.0):
        raise DomainError(f"频谱超出 [-{top_db}, 0] dB")
    return values_db / (top_db / 2.0) + 1.0


def unscale_batch(values_unit: np.ndarray, top_db: float = TOP_DB) -> np.ndarray:
    """批量版 unscale"""
    return (np.clip(np.asarray(values_unit, dtype=np.float64), -1.0, 1.0) - 1.0) * (top_db / 2.0)


def _zero_padded_stft(samples: np.ndarray) -> np.ndarray:
    # 补零居中 STFT 与 istft 构成精确的一致性投影，残差单调不增
    return librosa.stft(samples, n_fft=N_FFT, hop_length=HOP, window="hann", center=True, pad_mode="constant")


def griffin_lim_trace(spec: MelSpectrogram, iterations: int = GRIFFIN_LIM_ITERATIONS) -> GriffinLimResult:
    """
    Griffin-Lim 相位重建

    dB -> 功率 -> 对 Mel 滤波器组做非负最小二乘得到线性幅度谱 -> 从零相位开始迭代投影

    Returns:
        GriffinLimResult: 12 kHz、11776 个采样的音频以及每轮残差
    """
    if iterations < 1:
        raise DomainError(f"迭代次数必须 >= 1: {iterations}")
    mel_power = librosa.db_to_power(spec.values)
    magnitude = librosa.feature.inverse.mel_to_stft(
        mel_power, sr=spec.sample_rate_hz, n_fft=spec.n_fft, power=2.0,
        fmin=spec.fmin_hz, fmax=spec.fmax_hz, htk=False, norm="slaney",
    )
    # 全频谱范数：除直流和奈奎斯特外每个频点在完整频谱中出现两次
    weights = np.full((magnitude.shape[0], 1), 2.0)
    weights[0] = weights[-1] = 1.0
    reference = float(np.sqrt(np.sum(weights * magnitude ** 2))) or 1.0

    def synthesize(phase: np.ndarray) -> np.ndarray:
        return librosa.istft(magnitude * phase, hop_length=spec.hop, n_fft=spec.n_fft, window="hann",
                             center=True, length=CANONICAL_LENGTH)

    phase = np.ones_like(magnitude, dtype=np.complex128)
    residuals: List[float] = []
    audio = synthesize(phase)
    for _ in range(iterations):
        rebuilt = _zero_padded_stft(audio)
        residuals.append(float(np.sqrt(np.sum(weights * (np.abs(rebuilt) - magnitude) ** 2))) / reference)
        phase = np.exp(1j * np.angle(rebuilt))
        audio = synthesize(phase)

    peak = float(np.max(np.abs(audio))) if audio.size else 0.0
    if peak > 1.0:
        audio = audio / peak
    logger.debug(f"Griffin-Lim 完成 {iterations} 轮，末轮残差 {residuals[-1]:.4f}")
    return GriffinLimResult(AudioClip(audio, spec.sample_rate_hz), residuals)


def griffin_lim(spec: MelSpectrogram, iterations: int = GRIFFIN_LIM_ITERATIONS) -> AudioClip:
    """Griffin-Lim 还原音频（12 kHz，11776 个采样，结果确定）"""
    return griffin_lim_trace(spec, iterations).clip
