import math

import numpy as np
import pytest
from scipy import signal

from app.audio.dsp import (
    SegmentBounds,
    SegmentationParams,
    apply_filter,
    design_butterworth_lowpass,
    extract_segment,
    normalize_peak,
    preprocess_clip,
    resample,
    rms,
    segment_coughs,
)
from app.audio.wav_io import AudioClip
from app.utils.error_handler import DomainError
from conftest import burst_clip


def reference_segments(samples, rate, params):
    """逐采样走一遍迟滞比较器状态机，再补边、保证最小长度、合并"""
    n = len(samples)
    samples = np.asarray(samples, dtype=np.float64)
    level = float(np.sqrt(np.mean(samples * samples)))
    if level == 0.0:
        return []
    high = params.high_rms_factor * level
    low = params.low_rms_factor * level
    hold = max(int(round(params.hangover_s * rate)), 1)

    raw = []
    opened, below_since = None, None
    for i, value in enumerate(abs(v) for v in samples):
        if opened is None:
            if value >= high:
                opened, below_since = i, None
            continue
        if value < low:
            if below_since is None:
                below_since = i
            if i - below_since + 1 >= hold:
                raw.append((opened, below_since))
                opened, below_since = None, None
        else:
            below_since = None
    if opened is not None:
        raw.append((opened, below_since if below_since is not None else n))

    pad = int(round(params.pad_s * rate / 2))
    min_len = math.ceil(0.1 * rate)
    if n < min_len:
        return []
    merged = []
    for start, end in raw:
        start, end = max(0, start - pad), min(n, end + pad)
        if end - start < min_len:
            end = min(n, start + min_len)
            start = max(0, end - min_len)
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return [(s, e) for s, e in merged]


def random_piecewise(seed, length=6000):
    rng = np.random.default_rng(seed)
    cuts = np.sort(rng.choice(np.arange(1, length), size=int(rng.integers(3, 12)), replace=False))
    samples = np.empty(length)
    for lo, hi in zip(np.concatenate([[0], cuts]), np.concatenate([cuts, [length]])):
        amplitude = rng.choice([0.0, 0.002, 0.05, 0.3, 1.0])
        samples[lo:hi] = amplitude * rng.standard_normal(hi - lo)
    return samples


def test_burst_fixture_single_segment(single_burst):
    assert segment_coughs(single_burst, SegmentationParams()) == [SegmentBounds(400, 2600)]


def test_overlapping_padded_segments_merge(double_burst):
    assert segment_coughs(double_burst, SegmentationParams()) == [SegmentBounds(400, 4100)]


def test_silence_gives_no_segments():
    assert segment_coughs(AudioClip(np.zeros(12000), 12000), SegmentationParams()) == []


@pytest.mark.parametrize("seed", range(100))
def test_segmentation_matches_reference_walker(seed):
    samples = random_piecewise(seed)
    params = SegmentationParams(hangover_s=0.0 if seed % 2 == 0 else 0.004)
    clip = AudioClip(samples, 12000)
    bounds = segment_coughs(clip, params)
    assert [(b.start_sample, b.end_sample) for b in bounds] == reference_segments(samples, 12000, params)

    min_len = math.ceil(0.1 * 12000)
    for first, second in zip(bounds, bounds[1:]):
        assert first.end_sample < second.start_sample
    assert all(len(b) >= min_len and b.end_sample <= len(clip) for b in bounds)


def test_segments_invariant_under_positive_scaling():
    samples = random_piecewise(11)
    params = SegmentationParams()
    assert segment_coughs(AudioClip(samples, 12000), params) == \
        segment_coughs(AudioClip(3.0 * samples, 12000), params)


def test_open_segment_closes_at_clip_end():
    clip = burst_clip([(10000, 12000)])
    assert segment_coughs(clip, SegmentationParams()) == [SegmentBounds(9400, 12000)]


def test_hangover_bridges_short_gaps():
    # 两个脉冲之间 1200 个采样的静音：无 hangover 时各自成段，hangover 0.2 s 时合为一段
    clip = burst_clip([(1000, 2000), (3200, 4200)], length=24000)
    assert len(segment_coughs(clip, SegmentationParams(pad_s=0.0))) == 2
    assert len(segment_coughs(clip, SegmentationParams(pad_s=0.0, hangover_s=0.2))) == 1


def test_segmentation_params_validation():
    with pytest.raises(DomainError):
        SegmentationParams(high_rms_factor=0.1, low_rms_factor=0.2)
    with pytest.raises(DomainError):
        SegmentationParams(pad_s=-0.1)


def test_normalize_peak():
    np.testing.assert_array_equal(normalize_peak(AudioClip([0.2, -0.5], 8000)).samples, [0.4, -1.0])
    zeros = AudioClip(np.zeros(10), 8000)
    assert normalize_peak(zeros) is zeros
    random = AudioClip(np.random.default_rng(0).standard_normal(1000), 8000)
    assert abs(np.max(np.abs(normalize_peak(random).samples)) - 1.0) <= 1e-12
    with pytest.raises(DomainError):
        normalize_peak(AudioClip([], 8000))


def _response(sos, freqs, rate):
    _, h = signal.sosfreqz(sos, worN=np.asarray(freqs, dtype=float), fs=rate)
    return np.abs(h)


def test_butterworth_dc_gain_and_cutoff():
    sos = design_butterworth_lowpass(4, 6000, 48000)
    dc, cutoff, above = _response(sos, [0.0, 6000.0, 12000.0], 48000)
    assert abs(dc - 1.0) <= 1e-6
    assert 20 * np.log10(cutoff) == pytest.approx(-3.0103, abs=0.1)
    assert above < cutoff


def test_butterworth_is_monotone():
    sos = design_butterworth_lowpass(4, 6000, 48000)
    magnitude = _response(sos, np.linspace(0, 24000, 2049), 48000)
    assert np.all(np.diff(magnitude) <= 1e-12)


def test_butterworth_rejects_bad_parameters():
    with pytest.raises(DomainError):
        design_butterworth_lowpass(4, 30000, 48000)
    with pytest.raises(DomainError):
        design_butterworth_lowpass(3, 6000, 48000)


def test_impulse_response_matches_design():
    sos = design_butterworth_lowpass(4, 6000, 48000)
    impulse = np.zeros(4096)
    impulse[0] = 1.0
    response = apply_filter(AudioClip(impulse, 48000), sos).samples
    spectrum = np.abs(np.fft.rfft(response))
    expected = _response(sos, np.fft.rfftfreq(4096, d=1 / 48000), 48000)
    np.testing.assert_allclose(spectrum, expected, atol=1e-6)


def test_filter_linearity_and_length():
    sos = design_butterworth_lowpass(4, 6000, 48000)
    rng = np.random.default_rng(4)
    x, y = rng.uniform(-0.5, 0.5, 2000), rng.uniform(-0.5, 0.5, 2000)
    fx = apply_filter(AudioClip(x, 48000), sos).samples
    fy = apply_filter(AudioClip(y, 48000), sos).samples
    fxy = apply_filter(AudioClip(x + y, 48000), sos).samples
    assert fx.shape == x.shape
    np.testing.assert_allclose(fxy, fx + fy, atol=1e-12)
    np.testing.assert_array_equal(apply_filter(AudioClip(2 * x, 48000), sos).samples, 2 * fx)
    np.testing.assert_array_equal(apply_filter(AudioClip(np.zeros(100), 48000), sos).samples, np.zeros(100))


def test_unstable_filter_is_rejected():
    unstable = np.array([[1.0, 0.0, 0.0, 1.0, -2.5, 1.5]])
    with pytest.raises(DomainError):
        apply_filter(AudioClip(np.zeros(10), 8000), unstable)


def test_resample_length_and_identity():
    clip = AudioClip(np.random.default_rng(0).standard_normal(48000) * 0.1, 48000)
    assert len(resample(clip, 12000)) == 12000
    assert len(resample(AudioClip(np.zeros(44101), 44100), 12000)) == round(44101 * 12000 / 44100)
    np.testing.assert_array_equal(resample(clip, 48000).samples, clip.samples)


def test_resampled_sine_keeps_frequency_and_amplitude():
    t = np.arange(48000) / 48000
    clip = AudioClip(0.5 * np.sin(2 * np.pi * 1000 * t), 48000)
    out = resample(clip, 12000)
    interior = slice(500, 11500)
    tt = np.arange(12000)[interior] / 12000
    basis = np.stack([np.sin(2 * np.pi * 1000 * tt), np.cos(2 * np.pi * 1000 * tt)], axis=1)
    coef, *_ = np.linalg.lstsq(basis, out.samples[interior], rcond=None)
    assert np.hypot(*coef) == pytest.approx(0.5, rel=0.01)
    residual = out.samples[interior] - basis @ coef
    assert np.max(np.abs(residual)) < 0.01


def test_rms_examples():
    assert rms(np.full(10, 0.5)) == pytest.approx(0.5)
    assert rms([1, -1, 1, -1]) == 1.0
    burst = burst_clip([(1000, 2000)])
    assert rms(burst.samples) == pytest.approx(math.sqrt(1000 / 12000), abs=1e-12)
    with pytest.raises(DomainError):
        rms([])


def test_extract_segment(single_burst):
    whole = extract_segment(single_burst, SegmentBounds(0, len(single_burst)))
    np.testing.assert_array_equal(whole.samples, single_burst.samples)
    assert len(extract_segment(single_burst, SegmentBounds(400, 2600))) == 2200
    with pytest.raises(DomainError):
        extract_segment(single_burst, SegmentBounds(400, 400))
    with pytest.raises(DomainError):
        extract_segment(single_burst, SegmentBounds(0, 20000))


def test_preprocess_chain_resamples_to_target():
    t = np.arange(16000) / 16000
    clip = AudioClip(0.3 * np.sin(2 * np.pi * 440 * t), 16000)
    out = preprocess_clip(clip, 4, 6000.0, 12000)
    assert out.sample_rate_hz == 12000
    assert len(out) == 12000


def test_preprocess_skips_filter_when_source_is_already_narrowband(single_burst):
    out = preprocess_clip(single_burst, 4, 6000.0, 12000)
    np.testing.assert_array_equal(out.samples, single_burst.samples)
