import numpy as np
import numpy.testing as npt
import pytest

from fedsim.audio_io import AudioClip
from fedsim.errors import (
    BadFrameLength,
    ClipTooShort,
    EmptyTrainingSet,
    InvalidFeatureConfig,
    InvalidLength,
    SegmentLongerThanClip,
    TooManyMels,
)
from fedsim.features import (
    FeatureConfig,
    extract_mel,
    hamming_window,
    hz_to_mel,
    mel_filterbank,
    power_spectrum,
    segment_clip,
    znormalize,
)


def test_hamming_closed_form():
    npt.assert_allclose(hamming_window(5), [0.08, 0.54, 1.0, 0.54, 0.08], atol=1e-12)
    for n in (2, 7, 1024):
        w = hamming_window(n)
        npt.assert_allclose([w[0], w[-1]], [0.08, 0.08], atol=1e-12)
    w = hamming_window(1024)
    npt.assert_allclose(w, w[::-1], atol=1e-12)
    with pytest.raises(InvalidLength):
        hamming_window(1)


def test_power_spectrum_matches_direct_dft(rng):
    frame = rng.standard_normal(64)
    n = np.arange(64)
    direct = np.array([np.abs(np.sum(frame * np.exp(-2j * np.pi * k * n / 64))) ** 2 for k in range(33)])
    npt.assert_allclose(power_spectrum(frame), direct, rtol=1e-9)


def test_power_spectrum_cases():
    assert not power_spectrum(np.zeros(1024)).any()
    t = np.arange(1024)
    spec = power_spectrum(np.cos(2 * np.pi * 64 * t / 1024))
    assert spec.argmax() == 64
    off = np.delete(spec, 64)
    assert off.max() < 1e-9 * spec[64]
    with pytest.raises(BadFrameLength):
        power_spectrum(np.zeros(100), n_fft=128)


def test_parseval(rng):
    frame = rng.standard_normal(256)
    full = np.abs(np.fft.fft(frame)) ** 2
    half = power_spectrum(frame)
    # bins 1..N/2-1 appear twice in the full spectrum
    rebuilt = half[0] + half[-1] + 2 * half[1:-1].sum()
    npt.assert_allclose(rebuilt, full.sum(), rtol=1e-9)
    npt.assert_allclose(full.sum(), 256 * np.sum(frame**2), rtol=1e-9)


def test_mel_scale():
    npt.assert_allclose(hz_to_mel(700.0), 2595 * np.log10(2), rtol=1e-12)
    npt.assert_allclose(hz_to_mel(700.0), 781.17, atol=0.01)
    assert hz_to_mel(0.0) == 0.0


def test_filterbank_rows_and_coverage():
    fb = mel_filterbank(128, 1024, 16000)
    assert fb.shape == (128, 513)
    assert (fb >= 0).all()
    assert (fb.max(axis=1) > 0).all()
    bins = np.fft.rfftfreq(1024, 1 / 16000)
    mel_edges = np.linspace(0, hz_to_mel(8000.0), 130)
    centers = 700 * (10 ** (mel_edges[1:-1] / 2595) - 1)
    interior = (bins > centers[0]) & (bins < centers[-1])
    assert (fb[:, interior].sum(axis=0) > 0).all()


def test_too_many_mels_is_reported():
    with pytest.raises(TooManyMels):
        mel_filterbank(512, 256, 16000)


@pytest.mark.parametrize("cfg", [FeatureConfig(n_mels=0), FeatureConfig(hop_ms=0), FeatureConfig(log_floor=0)])
def test_invalid_feature_config(cfg):
    with pytest.raises(InvalidFeatureConfig):
        cfg.validate()


def test_filterbank_rejects_bad_arguments():
    with pytest.raises(InvalidFeatureConfig):
        mel_filterbank(0, 256, 16000)
    with pytest.raises(InvalidFeatureConfig):
        mel_filterbank(16, 256, 0)


def test_extract_mel_shapes():
    clip = AudioClip(np.random.default_rng(0).uniform(-0.5, 0.5, 16000), 16000)
    mel = extract_mel(clip, FeatureConfig())
    assert mel.shape == (94, 128)
    assert np.isfinite(mel).all()

    exact = AudioClip(np.zeros(1024), 16000)
    assert extract_mel(exact).shape == (1, 128)

    with pytest.raises(ClipTooShort):
        extract_mel(AudioClip(np.zeros(1023), 16000))


def test_zero_clip_is_log_floor():
    mel = extract_mel(AudioClip(np.zeros(4000), 16000), FeatureConfig(n_mels=40))
    npt.assert_allclose(mel, np.log(1e-6))


def test_doubling_amplitude_is_monotone_and_bounded(sine_clip):
    cfg = FeatureConfig(n_mels=64)
    base = extract_mel(sine_clip, cfg)
    loud = extract_mel(AudioClip(2 * sine_clip.samples, sine_clip.sample_rate), cfg)
    shift = loud - base
    assert shift.min() >= -1e-12
    assert shift.max() <= np.log(4) + 1e-9


def test_hop_rounding():
    assert FeatureConfig().hop_samples(16000) == 160
    assert FeatureConfig(hop_ms=10).hop_samples(22050) == 221


def test_segment_counts_and_offsets():
    rate = 100
    clip = AudioClip(np.arange(10 * rate) / 1000.0, rate)
    segments = segment_clip(clip, 3.0, 0.5)
    assert len(segments) == 3
    for i, seg in enumerate(segments):
        start = int(i * 2.5 * rate)
        npt.assert_array_equal(seg.samples, clip.samples[start : start + 3 * rate])

    assert len(segment_clip(AudioClip(np.zeros(3 * rate), rate), 3.0, 0.0)) == 1
    assert len(segment_clip(AudioClip(np.zeros(7 * rate), rate), 3.0, 1.0)) == 3
    with pytest.raises(SegmentLongerThanClip):
        segment_clip(AudioClip(np.zeros(2 * rate), rate), 3.0, 0.0)


def test_znormalize_uses_train_stats(rng):
    train = [rng.normal(5.0, 2.0, size=(50, 4)) for _ in range(3)]
    for m in train:
        m[:, 3] = 7.0
    test = [rng.normal(9.0, 2.0, size=(20, 4))]
    train_n, test_n, stats = znormalize(train, test)
    stacked = np.concatenate(train_n)
    npt.assert_allclose(stacked[:, :3].mean(axis=0), 0.0, atol=1e-9)
    npt.assert_allclose(stacked[:, :3].var(axis=0), 1.0, atol=1e-6)
    npt.assert_allclose(stacked[:, 3], 0.0, atol=1e-6)
    npt.assert_allclose(test_n[0], (test[0] - stats.mean) / np.maximum(stats.std, 1e-8))
    assert test_n[0][:, :3].mean() > 1.0
    with pytest.raises(EmptyTrainingSet):
        znormalize([], test)
