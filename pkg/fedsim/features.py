from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .audio_io import AudioClip
from .errors import (
    BadFrameLength,
    ClipTooShort,
    EmptyTrainingSet,
    InvalidFeatureConfig,
    InvalidLength,
    InvalidSegmentation,
    SegmentLongerThanClip,
    TooManyMels,
)
from .utils import round_half_up

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class FeatureConfig:
    frame_length: int = 1024
    hop_ms: float = 10.0
    n_mels: int = 128
    log_floor: float = 1e-6

    def validate(self) -> None:
        if self.frame_length < 2:
            raise InvalidLength("frame_length deve ser >= 2")
        if not self.hop_ms > 0:
            raise InvalidFeatureConfig("hop_ms deve ser > 0")
        if self.n_mels < 1:
            raise InvalidFeatureConfig("n_mels deve ser >= 1")
        if not self.log_floor > 0:
            raise InvalidFeatureConfig("log_floor deve ser > 0")

    def hop_samples(self, sample_rate: int) -> int:
        return max(1, round_half_up(self.hop_ms * sample_rate / 1000.0))


@dataclass(frozen=True, eq=False)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        return (matrix - self.mean) / np.maximum(self.std, STD_FLOOR)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}


def hamming_window(n: int) -> np.ndarray:
    if n < 2:
        raise InvalidLength(f"janela de tamanho {n} < 2")
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / (n - 1))


def power_spectrum(frame: np.ndarray, n_fft: Optional[int] = None) -> np.ndarray:
    """|DFT|^2 de um quadro real (ou de vários quadros no último eixo), bins 0..N/2."""
    frame = np.asarray(frame, dtype=np.float64)
    n = frame.shape[-1] if frame.ndim else 0
    if frame.ndim not in (1, 2) or n < 2 or (n_fft is not None and n != n_fft):
        raise BadFrameLength(f"quadro de tamanho {n} não bate com n_fft={n_fft}")
    spectrum = np.fft.rfft(frame, axis=-1)
    return spectrum.real**2 + spectrum.imag**2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triângulos simples (sem normalizar a área) espaçados igualmente na escala mel HTK."""
    if n_mels < 1:
        raise InvalidFeatureConfig("n_mels deve ser >= 1")
    if sample_rate <= 0:
        raise InvalidFeatureConfig("sample_rate deve ser positivo")
    if n_fft < 2:
        raise BadFrameLength("n_fft deve ser >= 2")
    return _filterbank(int(n_mels), int(n_fft), int(sample_rate)).copy()


@lru_cache(maxsize=16)
def _filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    bins = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lower) / (center - lower)
    falling = (upper - bins[None, :]) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(~(fb > 0).any(axis=1))
    if empty.size:
        raise TooManyMels(
            f"{n_mels} filtros mel com n_fft={n_fft}, taxa={sample_rate}: "
            f"os filtros {empty.tolist()[:5]} não cobrem nenhum bin da FFT"
        )
    fb.setflags(write=False)
    return fb


def frame_signal(samples: np.ndarray, frame_length: int, hop: int) -> np.ndarray:
    """Só os quadros que cabem inteiros no sinal; o resto do final é descartado."""
    return sliding_window_view(samples, frame_length)[::hop]


def extract_mel(clip: AudioClip, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    cfg.validate()
    if len(clip) < cfg.frame_length:
        raise ClipTooShort(f"o clipe tem {len(clip)} amostras, frame_length é {cfg.frame_length}")
    frames = frame_signal(clip.samples, cfg.frame_length, cfg.hop_samples(clip.sample_rate))
    spectra = power_spectrum(frames * hamming_window(cfg.frame_length))
    fb = _filterbank(cfg.n_mels, cfg.frame_length, clip.sample_rate)
    return np.log(spectra @ fb.T + cfg.log_floor)


def segment_clip(clip: AudioClip, seg_seconds: float, overlap_seconds: float) -> list[AudioClip]:
    if not 0 <= overlap_seconds < seg_seconds:
        raise InvalidSegmentation("é preciso 0 <= overlap_seconds < seg_seconds")
    if seg_seconds > clip.duration_seconds + 1e-12:
        raise SegmentLongerThanClip(f"segmento de {seg_seconds}s de um clipe de {clip.duration_seconds:.3f}s")
    seg_n = round_half_up(seg_seconds * clip.sample_rate)
    step_n = round_half_up((seg_seconds - overlap_seconds) * clip.sample_rate)
    if seg_n > len(clip):
        raise SegmentLongerThanClip(f"{seg_n} amostras de um clipe de {len(clip)} amostras")
    count = (len(clip) - seg_n) // step_n + 1
    return [AudioClip(clip.samples[i * step_n : i * step_n + seg_n], clip.sample_rate) for i in range(count)]


def znormalize(
    train: Sequence[np.ndarray], others: Sequence[np.ndarray] = ()
) -> tuple[list[np.ndarray], list[np.ndarray], NormStats]:
    if not train:
        raise EmptyTrainingSet("sem dados de treino não há como calcular as estatísticas de normalização")
    stacked = np.concatenate([np.asarray(m, dtype=np.float64) for m in train], axis=0)
    stats = NormStats(stacked.mean(axis=0), stacked.std(axis=0))
    return [stats.apply(m) for m in train], [stats.apply(m) for m in others], stats
