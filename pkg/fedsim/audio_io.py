from __future__ import annotations

import logging
import os
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidCorpusSpec,
    MalformedHeader,
    MalformedManifest,
    MalformedPayload,
    NotWav,
    TruncatedFile,
    UnknownLabel,
    UnsupportedEncoding,
)
from .utils import make_rng

logger = logging.getLogger(__name__)

PCM_FORMAT = 1
PCM_SCALE = 32768.0


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Forma de onda mono. Clipes lidos e sintéticos ficam em [-1, 1]; com ruído, não necessariamente."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("as amostras do AudioClip devem ser unidimensionais")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate deve ser positivo")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True, eq=False)
class LabeledClip:
    clip: AudioClip
    label: int
    speaker_id: str


@dataclass(frozen=True)
class SynthCorpusSpec:
    n_classes: int = 4
    n_speakers: int = 20
    clips_per_speaker_per_class: int = 5
    clip_seconds: float = 1.0
    sample_rate: int = 16000
    seed: int = 7
    tones_per_clip: int = 3
    class_level_db: float = -40.0
    pitch_offset_hz: float = 50.0
    dither_std: float = 1e-4

    def validate(self) -> None:
        for name in ("n_classes", "n_speakers", "clips_per_speaker_per_class", "sample_rate", "tones_per_clip"):
            if int(getattr(self, name)) < 1:
                raise InvalidCorpusSpec(f"{name} deve ser >= 1")
        if not self.clip_seconds > 0:
            raise InvalidCorpusSpec("clip_seconds deve ser > 0")
        if self.pitch_offset_hz < 0 or self.dither_std < 0:
            raise InvalidCorpusSpec("pitch_offset_hz e dither_std devem ser >= 0")
        top_band = class_band(self.n_classes - 1)[1] + self.pitch_offset_hz
        if top_band >= carrier_band(self.sample_rate)[0]:
            raise InvalidCorpusSpec(
                f"{self.n_classes} classes chegam a {top_band:.0f} Hz, dentro da banda da portadora "
                f"em {self.sample_rate} Hz; aumente sample_rate ou reduza n_classes"
            )


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    client_key: str


def class_band(c: int) -> tuple[float, float]:
    return 300.0 + 400.0 * c, 500.0 + 400.0 * c


def carrier_band(sample_rate: int) -> tuple[float, float]:
    nyquist = sample_rate / 2.0
    return 0.70 * nyquist, 0.85 * nyquist


# WAV


def load_wav(path: str | os.PathLike) -> AudioClip:
    with open(path, "rb") as f:
        data = f.read()
    return parse_wav_bytes(data)


def parse_wav_bytes(data: bytes) -> AudioClip:
    if len(data) < 12:
        if data.startswith(b"RIFF"):
            raise TruncatedFile("arquivo termina dentro do cabeçalho RIFF")
        raise NotWav("cabeçalho RIFF/WAVE ausente")
    riff, _size, wave = struct.unpack("<4sI4s", data[:12])
    if riff != b"RIFF" or wave != b"WAVE":
        raise NotWav("assinatura RIFF/WAVE ausente")

    pos = 12
    fmt: Optional[tuple[int, int, int, int]] = None
    while True:
        if pos + 8 > len(data):
            raise TruncatedFile("nenhum chunk data antes do fim do arquivo")
        chunk_id, chunk_size = struct.unpack("<4sI", data[pos : pos + 8])
        body = pos + 8
        if chunk_id == b"fmt ":
            if chunk_size < 16 or body + 16 > len(data):
                raise TruncatedFile("chunk fmt truncado")
            audio_format, channels, rate, _byte_rate, _align, bits = struct.unpack(
                "<HHIIHH", data[body : body + 16]
            )
            fmt = (audio_format, channels, rate, bits)
            _check_format(*fmt)
        elif chunk_id == b"data":
            if fmt is None:
                raise NotWav("chunk data aparece antes do chunk fmt")
            if body + chunk_size > len(data):
                raise TruncatedFile(f"chunk data declara {chunk_size} bytes, há {len(data) - body}")
            if chunk_size % 2:
                raise TruncatedFile("chunk data termina no meio de uma amostra de 16 bits")
            raw = np.frombuffer(data, dtype="<i2", count=chunk_size // 2, offset=body)
            samples = raw.astype(np.float64) / PCM_SCALE
            return AudioClip(samples, fmt[2])
        pos = body + chunk_size + (chunk_size & 1)


def _check_format(audio_format: int, channels: int, rate: int, bits: int) -> None:
    if audio_format != PCM_FORMAT:
        raise UnsupportedEncoding(f"formato de áudio {audio_format} não é PCM")
    if bits != 16:
        raise UnsupportedEncoding(f"amostras de {bits} bits não são suportadas")
    if channels != 1:
        raise UnsupportedEncoding(f"{channels} canais; só mono é aceito")
    if rate <= 0:
        raise UnsupportedEncoding("taxa de amostragem zero")


def write_wav(path: str | os.PathLike, clip: AudioClip) -> None:
    scaled = np.rint(np.clip(clip.samples, -1.0, 32767.0 / PCM_SCALE) * PCM_SCALE)
    pcm = scaled.astype("<i2").tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(pcm),
        b"WAVE",
        b"fmt ",
        16,
        PCM_FORMAT,
        1,
        clip.sample_rate,
        clip.sample_rate * 2,
        2,
        16,
        b"data",
        len(pcm),
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(pcm)


# Corpus sintético


def synth_corpus(spec: SynthCorpusSpec) -> list[LabeledClip]:
    """Corpus determinístico de tons: uma banda por classe sobre uma portadora por locutor.

    Cada classe ocupa sua banda, deslocada pelo pitch do locutor. A portadora
    concentra a maior parte da potência, então uma SNR alvo encobre os tons
    de classe aos poucos.
    """
    spec.validate()
    rng = make_rng(spec.seed, "synth-corpus")
    n = int(round(spec.clip_seconds * spec.sample_rate))
    t = np.arange(n) / spec.sample_rate
    carrier_lo, carrier_hi = carrier_band(spec.sample_rate)
    carrier_power = 0.1
    class_power = carrier_power * 10.0 ** (spec.class_level_db / 10.0)
    tone_amp = np.sqrt(2.0 * class_power / spec.tones_per_clip)
    carrier_amp = np.sqrt(2.0 * carrier_power / 2)

    clips: list[LabeledClip] = []
    for s in range(spec.n_speakers):
        speaker_id = f"spk{s:04d}"
        offset = rng.uniform(-spec.pitch_offset_hz, spec.pitch_offset_hz)
        carrier_freqs = rng.uniform(carrier_lo, carrier_hi, size=2)
        gain = rng.uniform(0.5, 1.0)
        for c in range(spec.n_classes):
            lo, hi = class_band(c)
            for _ in range(spec.clips_per_speaker_per_class):
                freqs = rng.uniform(lo, hi, size=spec.tones_per_clip) + offset
                phases = rng.uniform(0.0, 2.0 * np.pi, size=spec.tones_per_clip + 2)
                tones = tone_amp * np.sin(2.0 * np.pi * freqs[:, None] * t + phases[: spec.tones_per_clip, None]).sum(0)
                carrier = carrier_amp * np.sin(
                    2.0 * np.pi * carrier_freqs[:, None] * t + phases[spec.tones_per_clip :, None]
                ).sum(0)
                signal = gain * (tones + carrier) + rng.normal(0.0, spec.dither_std, size=n)
                clips.append(LabeledClip(AudioClip(np.clip(signal, -1.0, 1.0), spec.sample_rate), c, speaker_id))
    logger.debug("%d clipes sintetizados (seed=%d)", len(clips), spec.seed)
    return clips


# Arquivos de features

_HEADER_RE = re.compile(r"^frames=(\d+)\s+dims=(\d+)\s+label=(-?\d+)\s+client=(.*)$")


def load_feature_file(
    path: str | os.PathLike, n_classes: Optional[int] = None
) -> tuple[np.ndarray, int, str]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().rstrip("\r\n")
            payload = f.read()
    except UnicodeDecodeError as exc:
        raise MalformedHeader(f"{path}: não é um arquivo de features em texto") from exc
    return parse_feature_text(header, payload, n_classes, source=str(path))


def parse_feature_text(
    header: str, payload: str, n_classes: Optional[int] = None, source: str = "<memory>"
) -> tuple[np.ndarray, int, str]:
    match = _HEADER_RE.match(header.strip())
    if not match:
        raise MalformedHeader(f"{source}: esperado 'frames=<n> dims=<d> label=<int> client=<key>'")
    frames, dims, label = int(match.group(1)), int(match.group(2)), int(match.group(3))
    client = match.group(4).strip()
    if frames < 1 or dims < 1 or not client:
        raise MalformedHeader(f"{source}: frames e dims devem ser >= 1 e client não vazio")
    if label < 0 or (n_classes is not None and label >= n_classes):
        raise UnknownLabel(f"{source}: rótulo {label} fora do vocabulário de {n_classes}")
    tokens = payload.split()
    if len(tokens) != frames * dims:
        raise DimensionMismatch(f"{source}: cabeçalho declara {frames * dims} valores, encontrados {len(tokens)}")
    try:
        values = np.array([float(tok) for tok in tokens], dtype=np.float64)
    except ValueError as exc:
        raise MalformedPayload(f"{source}: {exc}") from exc
    if not np.all(np.isfinite(values)):
        raise MalformedPayload(f"{source}: valor de feature não finito")
    return values.reshape(frames, dims), label, client


def write_feature_file(path: str | os.PathLike, matrix: np.ndarray, label: int, client: str) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise DimensionMismatch("a matriz de features deve ser bidimensional")
    frames, dims = matrix.shape
    lines = [f"frames={frames} dims={dims} label={int(label)} client={client}"]
    lines.extend(" ".join(format(v, ".17g") for v in row) for row in matrix)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_feature_dir(directory: str | os.PathLike, n_classes: Optional[int] = None) -> list[tuple[np.ndarray, int, str]]:
    root = Path(directory)
    files = sorted(p for p in root.iterdir() if p.is_file() and not p.name.startswith("."))
    return [load_feature_file(p, n_classes) for p in files]


# Manifestos


def load_manifest(path: str | os.PathLike) -> list[ManifestEntry]:
    base = Path(path).resolve().parent
    entries: list[ManifestEntry] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not parts[2]:
                raise MalformedManifest(f"{path}:{lineno}: esperado path<TAB>label<TAB>client_key")
            try:
                label = int(parts[1])
            except ValueError as exc:
                raise MalformedManifest(f"{path}:{lineno}: rótulo {parts[1]!r} não é inteiro") from exc
            entry_path = Path(parts[0])
            if not entry_path.is_absolute():
                entry_path = base / entry_path
            entries.append(ManifestEntry(str(entry_path), label, parts[2]))
    return entries


def write_manifest(path: str | os.PathLike, entries: list[ManifestEntry]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in entries:
            f.write(f"{e.path}\t{e.label}\t{e.client_key}\n")


def load_manifest_clips(entries: list[ManifestEntry]) -> list[LabeledClip]:
    return [LabeledClip(load_wav(e.path), e.label, e.client_key) for e in entries]
