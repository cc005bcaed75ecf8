from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np

from .audio_io import AudioClip, LabeledClip
from .errors import (
    ClassCountMismatch,
    CorruptionError,
    InfeasibleSpec,
    LengthMismatch,
    SilentClip,
    ZeroNoise,
)
from .utils import make_rng, round_half_up

logger = logging.getLogger(__name__)

ROW_TOLERANCE = 1e-12


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float
    seed: int = 0
    # Reescala cada sorteio para a potência obtida ser exatamente P_s / 10^(snr/10).
    exact_power: bool = True

    def validate(self) -> None:
        if not np.isfinite(self.snr_db):
            raise CorruptionError("snr_db deve ser finito")


@dataclass(frozen=True)
class LabelErrorSpec:
    error_ratio: float
    error_sparsity: float
    seed: int = 0

    def validate(self, n_classes: int | None = None) -> None:
        if not 0 <= self.error_ratio < 1:
            raise InfeasibleSpec("error_ratio deve estar em [0, 1)")
        if not 0 <= self.error_sparsity <= 1:
            raise InfeasibleSpec("error_sparsity deve estar em [0, 1]")
        if self.error_sparsity == 1 and self.error_ratio > 0:
            raise InfeasibleSpec("error_sparsity 1 não deixa massa fora da diagonal para um error_ratio positivo")
        if n_classes is not None and self.error_ratio > 0:
            off = n_classes * (n_classes - 1)
            if n_classes < 2 or off - zero_budget(n_classes, self.error_sparsity) < n_classes:
                raise InfeasibleSpec(
                    f"esparsidade {self.error_sparsity} deixa menos de uma célula não nula fora da diagonal "
                    f"por linha para K={n_classes}"
                )


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    q: np.ndarray

    def __post_init__(self) -> None:
        q = np.array(self.q, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise CorruptionError("a matriz de transição deve ser quadrada")
        if np.any(q < 0) or np.any(q > 1):
            raise CorruptionError("as probabilidades de transição devem estar em [0, 1]")
        if np.any(np.abs(q.sum(axis=1) - 1.0) > ROW_TOLERANCE):
            raise CorruptionError("as linhas da matriz de transição devem somar 1")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def n_classes(self) -> int:
        return self.q.shape[0]

    @classmethod
    def identity(cls, n_classes: int) -> "TransitionMatrix":
        return cls(np.eye(n_classes))


def signal_power(samples: np.ndarray) -> float:
    return float(np.mean(np.square(samples)))


def inject_awgn(clip: AudioClip, spec: NoiseSpec, rng: np.random.Generator | None = None) -> AudioClip:
    """clip + ruído branco gaussiano com potência P_n = P_s / 10^(snr/10).

    Com ``spec.exact_power`` (o padrão) o sorteio é reescalado para a
    potência obtida ser exatamente P_n, e a SNR medida bate com o alvo em
    todo clipe. ``exact_power=False`` devolve o sorteio i.i.d. N(0, P_n)
    sem reescala, cuja SNR obtida oscila em torno do alvo.
    A soma não é recortada para [-1, 1].
    """
    spec.validate()
    if len(clip) == 0:
        raise SilentClip("clipe vazio")
    p_signal = signal_power(clip.samples)
    if p_signal == 0:
        raise SilentClip("potência do sinal é zero; SNR indefinida")
    p_noise = p_signal / 10.0 ** (spec.snr_db / 10.0)
    rng = rng if rng is not None else make_rng(spec.seed, "awgn")
    noise = rng.standard_normal(len(clip))
    if spec.exact_power:
        noise *= np.sqrt(p_noise / signal_power(noise))
    else:
        noise *= np.sqrt(p_noise)
    return AudioClip(clip.samples + noise, clip.sample_rate)


def measure_snr(original: AudioClip, noisy: AudioClip) -> float:
    if len(original) != len(noisy) or original.sample_rate != noisy.sample_rate:
        raise LengthMismatch("os clipes diferem em tamanho ou taxa de amostragem")
    p_noise = signal_power(noisy.samples - original.samples)
    if p_noise == 0:
        raise ZeroNoise("os clipes são idênticos; SNR ilimitada")
    return 10.0 * np.log10(signal_power(original.samples) / p_noise)


def corrupt_clips(clips: list[LabeledClip], spec: NoiseSpec) -> list[LabeledClip]:
    """AWGN em cada clipe, com um fluxo aleatório independente por posição."""
    out = []
    for i, item in enumerate(clips):
        rng = make_rng(spec.seed, "awgn", i)
        out.append(LabeledClip(inject_awgn(item.clip, spec, rng), item.label, item.speaker_id))
    return out


def zero_budget(n_classes: int, sparsity: float) -> int:
    return round_half_up(sparsity * n_classes * (n_classes - 1))


def gen_transition_matrix(n_classes: int, spec: LabelErrorSpec) -> TransitionMatrix:
    """Q com Q_ii = 1 - error_ratio e uma cota de zeros fora da diagonal para a matriz toda.

    As células não nulas fora da diagonal são distribuídas entre as linhas do
    modo mais uniforme possível (as linhas que recebem o resto saem de um
    embaralhamento com semente). A massa de erro de cada linha é dividida
    entre suas células não nulas por um sorteio uniforme no simplex.
    """
    if n_classes < 1:
        raise InfeasibleSpec("é preciso pelo menos uma classe")
    spec.validate(n_classes)
    if spec.error_ratio == 0:
        return TransitionMatrix.identity(n_classes)

    rng = make_rng(spec.seed, "transition", n_classes)
    off = n_classes * (n_classes - 1)
    nonzero = off - zero_budget(n_classes, spec.error_sparsity)
    per_row = np.full(n_classes, nonzero // n_classes)
    per_row[rng.permutation(n_classes)[: nonzero % n_classes]] += 1

    q = np.zeros((n_classes, n_classes))
    for i in range(n_classes):
        others = np.array([j for j in range(n_classes) if j != i])
        cols = rng.choice(others, size=int(per_row[i]), replace=False)
        weights = rng.exponential(size=len(cols))
        q[i, cols] = spec.error_ratio * weights / weights.sum()
        q[i, i] = 1.0 - spec.error_ratio
    return TransitionMatrix(q)


def q_stats(q: TransitionMatrix) -> tuple[np.ndarray, float]:
    k = q.n_classes
    ratios = 1.0 - np.diag(q.q)
    if k < 2:
        return ratios, 1.0
    off_diag = q.q[~np.eye(k, dtype=bool)]
    return ratios, float(np.count_nonzero(off_diag == 0.0)) / (k * (k - 1))


def resample_labels(labels: np.ndarray, q: TransitionMatrix, rng: np.random.Generator) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    cdf = np.cumsum(q.q, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(len(labels))
    return np.argmax(u[:, None] < cdf[labels], axis=1)


def apply_label_errors(
    clients: dict[str, list[tuple[Any, int]]],
    q: TransitionMatrix,
    seed: int,
    n_classes: int | None = None,
) -> dict[str, list[tuple[Any, int]]]:
    """Sorteia de novo cada rótulo de treino pela linha Q[y]; features e clientes não mudam."""
    if n_classes is not None and n_classes != q.n_classes:
        raise ClassCountMismatch(f"o dataset tem {n_classes} classes, Q é {q.n_classes}x{q.n_classes}")
    corrupted: dict[str, list[tuple[Any, int]]] = {}
    flipped = 0
    total = 0
    for cid in sorted(clients):
        shard = clients[cid]
        labels = np.array([label for _, label in shard], dtype=np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= q.n_classes):
            raise ClassCountMismatch(f"o cliente {cid!r} tem rótulos fora das {q.n_classes} classes de Q")
        new = resample_labels(labels, q, make_rng(seed, "labels", cid)) if labels.size else labels
        corrupted[cid] = [(features, int(y)) for (features, _), y in zip(shard, new)]
        flipped += int(np.count_nonzero(new != labels))
        total += len(shard)
    logger.info("erros de rótulo trocaram %d de %d rótulos de treino", flipped, total)
    return corrupted
