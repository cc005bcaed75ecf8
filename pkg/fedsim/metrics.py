from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyMetricInput, MetricError, MetricLengthMismatch

METRIC_FIELDS = {"accuracy": "test_accuracy", "f1": "test_macro_f1"}


def _pair(predictions, labels) -> tuple[np.ndarray, np.ndarray]:
    predictions = np.asarray(predictions, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if predictions.shape != labels.shape:
        raise MetricLengthMismatch(f"{predictions.size} predições para {labels.size} rótulos")
    if predictions.size == 0:
        raise EmptyMetricInput("nenhuma predição para avaliar")
    return predictions, labels


def accuracy(predictions, labels) -> float:
    predictions, labels = _pair(predictions, labels)
    return float(np.count_nonzero(predictions == labels)) / labels.size


def macro_f1(predictions, labels, n_classes: int) -> float:
    """Média sem pesos do F1 de cada classe.

    Classes ausentes tanto das predições quanto dos rótulos ficam fora da
    média; uma classe com P + R = 0 conta como F1 = 0.
    """
    predictions, labels = _pair(predictions, labels)
    if labels.max() >= n_classes or labels.min() < 0:
        raise MetricError(f"rótulos fora de [0, {n_classes})")
    scores = []
    for c in range(n_classes):
        pred_c = predictions == c
        true_c = labels == c
        if not pred_c.any() and not true_c.any():
            continue
        tp = np.count_nonzero(pred_c & true_c)
        precision = tp / pred_c.sum() if pred_c.any() else 0.0
        recall = tp / true_c.sum() if true_c.any() else 0.0
        scores.append(0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall))
    return float(np.mean(scores))


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float
    n: int

    def render(self, scale: float = 100.0) -> str:
        """'88.62 (0.51)%' para frações; use scale=1 para valores já em porcentagem."""
        return f"{self.mean * scale:.2f} ({self.std * scale:.2f})%"


@dataclass(frozen=True)
class RoundToTarget:
    target: float
    rounds: Optional[int]
    baseline_rounds: Optional[int] = None
    ratio: Optional[float] = None
    # total de rodadas observadas, usado no formato '>R'
    horizon: Optional[int] = None

    @property
    def reached(self) -> bool:
        return self.rounds is not None

    def render(self) -> str:
        if self.rounds is None:
            return f">{self.horizon}" if self.horizon is not None else ">"
        if self.ratio is None:
            return str(self.rounds)
        return f"{self.rounds} ({self.ratio:.2f}×)"


def summarize(values: Sequence[float]) -> MetricSummary:
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise EmptyMetricInput("não dá para resumir uma lista vazia")
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return MetricSummary(float(arr.mean()), std, int(arr.size))


def metric_value(record: Any, metric: str) -> float:
    try:
        key = METRIC_FIELDS[metric]
    except KeyError:
        raise MetricError(f"métrica desconhecida {metric!r}; esperado uma de {sorted(METRIC_FIELDS)}") from None
    if isinstance(record, dict):
        return float(record[key])
    return float(getattr(record, key))


def first_crossing(curve: Sequence[float], target: float) -> Optional[int]:
    """Posição (a partir de 1) do primeiro valor >= alvo; None se nunca alcançado."""
    for i, value in enumerate(curve):
        if value >= target:
            return i + 1
    return None


def _with_baseline(target: float, rounds: Optional[int], horizon: int, baseline_rounds: Optional[int]) -> RoundToTarget:
    ratio = None
    if rounds is not None and baseline_rounds:
        ratio = rounds / baseline_rounds
    return RoundToTarget(target, rounds, baseline_rounds, ratio, horizon)


def round_to_target(
    records: Sequence[Any],
    target: float,
    metric: str = "accuracy",
    baseline_rounds: Optional[int] = None,
) -> RoundToTarget:
    curve = [metric_value(r, metric) for r in records]
    return _with_baseline(target, first_crossing(curve, target), len(curve), baseline_rounds)


def curve_to_target(curve: Sequence[float], target: float, baseline_rounds: Optional[int] = None) -> RoundToTarget:
    return _with_baseline(target, first_crossing(curve, target), len(curve), baseline_rounds)


def delta_metric(baseline: MetricSummary, treatment: MetricSummary) -> float:
    return treatment.mean - baseline.mean


def format_delta(baseline: MetricSummary, treatment: MetricSummary, scale: float = 100.0) -> str:
    delta = delta_metric(baseline, treatment) * scale
    arrow = "↓" if delta < 0 else "↑"
    return f"{arrow}{abs(delta):.2f} ({treatment.std * scale:.2f})"


def mean_curve(streams: Iterable[Sequence[Any]], metric: str = "accuracy") -> np.ndarray:
    """Média por rodada de uma métrica sobre os registros de várias seeds."""
    curves = [[metric_value(r, metric) for r in stream] for stream in streams]
    if not curves:
        raise EmptyMetricInput("nenhuma sequência de registros")
    lengths = {len(c) for c in curves}
    if len(lengths) != 1:
        raise MetricLengthMismatch(f"as sequências de registros têm tamanhos diferentes: {sorted(lengths)}")
    return np.mean(np.array(curves, dtype=np.float64), axis=0)

