"""Configurações de treino publicadas para os quatro corpora de áudio.

As chaves são ``<dataset>/<optimizer>/<percent>``, ex.: ``google_command/fedavg/5``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import ConfigError

DATASETS = ("google_command", "iemocap", "crema_d", "urban_sound")


@dataclass(frozen=True)
class Preset:
    sample_ratio: float
    client_lr: float
    rounds: int
    server_lr: Optional[float] = None
    # número publicado de clientes sorteados; substitui o arredondamento de sample_ratio
    clients_per_round: Optional[int] = None

    def fed_fields(self) -> dict:
        fields = {"sample_ratio": self.sample_ratio, "client_lr": self.client_lr, "rounds": self.rounds}
        if self.server_lr is not None:
            fields["server_lr"] = self.server_lr
        if self.clients_per_round is not None:
            fields["clients_per_round"] = self.clients_per_round
        return fields


# Clientes sorteados por rodada como publicado; 2112 * 20% arredonda para 422, não 424.
SAMPLED_CLIENTS: dict[tuple[str, int], int] = {
    ("google_command", 5): 106,
    ("google_command", 10): 212,
    ("google_command", 20): 424,
    ("iemocap", 100): 8,
    ("crema_d", 10): 7,
    ("crema_d", 30): 21,
    ("crema_d", 50): 36,
    ("urban_sound", 20): 10,
    ("urban_sound", 50): 25,
}


def _rows(dataset, optimizer, rows):
    return {
        (dataset, optimizer, pct): Preset(pct / 100.0, lr, rounds, server_lr, SAMPLED_CLIENTS.get((dataset, pct)))
        for pct, lr, server_lr, rounds in rows
    }


HYPERPARAMETERS: dict[tuple[str, str, int], Preset] = {
    **_rows("google_command", "fedavg", [(5, 0.1, None, 5000), (10, 0.3, None, 5000), (20, 0.2, None, 5000)]),
    **_rows("google_command", "fedopt", [(5, 0.05, 0.001, 5000), (10, 0.01, 0.001, 5000), (20, 0.01, 0.001, 5000)]),
    **_rows("iemocap", "fedavg", [(100, 0.01, None, 200)]),
    **_rows("iemocap", "fedopt", [(100, 0.01, 0.001, 50)]),
    **_rows("crema_d", "fedavg", [(10, 0.1, None, 200), (30, 0.1, None, 200), (50, 0.1, None, 200)]),
    **_rows("crema_d", "fedopt", [(10, 0.1, 0.001, 200), (30, 0.1, 0.001, 200), (50, 0.1, 0.001, 200)]),
    **_rows("urban_sound", "fedavg", [(20, 0.075, None, 300), (50, 0.075, None, 300)]),
    **_rows("urban_sound", "fedopt", [(20, 0.1, 0.001, 300), (50, 0.1, 0.001, 300)]),
}

# Configurações FedAvg das execuções com ruído e com erro de rótulo (sample ratio inalterado).
NOISY_SETTINGS: dict[str, dict] = {
    "google_command": {"client_lr": 0.1, "rounds": 5000},
    "iemocap": {"client_lr": 0.01, "rounds": 200},
    "crema_d": {"client_lr": 0.1, "rounds": 200},
    "urban_sound": {"client_lr": 0.075, "rounds": 300},
}


def _percent(text: str) -> int:
    raw = text.strip().rstrip("%")
    value = float(raw)
    if value <= 1 and "." in raw:
        value *= 100
    return int(round(value))


def lookup_preset(name: str) -> Preset:
    parts = name.strip().lower().replace("-", "_").split("/")
    if len(parts) != 3:
        raise ConfigError("preset", f"esperado <dataset>/<optimizer>/<ratio>, recebido {name!r}")
    dataset, optimizer, ratio = parts
    if dataset not in DATASETS:
        raise ConfigError("preset", f"dataset desconhecido {dataset!r}; conhecidos: {', '.join(DATASETS)}")
    try:
        key = (dataset, optimizer, _percent(ratio))
    except ValueError:
        raise ConfigError("preset", f"sample ratio inválido {ratio!r}") from None
    try:
        return HYPERPARAMETERS[key]
    except KeyError:
        known = sorted(f"{d}/{o}/{p}" for d, o, p in HYPERPARAMETERS)
        raise ConfigError("preset", f"preset desconhecido {name!r}; conhecidos: {', '.join(known)}") from None
