from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Hashable, Sequence

import numpy as np

from .errors import EmptyInput, InfeasibleSpec, PartitionError, RetryExhausted
from .utils import make_rng

logger = logging.getLogger(__name__)

MAX_DIRICHLET_ATTEMPTS = 100

Example = tuple[Any, int]


@dataclass
class FederatedDataset:
    clients: dict[str, list[Example]]
    test_set: list[Example]
    n_classes: int
    meta: dict = field(default_factory=dict)

    @property
    def client_ids(self) -> list[str]:
        return sorted(self.clients)

    def train_examples(self) -> list[Example]:
        return [ex for cid in self.client_ids for ex in self.clients[cid]]

    def validate(self) -> None:
        if not self.clients:
            raise EmptyInput("o dataset federado não tem clientes")
        for cid, shard in self.clients.items():
            if not shard:
                raise PartitionError(f"o cliente {cid!r} não tem exemplos")
            for _, label in shard:
                if not 0 <= label < self.n_classes:
                    raise PartitionError(f"o cliente {cid!r} tem o rótulo {label} fora de [0, {self.n_classes})")
        for _, label in self.test_set:
            if not 0 <= label < self.n_classes:
                raise PartitionError(f"rótulo de teste {label} fora de [0, {self.n_classes})")


@dataclass(frozen=True)
class DirichletSpec:
    n_clients: int = 50
    alpha: float = 0.5
    min_per_client: int = 1
    seed: int = 0

    def validate(self) -> None:
        if self.n_clients < 1:
            raise InfeasibleSpec("n_clients deve ser >= 1")
        if not self.alpha > 0:
            raise InfeasibleSpec("alpha deve ser > 0")
        if self.min_per_client < 0:
            raise InfeasibleSpec("min_per_client deve ser >= 0")


def client_name(index: int) -> str:
    return f"client{index:04d}"


def partition_by_key(examples: Sequence[tuple[Any, int, Hashable]]) -> dict[str, list[Example]]:
    """Um cliente por chave natural (id de locutor ou ator), em ordem de chave."""
    if not examples:
        raise EmptyInput("nenhum exemplo para particionar")
    groups: dict[str, list[Example]] = defaultdict(list)
    for features, label, key in examples:
        if key is None or str(key) == "":
            raise PartitionError("todo exemplo precisa de uma chave de cliente não vazia")
        groups[str(key)].append((features, label))
    return {k: groups[k] for k in sorted(groups)}


def dirichlet_partition(examples: Sequence[Example], spec: DirichletSpec) -> dict[str, list[Example]]:
    """Divisão com viés de rótulo: por classe, proporções entre clientes ~ Dirichlet(alpha).

    Cada sorteio Dirichlet é uma amostra Gamma(alpha, 1) normalizada; clientes
    vazios ou abaixo do mínimo disparam nova tentativa com a próxima sub-seed.
    """
    spec.validate()
    if not examples:
        raise EmptyInput("nenhum exemplo para particionar")
    if len(examples) < spec.n_clients * spec.min_per_client:
        raise InfeasibleSpec(
            f"{len(examples)} exemplos não dão {spec.min_per_client} para cada um de {spec.n_clients} clientes"
        )
    labels = np.array([label for _, label in examples])
    classes = np.unique(labels)

    for attempt in range(MAX_DIRICHLET_ATTEMPTS):
        rng = make_rng(spec.seed, "dirichlet", attempt)
        owner = np.empty(len(examples), dtype=np.int64)
        for c in classes:
            idx = np.flatnonzero(labels == c)
            draws = rng.gamma(spec.alpha, 1.0, size=spec.n_clients)
            total = draws.sum()
            p = draws / total if total > 0 else np.full(spec.n_clients, 1.0 / spec.n_clients)
            counts = rng.multinomial(len(idx), p)
            shuffled = rng.permutation(idx)
            owner[shuffled] = np.repeat(np.arange(spec.n_clients), counts)
        sizes = np.bincount(owner, minlength=spec.n_clients)
        if sizes.min() >= spec.min_per_client:
            shards: dict[str, list[Example]] = {client_name(i): [] for i in range(spec.n_clients)}
            for i, ex in enumerate(examples):
                shards[client_name(int(owner[i]))].append(ex)
            if attempt:
                logger.info("partição dirichlet aceita na tentativa %d", attempt + 1)
            return {k: v for k, v in shards.items() if v}
        logger.warning("tentativa dirichlet %d deixou %d clientes abaixo do mínimo", attempt + 1, int((sizes < spec.min_per_client).sum()))

    raise RetryExhausted(
        f"nenhuma divisão com >= {spec.min_per_client} exemplos por cliente após {MAX_DIRICHLET_ATTEMPTS} tentativas "
        f"(alpha={spec.alpha}, n_clients={spec.n_clients})"
    )


def holdout_split(
    examples: Sequence[tuple[Any, int, Hashable]],
    test_fraction: float,
    by_key: bool,
    seed: int,
) -> tuple[list[tuple[Any, int, Hashable]], list[tuple[Any, int, Hashable]]]:
    """Separa para teste chaves inteiras (teste independente de locutor) ou exemplos avulsos."""
    if not examples:
        raise EmptyInput("nenhum exemplo para dividir")
    if not 0 < test_fraction < 1:
        raise PartitionError("test_fraction deve estar em (0, 1)")
    rng = make_rng(seed, "holdout")
    if by_key:
        keys = sorted({str(k) for _, _, k in examples})
        if len(keys) < 2:
            raise PartitionError("separar por chave exige pelo menos duas chaves")
        n_test = min(len(keys) - 1, max(1, math.ceil(test_fraction * len(keys))))
        held = {keys[i] for i in rng.permutation(len(keys))[:n_test]}
        train = [ex for ex in examples if str(ex[2]) not in held]
        test = [ex for ex in examples if str(ex[2]) in held]
    else:
        if len(examples) < 2:
            raise PartitionError("separar por exemplo exige pelo menos dois exemplos")
        n_test = min(len(examples) - 1, max(1, math.ceil(test_fraction * len(examples))))
        held_idx = set(rng.permutation(len(examples))[:n_test].tolist())
        train = [ex for i, ex in enumerate(examples) if i not in held_idx]
        test = [ex for i, ex in enumerate(examples) if i in held_idx]
    return train, test


def class_counts(shard: Sequence[Example], n_classes: int) -> np.ndarray:
    return np.bincount(np.array([label for _, label in shard], dtype=np.int64), minlength=n_classes)[:n_classes]


def partition_report(clients: dict[str, list[Example]], n_classes: int) -> list[dict]:
    rows = []
    for cid in sorted(clients):
        counts = class_counts(clients[cid], n_classes)
        row = {"client_id": cid, "size": len(clients[cid])}
        row.update({f"class_{c}": int(counts[c]) for c in range(n_classes)})
        rows.append(row)
    return rows


def label_entropy(clients: dict[str, list[Example]], n_classes: int) -> float:
    """Entropia de Shannon média por cliente (nats) da distribuição local de rótulos."""
    entropies = []
    for shard in clients.values():
        p = class_counts(shard, n_classes) / len(shard)
        p = p[p > 0]
        entropies.append(float(-(p * np.log(p)).sum()))
    return float(np.mean(entropies))
