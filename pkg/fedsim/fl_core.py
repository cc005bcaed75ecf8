from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Literal, Optional, Sequence

import numpy as np

from . import nn
from .config import worker_count
from .errors import EmptyTestSet, FederationError
from .metrics import accuracy, macro_f1
from .model import ModelArch, ParamVector, init_params, local_train_stats, predict
from .partition import Example, FederatedDataset
from .utils import derive_seed, make_rng, round_half_up

logger = logging.getLogger(__name__)

CENTRALIZED_CLIENT = "centralized"


@dataclass(frozen=True)
class FedConfig:
    optimizer: Literal["fedavg", "fedopt"] = "fedavg"
    rounds: int = 100
    sample_ratio: float = 1.0
    client_lr: float = 0.05
    server_lr: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs_per_round: int = 1
    batch_size: int = 16
    master_seed: int = 0
    clients_per_round: Optional[int] = None

    def validate(self) -> None:
        if self.optimizer not in ("fedavg", "fedopt"):
            raise FederationError(f"otimizador desconhecido {self.optimizer!r}")
        if self.rounds < 1:
            raise FederationError("rounds deve ser >= 1")
        if not 0 < self.sample_ratio <= 1:
            raise FederationError("sample_ratio deve estar em (0, 1]")
        if self.client_lr < 0 or self.server_lr < 0:
            raise FederationError("as taxas de aprendizado devem ser >= 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1) or self.adam_eps <= 0:
            raise FederationError("os betas do adam devem estar em [0, 1) e eps deve ser > 0")
        if self.epochs_per_round < 1 or self.batch_size < 1:
            raise FederationError("epochs_per_round e batch_size devem ser >= 1")
        if self.clients_per_round is not None and self.clients_per_round < 1:
            raise FederationError("clients_per_round deve ser >= 1")


@dataclass
class ServerState:
    global_params: ParamVector
    adam_m: ParamVector
    adam_v: ParamVector
    step_count: int = 0

    @classmethod
    def fresh(cls, params: ParamVector) -> "ServerState":
        return cls(params.copy(), params.zeros_like(), params.zeros_like(), 0)


@dataclass
class RoundRecord:
    round: int
    sampled_clients: list[str]
    mean_train_loss: float
    test_accuracy: float
    test_macro_f1: float
    test_loss: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RoundRecord":
        return cls(
            round=int(data["round"]),
            sampled_clients=list(data["sampled_clients"]),
            mean_train_loss=float(data["mean_train_loss"]),
            test_accuracy=float(data["test_accuracy"]),
            test_macro_f1=float(data["test_macro_f1"]),
            test_loss=float(data.get("test_loss", float("nan"))),
        )


@dataclass
class FederationResult:
    records: list[RoundRecord] = field(default_factory=list)
    params: Optional[ParamVector] = None

    def __iter__(self):
        yield self.records
        yield self.params


RoundCallback = Callable[[RoundRecord], None]


def sampled_count(n: int, ratio: float, override: Optional[int] = None) -> int:
    if override is not None:
        return min(n, override)
    return min(n, max(1, round_half_up(ratio * n)))


def sample_clients(
    client_ids: Sequence[str],
    ratio: float,
    round_rng: np.random.Generator,
    count: Optional[int] = None,
) -> list[str]:
    """m clientes distintos sorteados uniformemente sem reposição, em ordem de id."""
    if not client_ids:
        raise FederationError("nenhum cliente para sortear")
    ids = sorted(client_ids)
    m = sampled_count(len(ids), ratio, count)
    chosen = round_rng.choice(len(ids), size=m, replace=False)
    return [ids[i] for i in sorted(chosen)]


def fedavg_aggregate(updates: Sequence[tuple[ParamVector, int]]) -> ParamVector:
    """Média por coordenada ponderada pelo número de exemplos, acumulada na ordem recebida."""
    if not updates:
        raise FederationError("nada para agregar")
    first = updates[0][0]
    counts = np.array([n for _, n in updates], dtype=np.float64)
    if np.any(counts < 1):
        raise FederationError("as contagens de exemplos devem ser >= 1")
    weights = counts / counts.sum()
    total = np.zeros_like(first.values)
    for (params, _), w in zip(updates, weights):
        first.check_layout(params)
        total += w * params.values
    return first.with_values(total)


def fedopt_step(state: ServerState, aggregated: ParamVector, cfg: FedConfig) -> ServerState:
    """Adam sobre o pseudo-gradiente g = -(agregado - global), com correção de viés."""
    state.global_params.check_layout(aggregated)
    g = state.global_params.values - aggregated.values
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    m = b1 * state.adam_m.values + (1.0 - b1) * g
    v = b2 * state.adam_v.values + (1.0 - b2) * g * g
    step = state.step_count + 1
    m_hat = m / (1.0 - b1**step)
    v_hat = v / (1.0 - b2**step)
    if cfg.server_lr == 0:
        new_global = state.global_params.values.copy()
    else:
        new_global = state.global_params.values - cfg.server_lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return ServerState(
        state.global_params.with_values(new_global),
        state.adam_m.with_values(m),
        state.adam_v.with_values(v),
        step,
    )


def client_seed(master_seed: int, round_index: int, client_id: str) -> np.random.SeedSequence:
    return derive_seed(master_seed, round_index, client_id)


def evaluate(params: ParamVector, arch: ModelArch, test_set: Sequence[Example], n_classes: int) -> tuple[float, float, float]:
    """(acurácia, macro-F1, entropia cruzada média) de params em test_set."""
    if not test_set:
        raise EmptyTestSet("o conjunto de teste está vazio")
    logits = predict(params, arch, [x for x, _ in test_set])
    labels = np.array([y for _, y in test_set], dtype=np.int64)
    loss, _ = nn.softmax_cross_entropy(logits, labels)
    preds = logits.argmax(axis=1)
    return accuracy(preds, labels), macro_f1(preds, labels, n_classes), loss


def _train_client(args):
    cid, global_params, arch, shard, cfg, round_index = args
    params, loss, _ = local_train_stats(
        global_params,
        arch,
        shard,
        cfg.client_lr,
        epochs=cfg.epochs_per_round,
        batch_size=cfg.batch_size,
        seed=client_seed(cfg.master_seed, round_index, cid),
    )
    logger.debug("rodada %d cliente %s: %d exemplos, perda %.4f", round_index, cid, len(shard), loss)
    return cid, params, len(shard), loss


def run_federation(
    dataset: FederatedDataset,
    arch: ModelArch,
    cfg: FedConfig,
    initial: Optional[ParamVector] = None,
    on_round: Optional[RoundCallback] = None,
) -> FederationResult:
    cfg.validate()
    arch.validate()
    dataset.validate()
    if not dataset.test_set:
        raise EmptyTestSet("o dataset federado não tem exemplos de teste")

    params = initial.copy() if initial is not None else init_params(arch, derive_seed(cfg.master_seed, "init"))
    state = ServerState.fresh(params)
    client_ids = dataset.client_ids
    workers = worker_count()
    result = FederationResult()
    logger.info(
        "federação: %s, %d clientes, %d rodadas, %d sorteados por rodada, %d worker(s)",
        cfg.optimizer,
        len(client_ids),
        cfg.rounds,
        sampled_count(len(client_ids), cfg.sample_ratio, cfg.clients_per_round),
        workers,
    )

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for r in range(cfg.rounds):
            sampled = sample_clients(client_ids, cfg.sample_ratio, make_rng(cfg.master_seed, r), cfg.clients_per_round)
            snapshot = state.global_params.copy()
            snapshot.values.setflags(write=False)
            jobs = [(cid, snapshot, arch, dataset.clients[cid], cfg, r) for cid in sampled]
            outcomes = sorted(pool.map(_train_client, jobs), key=lambda o: o[0])

            aggregated = fedavg_aggregate([(p, n) for _, p, n, _ in outcomes])
            if cfg.optimizer == "fedopt":
                state = fedopt_step(state, aggregated, cfg)
            else:
                state = ServerState(aggregated, state.adam_m, state.adam_v, state.step_count)

            acc, f1, test_loss = evaluate(state.global_params, arch, dataset.test_set, dataset.n_classes)
            record = RoundRecord(r, sampled, float(np.mean([o[3] for o in outcomes])), acc, f1, test_loss)
            logger.info("rodada %d: perda de treino %.4f, acurácia de teste %.4f, f1 %.4f", r, record.mean_train_loss, acc, f1)
            result.records.append(record)
            if on_round is not None:
                on_round(record)

    result.params = state.global_params
    return result


def run_centralized(
    dataset: FederatedDataset,
    arch: ModelArch,
    cfg: FedConfig,
    initial: Optional[ParamVector] = None,
    on_round: Optional[RoundCallback] = None,
) -> FederationResult:
    """Base centralizada: os shards de todos os clientes treinados juntos, avaliados a cada rodada."""
    cfg.validate()
    arch.validate()
    dataset.validate()
    if not dataset.test_set:
        raise EmptyTestSet("o dataset não tem exemplos de teste")

    params = initial.copy() if initial is not None else init_params(arch, derive_seed(cfg.master_seed, "init"))
    pooled = dataset.train_examples()
    result = FederationResult()
    logger.info("centralizado: %d exemplos, %d rodadas", len(pooled), cfg.rounds)
    for r in range(cfg.rounds):
        params, loss, _ = local_train_stats(
            params,
            arch,
            pooled,
            cfg.client_lr,
            epochs=cfg.epochs_per_round,
            batch_size=cfg.batch_size,
            seed=client_seed(cfg.master_seed, r, CENTRALIZED_CLIENT),
        )
        acc, f1, test_loss = evaluate(params, arch, dataset.test_set, dataset.n_classes)
        record = RoundRecord(r, [CENTRALIZED_CLIENT], loss, acc, f1, test_loss)
        logger.info("rodada %d: perda de treino %.4f, acurácia de teste %.4f, f1 %.4f", r, loss, acc, f1)
        result.records.append(record)
        if on_round is not None:
            on_round(record)
    result.params = params
    return result
