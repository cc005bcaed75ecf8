from __future__ import annotations

import copy
import itertools
import json
import logging
import os
from dataclasses import MISSING, asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
import yaml

from .audio_io import LabeledClip, SynthCorpusSpec, load_feature_dir, load_manifest, load_manifest_clips, synth_corpus
from .config import Config
from .corruption import LabelErrorSpec, NoiseSpec, apply_label_errors, corrupt_clips, gen_transition_matrix, q_stats
from .errors import ConfigError, FedSimError
from .features import FeatureConfig, extract_mel, segment_clip, znormalize
from .fl_core import FedConfig, RoundRecord, run_centralized, run_federation
from .model import ModelArch, save_params
from .partition import DirichletSpec, FederatedDataset, dirichlet_partition, holdout_split, label_entropy, partition_by_key, partition_report
from .presets import lookup_preset
from .reports import JsonlWriter, load_record_dir, summary_rows, write_summary_csv
from .utils import canonical_json, config_hash, to_jsonable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetConfig:
    kind: Literal["synthetic", "manifest", "features"] = "synthetic"
    path: Optional[str] = None
    n_classes: Optional[int] = None
    synthetic: SynthCorpusSpec = field(default_factory=SynthCorpusSpec)
    segment_seconds: Optional[float] = None
    segment_overlap: float = 0.0

    @property
    def raw_audio(self) -> bool:
        return self.kind != "features"


@dataclass(frozen=True)
class PartitionConfig:
    method: Literal["by_key", "dirichlet"] = "by_key"
    alpha: float = 0.5
    n_clients: int = 50
    min_per_client: int = 1
    test_fraction: float = 0.2


@dataclass(frozen=True)
class NoiseConfig:
    snr_db: float
    exact_power: bool = True


@dataclass(frozen=True)
class LabelErrorConfig:
    error_ratio: float
    error_sparsity: float = 0.0


@dataclass(frozen=True)
class CorruptionConfig:
    noise: Optional[NoiseConfig] = None
    label_errors: Optional[LabelErrorConfig] = None


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    dataset: DatasetConfig
    partition: PartitionConfig
    corruption: CorruptionConfig
    feature: FeatureConfig
    arch: ModelArch
    fed: FedConfig
    n_seeds: int = 5
    targets: tuple[float, ...] = ()
    output_dir: str = "results"
    mode: Literal["federated", "centralized"] = "federated"
    preset: Optional[str] = None
    baseline_dir: Optional[str] = None
    # mapeamento bruto que originou a config; os sweeps são aplicados sobre ele
    raw: dict = field(default_factory=dict, compare=False, repr=False)
    sweep: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_classes(self) -> int:
        return self.arch.n_classes

    def resolved(self) -> dict:
        data = asdict(self)
        data.pop("raw")
        data.pop("sweep")
        data["f1_average"] = "macro"
        return to_jsonable(data)

    def hash(self) -> str:
        data = self.resolved()
        data.pop("output_dir")
        return config_hash(data)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[dict]
    streams: list[list[RoundRecord]]
    output_dir: Path


# Parsing

_TOP_LEVEL = {
    "experiment_id", "mode", "preset", "dataset", "partition", "corruption", "feature",
    "arch", "fed", "n_seeds", "targets", "output_dir", "baseline_dir", "sweep",
}


def _mapping(data: Any, path: str, allowed: set[str]) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(path, "esperado um mapeamento")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "campo desconhecido")
    return data


def _coerce(value: Any, kind: type, path: str) -> Any:
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise ValueError
            return value
        if isinstance(value, bool):
            raise ValueError
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind is float:
            return float(value)
        if kind is str:
            if not isinstance(value, (str, int, float)):
                raise ValueError
            return str(value)
        if kind is tuple:
            if not isinstance(value, (list, tuple)):
                raise ValueError
            return tuple(int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(path, f"esperado {kind.__name__}, recebido {value!r}") from None
    return value


def _build(cls, data: Any, path: str, optional_types: Optional[dict[str, type]] = None, skip: tuple[str, ...] = ()):
    """Instancia uma dataclass plana a partir de um mapeamento, convertendo pelos tipos dos valores padrão."""
    optional_types = optional_types or {}
    names = {f.name for f in fields(cls)} - set(skip)
    data = _mapping(data, path, names)
    kwargs = {}
    for f in fields(cls):
        if f.name in skip or f.name not in data:
            continue
        value = data[f.name]
        if value is None:
            kwargs[f.name] = None
            continue
        kind = optional_types.get(f.name)
        if kind is None:
            default = f.default if f.default is not MISSING else None
            kind = type(default) if default is not None else float
        kwargs[f.name] = _coerce(value, kind, f"{path}.{f.name}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(path, str(exc)) from None


def _validated(obj, path: str):
    try:
        obj.validate()
    except FedSimError as exc:
        raise ConfigError(path, str(exc)) from None
    return obj


def build_config(raw: dict, default_id: str = "experiment") -> ExperimentConfig:
    """Preenche padrões, aplica o preset, valida e confere a viabilidade."""
    raw = _mapping(raw, "", _TOP_LEVEL)
    experiment_id = str(raw.get("experiment_id") or default_id)

    mode = raw.get("mode", "federated")
    if mode not in ("federated", "centralized"):
        raise ConfigError("mode", f"esperado federated ou centralized, recebido {mode!r}")

    ds_raw = dict(_mapping(raw.get("dataset"), "dataset", {f.name for f in fields(DatasetConfig)}))
    synthetic = _validated(_build(SynthCorpusSpec, ds_raw.pop("synthetic", None), "dataset.synthetic"), "dataset.synthetic")
    dataset = _build(
        DatasetConfig,
        ds_raw,
        "dataset",
        optional_types={"kind": str, "path": str, "n_classes": int, "segment_seconds": float},
        skip=("synthetic",),
    )
    dataset = replace(dataset, synthetic=synthetic)
    if dataset.kind not in ("synthetic", "manifest", "features"):
        raise ConfigError("dataset.kind", f"esperado synthetic, manifest ou features, recebido {dataset.kind!r}")
    if dataset.kind == "synthetic":
        n_classes = synthetic.n_classes
    else:
        if not dataset.path:
            raise ConfigError("dataset.path", f"obrigatório para entrada {dataset.kind}")
        if dataset.n_classes is None or dataset.n_classes < 2:
            raise ConfigError("dataset.n_classes", "obrigatório (>= 2) para entrada por manifesto ou arquivo de features")
        n_classes = dataset.n_classes
    if dataset.segment_seconds is not None:
        if not dataset.raw_audio:
            raise ConfigError("dataset.segment_seconds", "a segmentação exige áudio bruto")
        if not 0 <= dataset.segment_overlap < dataset.segment_seconds:
            raise ConfigError("dataset.segment_overlap", "é preciso 0 <= overlap < segment_seconds")

    partition = _build(PartitionConfig, raw.get("partition"), "partition")
    if partition.method not in ("by_key", "dirichlet"):
        raise ConfigError("partition.method", f"esperado by_key ou dirichlet, recebido {partition.method!r}")
    if not 0 < partition.test_fraction < 1:
        raise ConfigError("partition.test_fraction", "deve estar em (0, 1)")
    if partition.method == "dirichlet":
        _validated(DirichletSpec(partition.n_clients, partition.alpha, partition.min_per_client), "partition")

    cor_raw = _mapping(raw.get("corruption"), "corruption", {"noise", "label_errors"})
    noise = None
    if cor_raw.get("noise") is not None:
        noise_raw = _mapping(cor_raw["noise"], "corruption.noise", {"snr_db", "exact_power"})
        if "snr_db" not in noise_raw:
            raise ConfigError("corruption.noise.snr_db", "obrigatório")
        noise = NoiseConfig(
            _coerce(noise_raw["snr_db"], float, "corruption.noise.snr_db"),
            _coerce(noise_raw.get("exact_power", True), bool, "corruption.noise.exact_power"),
        )
        if not np.isfinite(noise.snr_db):
            raise ConfigError("corruption.noise.snr_db", "deve ser finito")
        if not dataset.raw_audio:
            raise ConfigError("corruption.noise", "AWGN exige áudio bruto, não features pré-calculadas")
    label_errors = None
    if cor_raw.get("label_errors") is not None:
        le_raw = _mapping(cor_raw["label_errors"], "corruption.label_errors", {"error_ratio", "error_sparsity"})
        if "error_ratio" not in le_raw:
            raise ConfigError("corruption.label_errors.error_ratio", "obrigatório")
        label_errors = LabelErrorConfig(
            _coerce(le_raw["error_ratio"], float, "corruption.label_errors.error_ratio"),
            _coerce(le_raw.get("error_sparsity", 0.0), float, "corruption.label_errors.error_sparsity"),
        )
        try:
            LabelErrorSpec(label_errors.error_ratio, label_errors.error_sparsity).validate(n_classes)
        except FedSimError as exc:
            raise ConfigError("corruption.label_errors", str(exc)) from None
    corruption = CorruptionConfig(noise, label_errors)

    feature = _validated(_build(FeatureConfig, raw.get("feature"), "feature"), "feature")

    arch_raw = dict(_mapping(raw.get("arch"), "arch", {"kind", "hidden", "channels", "gru_width"}))
    arch = _build(ModelArch, arch_raw, "arch", skip=("input_dims", "n_classes"))
    # arquivos de features precisam bater com feature.n_mels; conferido ao carregar
    arch = _validated(replace(arch, input_dims=feature.n_mels, n_classes=n_classes), "arch")

    fed_raw = dict(_mapping(raw.get("fed"), "fed", {f.name for f in fields(FedConfig)}))
    preset = raw.get("preset")
    if preset:
        chosen = lookup_preset(str(preset))
        for key, value in chosen.fed_fields().items():
            fed_raw.setdefault(key, value)
        fed_raw.setdefault("optimizer", str(preset).split("/")[1].lower())
    fed = _validated(_build(FedConfig, fed_raw, "fed", optional_types={"clients_per_round": int}), "fed")

    n_seeds = _coerce(raw.get("n_seeds", 5), int, "n_seeds")
    if n_seeds < 1:
        raise ConfigError("n_seeds", "deve ser >= 1")
    targets_raw = raw.get("targets") or []
    if not isinstance(targets_raw, list):
        raise ConfigError("targets", "esperado uma lista")
    targets = tuple(_coerce(t, float, f"targets[{i}]") for i, t in enumerate(targets_raw))
    if any(b <= a for a, b in zip(targets, targets[1:])):
        raise ConfigError("targets", "devem ser estritamente crescentes")
    if any(not 0 < t <= 1 for t in targets):
        raise ConfigError("targets", "devem estar em (0, 1]")

    sweep = raw.get("sweep") or {}
    if not isinstance(sweep, dict):
        raise ConfigError("sweep", "esperado um mapeamento de caminhos de campo com pontos para listas de valores")
    for key, values in sweep.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep.{key}", "esperada uma lista de valores não vazia")

    output_dir = str(raw.get("output_dir") or os.path.join(Config.RESULTS_DIR, experiment_id))
    baseline_dir = raw.get("baseline_dir")

    return ExperimentConfig(
        experiment_id=experiment_id,
        dataset=dataset,
        partition=partition,
        corruption=corruption,
        feature=feature,
        arch=arch,
        fed=fed,
        n_seeds=n_seeds,
        targets=targets,
        output_dir=output_dir,
        mode=mode,
        preset=str(preset) if preset else None,
        baseline_dir=str(baseline_dir) if baseline_dir else None,
        raw=copy.deepcopy(raw),
        sweep=dict(sweep),
    )


def parse_config(path: str | os.PathLike) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"{path} não existe")
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"{path}: {exc}") from None
    if raw is None:
        raw = {}
    cfg = build_config(raw, default_id=path.stem)
    # caminhos relativos do dataset partem do arquivo de config
    if cfg.dataset.path and not Path(cfg.dataset.path).is_absolute():
        cfg = replace(cfg, dataset=replace(cfg.dataset, path=str(path.resolve().parent / cfg.dataset.path)))
    return cfg


def _set_dotted(data: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        child = node.get(key)
        if child is None:
            child = node[key] = {}
        if not isinstance(child, dict):
            raise ConfigError(f"sweep.{dotted}", f"{key} não é um mapeamento")
        node = child
    node[keys[-1]] = value


def expand_sweep(cfg: ExperimentConfig) -> list[ExperimentConfig]:
    """Produto cartesiano das listas do sweep, uma config por variante na ordem declarada."""
    if not cfg.sweep:
        return [cfg]
    keys = list(cfg.sweep)
    variants = []
    for values in itertools.product(*(cfg.sweep[k] for k in keys)):
        raw = copy.deepcopy(cfg.raw)
        raw.pop("sweep", None)
        suffix = "_".join(f"{k.rsplit('.', 1)[-1]}={v}" for k, v in zip(keys, values))
        for key, value in zip(keys, values):
            _set_dotted(raw, key, value)
        raw["experiment_id"] = f"{cfg.experiment_id}-{suffix}"
        raw["output_dir"] = os.path.join(cfg.output_dir, suffix)
        variant = build_config(raw)
        if cfg.dataset.path:
            variant = replace(variant, dataset=replace(variant.dataset, path=cfg.dataset.path))
        variants.append(variant)
    return variants


# Pipeline


def _load_clips(cfg: ExperimentConfig, trial: int, cache: dict) -> list[LabeledClip]:
    ds = cfg.dataset
    if ds.kind == "synthetic":
        return synth_corpus(replace(ds.synthetic, seed=ds.synthetic.seed + trial))
    if "clips" not in cache:
        cache["clips"] = load_manifest_clips(load_manifest(ds.path))
    return cache["clips"]


def _segment(clips: list[LabeledClip], ds: DatasetConfig) -> list[LabeledClip]:
    if ds.segment_seconds is None:
        return clips
    out = []
    for item in clips:
        for seg in segment_clip(item.clip, ds.segment_seconds, ds.segment_overlap):
            out.append(LabeledClip(seg, item.label, item.speaker_id))
    return out


def build_examples(cfg: ExperimentConfig, trial: int, cache: Optional[dict] = None) -> list[tuple[np.ndarray, int, str]]:
    """(matriz de features, rótulo, chave do cliente) de um ensaio, com AWGN aplicado antes das features."""
    cache = cache if cache is not None else {}
    ds = cfg.dataset
    if ds.kind == "features":
        if "features" not in cache:
            cache["features"] = load_feature_dir(ds.path, cfg.n_classes)
        examples = cache["features"]
        dims = {m.shape[1] for m, _, _ in examples}
        if dims != {cfg.arch.input_dims}:
            raise ConfigError("feature.n_mels", f"os arquivos de features têm dimensões {sorted(dims)}, a arquitetura espera {cfg.arch.input_dims}")
        return examples
    clips = _load_clips(cfg, trial, cache)
    for item in clips:
        if not 0 <= item.label < cfg.n_classes:
            raise ConfigError("dataset.n_classes", f"rótulo {item.label} fora de [0, {cfg.n_classes})")
    noise = cfg.corruption.noise
    if noise is not None:
        clips = corrupt_clips(clips, NoiseSpec(noise.snr_db, seed=cfg.fed.master_seed + trial, exact_power=noise.exact_power))
    clips = _segment(clips, ds)
    return [(extract_mel(item.clip, cfg.feature), item.label, item.speaker_id) for item in clips]


def build_dataset(cfg: ExperimentConfig, trial: int, cache: Optional[dict] = None) -> tuple[FederatedDataset, dict]:
    """Holdout, normalização, partição e erros de rótulo de um ensaio; devolve (dataset, metadados)."""
    seed = cfg.fed.master_seed + trial
    examples = build_examples(cfg, trial, cache)
    by_key = cfg.partition.method == "by_key"
    train, test = holdout_split(examples, cfg.partition.test_fraction, by_key=by_key, seed=seed)
    train_n, test_n, stats = znormalize([m for m, _, _ in train], [m for m, _, _ in test])
    train = [(m, y, k) for m, (_, y, k) in zip(train_n, train)]
    test_set = [(m, y) for m, (_, y, _) in zip(test_n, test)]

    if by_key:
        clients = partition_by_key(train)
    else:
        spec = DirichletSpec(cfg.partition.n_clients, cfg.partition.alpha, cfg.partition.min_per_client, seed)
        clients = dirichlet_partition([(m, y) for m, y, _ in train], spec)

    meta: dict[str, Any] = {"norm_stats": stats.to_dict(), "trial_seed": seed}
    le = cfg.corruption.label_errors
    if le is not None:
        q = gen_transition_matrix(cfg.n_classes, LabelErrorSpec(le.error_ratio, le.error_sparsity, seed=seed))
        clients = apply_label_errors(clients, q, seed, cfg.n_classes)
        ratios, sparsity = q_stats(q)
        meta["transition_matrix"] = q.q.tolist()
        meta["realized_error_ratio"] = ratios.tolist()
        meta["realized_sparsity"] = sparsity

    dataset = FederatedDataset(clients, test_set, cfg.n_classes)
    meta["partition_report"] = partition_report(clients, cfg.n_classes)
    meta["label_entropy"] = label_entropy(clients, cfg.n_classes)
    meta["n_train"] = sum(len(s) for s in clients.values())
    meta["n_test"] = len(test_set)
    logger.info(
        "ensaio %d: %d clientes, %d exemplos de treino / %d de teste, entropia de rótulos %.3f",
        trial, len(clients), meta["n_train"], meta["n_test"], meta["label_entropy"],
    )
    return dataset, meta


def experiment_fields(cfg: ExperimentConfig) -> dict:
    noise, le = cfg.corruption.noise, cfg.corruption.label_errors
    return {
        "experiment_id": cfg.experiment_id,
        "optimizer": cfg.fed.optimizer if cfg.mode == "federated" else "centralized",
        "sample_ratio": cfg.fed.sample_ratio,
        "snr_db": noise.snr_db if noise else None,
        "error_ratio": le.error_ratio if le else None,
        "error_sparsity": le.error_sparsity if le else None,
        "alpha": cfg.partition.alpha if cfg.partition.method == "dirichlet" else None,
        "config_hash": cfg.hash(),
    }


def run_trial(cfg: ExperimentConfig, trial: int, out_dir: Path, cache: Optional[dict] = None) -> list[RoundRecord]:
    logger.info("%s: seed %d de %d", cfg.experiment_id, trial + 1, cfg.n_seeds)
    dataset, meta = build_dataset(cfg, trial, cache)
    fed = replace(cfg.fed, master_seed=cfg.fed.master_seed + trial)
    runner = run_federation if cfg.mode == "federated" else run_centralized
    with JsonlWriter(out_dir / f"seed_{trial}.jsonl") as sink:
        result = runner(dataset, cfg.arch, fed, on_round=sink.write)
    save_params(out_dir / f"seed_{trial}.params", result.params)
    with open(out_dir / f"seed_{trial}.meta.json", "w", encoding="utf-8") as f:
        f.write(canonical_json(meta) + "\n")
    return result.records


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    resolved = cfg.resolved()
    resolved["config_hash"] = cfg.hash()
    with open(out_dir / "config.resolved.json", "w", encoding="utf-8") as f:
        json.dump(resolved, f, indent=2, sort_keys=True)
        f.write("\n")

    logger.info("experimento %s iniciado (%d seeds, saída %s)", cfg.experiment_id, cfg.n_seeds, out_dir)
    cache: dict = {}
    streams = [run_trial(cfg, t, out_dir, cache) for t in range(cfg.n_seeds)]

    baseline = None
    if cfg.baseline_dir:
        baseline = list(load_record_dir(cfg.baseline_dir).values())
    rows = summary_rows(streams, experiment_fields(cfg), cfg.targets, baseline)
    write_summary_csv(out_dir / "summary.csv", rows)
    logger.info("experimento %s concluído", cfg.experiment_id)
    return ExperimentResult(cfg, rows, streams, out_dir)


def run_all(cfg: ExperimentConfig) -> list[ExperimentResult]:
    """Executa cada variante do sweep em sequência; um sweep também ganha um summary.csv combinado."""
    variants = expand_sweep(cfg)
    results = [run_experiment(v) for v in variants]
    if cfg.sweep:
        write_summary_csv(Path(cfg.output_dir) / "summary.csv", [row for r in results for row in r.rows])
    return results
