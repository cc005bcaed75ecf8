"""Arquivos de resultado: JSON lines por rodada, o CSV de resumo e a planilha exportada."""
from __future__ import annotations

import csv
import json
import logging
import os
import re
from pathlib import Path
from typing import Iterable, Optional, Sequence

import xlsxwriter

from .errors import FedSimError
from .fl_core import RoundRecord
from .metrics import curve_to_target, mean_curve, metric_value, summarize
from .utils import canonical_json

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = [
    "experiment_id",
    "optimizer",
    "sample_ratio",
    "snr_db",
    "error_ratio",
    "error_sparsity",
    "alpha",
    "metric_name",
    "mean",
    "std",
    "n",
    "rounds_to_target",
    "baseline_rounds",
    "ratio",
    "target",
    "config_hash",
]

_SEED_FILE = re.compile(r"^seed_(\d+)\.jsonl$")


class JsonlWriter:
    """Um objeto JSON por linha, com flush depois de cada escrita."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self._fh = None

    def __enter__(self) -> "JsonlWriter":
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")
        return self

    def write(self, record: RoundRecord | dict) -> None:
        data = record.to_dict() if isinstance(record, RoundRecord) else record
        self._fh.write(canonical_json(data) + "\n")
        self._fh.flush()

    def __exit__(self, *exc) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def read_jsonl(path: str | os.PathLike) -> list[RoundRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(RoundRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise FedSimError(f"{path}:{lineno}: registro de rodada inválido ({exc})") from exc
    return records


def load_record_dir(directory: str | os.PathLike) -> dict[int, list[RoundRecord]]:
    """{índice da seed: registros} para cada seed_<t>.jsonl do diretório."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FedSimError(f"{directory} não é um diretório")
    streams = {}
    for entry in sorted(directory.iterdir()):
        match = _SEED_FILE.match(entry.name)
        if match:
            streams[int(match.group(1))] = read_jsonl(entry)
    if not streams:
        raise FedSimError(f"nenhum arquivo seed_<t>.jsonl em {directory}")
    return dict(sorted(streams.items()))


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def summary_rows(
    streams: Sequence[Sequence[RoundRecord]],
    experiment: dict,
    targets: Sequence[float] = (),
    baseline_streams: Optional[Sequence[Sequence[RoundRecord]]] = None,
    metrics: Iterable[str] = ("accuracy", "f1"),
) -> list[dict]:
    """Uma linha por (métrica, alvo); uma única linha por métrica quando não há alvo.

    mean/std/n resumem a métrica da última rodada entre as seeds. As rodadas até
    o alvo, inclusive as da base, são lidas da curva média entre seeds.
    """
    rows = []
    for metric in metrics:
        finals = summarize([metric_value(stream[-1], metric) for stream in streams])
        curve = mean_curve(streams, metric)
        base_curve = mean_curve(baseline_streams, metric) if baseline_streams else None
        base = {key: experiment.get(key) for key in SUMMARY_COLUMNS[:7]}
        base.update(metric_name=metric, mean=finals.mean, std=finals.std, n=finals.n)
        base["config_hash"] = experiment.get("config_hash")
        for target in targets or [None]:
            row = dict(base, target=target, rounds_to_target=None, baseline_rounds=None, ratio=None)
            if target is not None:
                baseline_rounds = None
                if base_curve is not None:
                    baseline_rounds = curve_to_target(base_curve, target).rounds
                result = curve_to_target(curve, target, baseline_rounds)
                if not result.reached:
                    logger.warning("%s nunca atingiu %s >= %s em %d rodadas", experiment.get("experiment_id"), metric, target, len(curve))
                row.update(rounds_to_target=result.rounds, baseline_rounds=baseline_rounds, ratio=result.ratio)
            rows.append(row)
    return rows


def write_csv(path: str | os.PathLike, rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> None:
    columns = list(columns or (rows[0].keys() if rows else []))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: _cell(row.get(c)) for c in columns})


def write_summary_csv(path: str | os.PathLike, rows: Sequence[dict]) -> None:
    write_csv(path, rows, SUMMARY_COLUMNS)


def export_xlsx(path: str | os.PathLike, rows: Sequence[dict], sheet: str = "summary") -> None:
    workbook = xlsxwriter.Workbook(str(path))
    worksheet = workbook.add_worksheet(sheet)
    bold = workbook.add_format({"bold": True})
    for col, header in enumerate(SUMMARY_COLUMNS):
        worksheet.write(0, col, header, bold)
    for row_idx, row in enumerate(rows, start=1):
        worksheet.write_row(row_idx, 0, ["" if row.get(c) is None else row.get(c) for c in SUMMARY_COLUMNS])
    worksheet.freeze_panes(1, 0)
    workbook.close()
