from __future__ import annotations

import json
from pathlib import Path

import click

from ..metrics import MetricSummary, RoundToTarget, format_delta, metric_value, summarize
from ..reports import export_xlsx, load_record_dir, summary_rows, write_summary_csv


def _experiment_fields(directory: Path) -> dict:
    """Lê as colunas de identificação do resumo em config.resolved.json, quando a execução deixou um."""
    path = directory / "config.resolved.json"
    if not path.is_file():
        return {"experiment_id": directory.name}
    resolved = json.loads(path.read_text(encoding="utf-8"))
    corruption = resolved.get("corruption") or {}
    noise = corruption.get("noise") or {}
    label_errors = corruption.get("label_errors") or {}
    partition = resolved.get("partition") or {}
    fed = resolved.get("fed") or {}
    return {
        "experiment_id": resolved.get("experiment_id", directory.name),
        "optimizer": fed.get("optimizer") if resolved.get("mode", "federated") == "federated" else "centralized",
        "sample_ratio": fed.get("sample_ratio"),
        "snr_db": noise.get("snr_db"),
        "error_ratio": label_errors.get("error_ratio"),
        "error_sparsity": label_errors.get("error_sparsity"),
        "alpha": partition.get("alpha") if partition.get("method") == "dirichlet" else None,
        "config_hash": resolved.get("config_hash"),
    }


@click.command("report")
@click.argument("jsonl_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--target", "targets", type=float, multiple=True, help="Valor-alvo da métrica; pode repetir.")
@click.option("--baseline", "baseline_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--metric", type=click.Choice(["accuracy", "f1"]), default=None, help="Restringe a uma métrica.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None, help="Grava aqui o CSV de resumo.")
@click.option("--xlsx", "xlsx_path", type=click.Path(dir_okay=False), default=None, help="Exporta também uma planilha.")
def report_cmd(jsonl_dir, targets, baseline_dir, metric, out_path, xlsx_path) -> None:
    """Resume os arquivos seed_<t>.jsonl de JSONL_DIR, opcionalmente contra uma base limpa."""
    targets = sorted(set(targets))
    streams = list(load_record_dir(jsonl_dir).values())
    baseline = list(load_record_dir(baseline_dir).values()) if baseline_dir else None
    metrics = (metric,) if metric else ("accuracy", "f1")
    rows = summary_rows(streams, _experiment_fields(Path(jsonl_dir)), targets, baseline, metrics)

    horizon = len(streams[0])
    for row in rows:
        summary = MetricSummary(row["mean"], row["std"], row["n"])
        line = f"{row['metric_name']}: {summary.render()}"
        if baseline:
            base = summarize([metric_value(s[-1], row["metric_name"]) for s in baseline])
            line += f" | delta {format_delta(base, summary)}"
        if row["target"] is not None:
            rtt = RoundToTarget(row["target"], row["rounds_to_target"], row["baseline_rounds"], row["ratio"], horizon)
            line += f" | rodadas até {row['target']}: {rtt.render()}"
        click.echo(line)

    if out_path:
        write_summary_csv(out_path, rows)
    if xlsx_path:
        export_xlsx(xlsx_path, rows)
