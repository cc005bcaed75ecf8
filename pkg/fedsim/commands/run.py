from __future__ import annotations

import os
from dataclasses import replace

import click

from ..metrics import MetricSummary, RoundToTarget
from ..runner import parse_config, run_all


@click.command("run")
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--workers", type=int, default=None, help="Substitui FEDAUDIO_SIM_WORKERS nesta execução.")
@click.option("--output-dir", type=click.Path(file_okay=False), default=None, help="Substitui o output_dir da configuração.")
def run_cmd(config_path: str, workers: int | None, output_dir: str | None) -> None:
    """Executa o experimento (e cada variante do sweep) descrito em CONFIG_PATH."""
    if workers is not None:
        if workers < 1:
            raise click.BadParameter("deve ser >= 1", param_hint="--workers")
        os.environ["FEDAUDIO_SIM_WORKERS"] = str(workers)
    cfg = parse_config(config_path)
    if output_dir:
        cfg = replace(cfg, output_dir=output_dir, raw=dict(cfg.raw, output_dir=output_dir))

    for result in run_all(cfg):
        horizon = len(result.streams[0])
        for row in result.rows:
            line = f"{result.config.experiment_id} {row['metric_name']}: "
            line += MetricSummary(row["mean"], row["std"], row["n"]).render()
            if row["target"] is not None:
                rtt = RoundToTarget(row["target"], row["rounds_to_target"], row["baseline_rounds"], row["ratio"], horizon)
                line += f" | rodadas até {row['target']}: {rtt.render()}"
            click.echo(line)
    click.echo(f"resultados gravados em {cfg.output_dir}")
