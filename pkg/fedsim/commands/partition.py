from __future__ import annotations

import click

from ..audio_io import load_manifest
from ..errors import ConfigError
from ..partition import DirichletSpec, dirichlet_partition, label_entropy, partition_by_key, partition_report
from ..reports import write_csv


@click.command("partition")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["by_key", "dirichlet"]), default="by_key", show_default=True)
@click.option("--n-classes", type=int, required=True)
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--n-clients", type=int, default=50, show_default=True)
@click.option("--min-per-client", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None, help="Grava aqui o CSV por cliente.")
def partition_cmd(manifest, method, n_classes, alpha, n_clients, min_per_client, seed, out_path) -> None:
    """Divide os clipes do MANIFEST entre clientes e mostra a contagem de classes por cliente."""
    entries = load_manifest(manifest)
    for e in entries:
        if not 0 <= e.label < n_classes:
            raise ConfigError("--n-classes", f"rótulo {e.label} do manifesto fora de [0, {n_classes})")
    if method == "by_key":
        clients = partition_by_key([(e.path, e.label, e.client_key) for e in entries])
    else:
        spec = DirichletSpec(n_clients, alpha, min_per_client, seed)
        clients = dirichlet_partition([(e.path, e.label) for e in entries], spec)

    rows = partition_report(clients, n_classes)
    if out_path:
        write_csv(out_path, rows)
    else:
        for row in rows:
            click.echo(",".join(str(v) for v in row.values()))
    click.echo(f"{len(clients)} clientes, entropia média de rótulos {label_entropy(clients, n_classes):.4f}", err=True)
