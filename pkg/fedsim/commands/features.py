from __future__ import annotations

import click

from ..audio_io import load_wav, write_feature_file
from ..features import FeatureConfig, extract_mel


@click.command("features")
@click.argument("wav", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--label", type=int, required=True)
@click.option("--client", type=str, required=True, help="Chave do cliente gravada no cabeçalho.")
@click.option("--frame-length", type=int, default=1024, show_default=True)
@click.option("--hop-ms", type=float, default=10.0, show_default=True)
@click.option("--n-mels", type=int, default=128, show_default=True)
def features_cmd(wav, out_path, label, client, frame_length, hop_ms, n_mels) -> None:
    """Calcula a matriz log-mel do WAV e grava como arquivo de features."""
    cfg = FeatureConfig(frame_length=frame_length, hop_ms=hop_ms, n_mels=n_mels)
    matrix = extract_mel(load_wav(wav), cfg)
    write_feature_file(out_path, matrix, label, client)
    click.echo(f"{out_path}: {matrix.shape[0]} quadros x {matrix.shape[1]} mels")
