from __future__ import annotations

import os
from pathlib import Path

import click

from ..audio_io import ManifestEntry, load_manifest, load_wav, write_manifest, write_wav
from ..corruption import LabelErrorSpec, NoiseSpec, apply_label_errors, gen_transition_matrix, inject_awgn, measure_snr, q_stats
from ..errors import ConfigError, InfeasibleSpec
from ..reports import write_csv
from ..utils import make_rng


@click.command("corrupt")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.argument("out_dir", type=click.Path(file_okay=False))
@click.option("--snr-db", type=float, default=None, help="Adiciona ruído branco com esta SNR a cada clipe.")
@click.option("--error-ratio", type=float, default=None, help="Probabilidade de troca de rótulo por classe.")
@click.option("--error-sparsity", type=float, default=0.0, show_default=True)
@click.option("--n-classes", type=int, default=None, help="Número de classes (padrão: maior rótulo + 1).")
@click.option("--seed", type=int, default=0, show_default=True)
def corrupt_cmd(manifest, out_dir, snr_db, error_ratio, error_sparsity, n_classes, seed) -> None:
    """Grava uma cópia corrompida do MANIFEST em OUT_DIR.

    Os clipes com ruído vão para OUT_DIR/audio, o manifesto com os novos
    rótulos para OUT_DIR/manifest.tsv e a matriz de transição para OUT_DIR/q.csv.
    """
    if snr_db is None and error_ratio is None:
        raise click.UsageError("nada a fazer: informe --snr-db e/ou --error-ratio")
    entries = load_manifest(manifest)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = n_classes if n_classes is not None else max(e.label for e in entries) + 1

    if snr_db is not None:
        audio_dir = out / "audio"
        audio_dir.mkdir(exist_ok=True)
        spec = NoiseSpec(snr_db, seed=seed)
        noisy_entries = []
        measured = []
        for i, e in enumerate(entries):
            clean = load_wav(e.path)
            noisy = inject_awgn(clean, spec, make_rng(seed, "awgn", i))
            measured.append(measure_snr(clean, noisy))
            target = audio_dir / f"{i:06d}_{os.path.basename(e.path)}"
            write_wav(target, noisy)
            noisy_entries.append(ManifestEntry(str(target), e.label, e.client_key))
        entries = noisy_entries
        click.echo(f"{len(entries)} clipes a {snr_db} dB (média medida {sum(measured) / len(measured):.3f} dB)")

    if error_ratio is not None:
        try:
            q = gen_transition_matrix(k, LabelErrorSpec(error_ratio, error_sparsity, seed=seed))
        except InfeasibleSpec as exc:
            raise ConfigError("--error-sparsity", str(exc)) from None
        clients: dict[str, list] = {}
        for e in entries:
            clients.setdefault(e.client_key, []).append((e.path, e.label))
        corrupted = apply_label_errors(clients, q, seed, k)
        flips = sum(a[1] != b[1] for key in clients for a, b in zip(clients[key], corrupted[key]))
        entries = [ManifestEntry(path, label, key) for key in sorted(corrupted) for path, label in corrupted[key]]
        write_csv(out / "q.csv", [{f"to_{j}": q.q[i, j] for j in range(k)} for i in range(k)])
        _, sparsity = q_stats(q)
        click.echo(f"{flips} de {len(entries)} rótulos alterados, esparsidade obtida {sparsity:.3f}")

    write_manifest(out / "manifest.tsv", entries)
