"""Deterministic report writers: JSON, CSV, run manifests and figures.

Report files contain no wall-clock content, so identical runs produce
byte-identical files; figures are rendered with fixed metadata for the same
reason.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from . import __version__  # noqa: E402

__all__ = [
    "sha256_file",
    "write_json",
    "write_csv",
    "build_manifest",
    "write_manifest",
    "render_sweep_figure",
    "render_qmi_figure",
    "render_loss_curve",
]

_PNG_METADATA = {"Software": f"tnjet {__version__}"}


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    lines += [",".join(str(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def build_manifest(
    subcommand: str, config: dict, seed: int | None, inputs: Sequence[str | Path]
) -> dict:
    return {
        "tool": "tnjet",
        "version": __version__,
        "subcommand": subcommand,
        "seed": seed,
        "config": config,
        "inputs": {str(p): sha256_file(p) for p in inputs},
    }


def write_manifest(out_path: str | Path, manifest: dict) -> Path:
    path = Path(str(out_path) + ".manifest.json")
    write_json(path, manifest)
    return path


def render_sweep_figure(rows, path: str | Path) -> None:
    """Accuracy against fractional bit width, one line per mode."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    styles = {"fpop": "-o", "qop": ":s"}
    modes = sorted({r.mode.value for r in rows})
    for mode in modes:
        pts = sorted((r.fb, r.accuracy) for r in rows if r.mode.value == mode)
        ax.plot(
            [p[0] for p in pts],
            [100.0 * p[1] for p in pts],
            styles.get(mode, "-"),
            label=mode,
        )
    arch = rows[0].arch.upper() if rows else ""
    ax.set_xlabel("fractional bits")
    ax.set_ylabel("accuracy [%]")
    ax.set_title(f"{arch} post-training quantization sweep")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)


def render_qmi_figure(values, labels, path: str | Path) -> None:
    """Heatmap of the pairwise mutual-information matrix."""
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    im = ax.imshow(values, cmap="viridis", origin="lower")
    fig.colorbar(im, ax=ax, label="mutual information [nats]")
    n = len(labels)
    if n <= 32:
        ax.set_xticks(range(n), labels, rotation=90, fontsize=6)
        ax.set_yticks(range(n), labels, fontsize=6)
    ax.set_title("pairwise site mutual information")
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)


def render_loss_curve(curve: Sequence[float], path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(range(1, len(curve) + 1), curve, "-o")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)
