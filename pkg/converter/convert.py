#!/usr/bin/env python3
"""Convert the public hls4ml jet dataset (HDF5) into JTN1 binary files.

Standalone by design: the only contract shared with the consumer is the JTN1
byte format.  Source files are discovered under --src; filenames containing
"train" go to the training split, "val"/"test" to the test split, and files
without a marker are split deterministically by jet index.

Each HDF5 file is expected to follow the public layout: a
``jetConstituentList`` array of shape (jets, max_particles, n_features)
zero-padded along the particle axis, a ``jets`` table whose one-hot columns
``j_g, j_q, j_w, j_z, j_t`` carry the class, and the two name tables
``particleFeatureNames`` / ``jetFeatureNames``.  Particle columns are
permuted into a fixed canonical order (pt at column 5, relative energy at 4,
angular distance at 13); the resolved source-name mapping is written to the
JSON sidecar report so the conversion is auditable.

Usage:
    convert.py --src <dir> --out-train train.jtn1 --out-test test.jtn1 \
               --report report.json
"""

from __future__ import annotations

import argparse
import json
import struct
import sys
from pathlib import Path

import h5py
import numpy as np

MAGIC = b"JTN1"
N_FEATURES = 16
LABEL_NAMES = ("g", "q", "W", "Z", "t")
DEFAULT_TEST_FRACTION = 260.0 / 880.0  # reference split of the public dataset

# canonical JTN1 particle-feature order; candidates are matched against the
# source's particleFeatureNames (case-insensitive, "j1_" prefix optional)
CANONICAL_COLUMNS = [
    ("px", ("px",)),
    ("py", ("py",)),
    ("pz", ("pz",)),
    ("energy", ("e", "energy")),
    ("e_rel", ("erel", "e_rel")),
    ("pt", ("pt", "et")),
    ("pt_rel", ("ptrel", "etrel", "pt_rel")),
    ("eta", ("eta",)),
    ("eta_rel", ("etarel", "eta_rel")),
    ("eta_rot", ("etarot", "eta_rot")),
    ("phi", ("phi",)),
    ("phi_rel", ("phirel", "phi_rel")),
    ("phi_rot", ("phirot", "phi_rot")),
    ("delta_r", ("deltar", "delta_r", "dr")),
    ("cos_theta", ("costheta", "cos_theta")),
    ("cos_theta_rel", ("costhetarel", "cos_theta_rel")),
]
REQUIRED = ("pt", "e_rel", "delta_r")
PT_COLUMN = 5


class ConversionError(RuntimeError):
    pass


def _decode(names) -> list[str]:
    return [n.decode() if isinstance(n, bytes) else str(n) for n in np.asarray(names)]


def _normalize(name: str) -> str:
    name = name.lower()
    if name.startswith("j1_"):
        name = name[3:]
    return name.replace("-", "_")


def resolve_columns(source_names: list[str]) -> dict[str, int]:
    """Map canonical column names to source column indices.

    Name-matched columns take their canonical slot; whatever is left fills
    the remaining slots in source order.  Missing required columns abort.
    """
    normalized = [_normalize(n) for n in source_names]
    mapping: dict[str, int] = {}
    used: set[int] = set()
    for canon, candidates in CANONICAL_COLUMNS:
        for cand in candidates:
            if cand in normalized and normalized.index(cand) not in used:
                idx = normalized.index(cand)
                mapping[canon] = idx
                used.add(idx)
                break
    missing = [name for name in REQUIRED if name not in mapping]
    if missing:
        raise ConversionError(
            f"source is missing required columns {missing}; "
            f"available columns: {source_names}"
        )
    leftovers = [i for i in range(len(source_names)) if i not in used]
    for canon, _ in CANONICAL_COLUMNS:
        if canon not in mapping:
            if not leftovers:
                raise ConversionError(
                    f"cannot fill canonical column {canon!r}: source has only "
                    f"{len(source_names)} particle features"
                )
            mapping[canon] = leftovers.pop(0)
    return mapping


def resolve_labels(jet_names: list[str]) -> dict[str, int]:
    normalized = [_normalize(n) for n in jet_names]
    columns = {}
    for label in LABEL_NAMES:
        key = f"j_{label.lower()}"
        if key not in normalized:
            raise ConversionError(
                f"one-hot label column {key!r} not found; "
                f"available columns: {jet_names}"
            )
        columns[label] = normalized.index(key)
    return columns


class Jtn1Writer:
    def __init__(self, path: Path, max_constituents: int):
        self.path = path
        self.max_constituents = max_constituents
        self.count = 0
        self.label_counts = [0] * len(LABEL_NAMES)
        self._fh = open(path, "wb")
        self._fh.write(struct.pack("<4sIHH", MAGIC, 0, max_constituents, N_FEATURES))

    def add(self, label: int, rows: np.ndarray) -> None:
        rows = np.ascontiguousarray(rows, dtype="<f4")
        self._fh.write(struct.pack("<BH", label, rows.shape[0]))
        self._fh.write(rows.tobytes())
        self.count += 1
        self.label_counts[label] += 1

    def close(self) -> None:
        self._fh.seek(4)
        self._fh.write(struct.pack("<I", self.count))
        self._fh.close()


def discover_sources(src: Path) -> list[tuple[Path, str]]:
    """(path, split) pairs; split is 'train', 'test' or '' (unrouted)."""
    files = sorted(
        p for p in src.rglob("*") if p.suffix.lower() in (".h5", ".hdf5")
    )
    routed = []
    for path in files:
        rel = str(path.relative_to(src)).lower()
        if "train" in rel:
            routed.append((path, "train"))
        elif "val" in rel or "test" in rel:
            routed.append((path, "test"))
        else:
            routed.append((path, ""))
    return routed


def convert(
    src: Path,
    out_train: Path,
    out_test: Path,
    report_path: Path,
    test_fraction: float = DEFAULT_TEST_FRACTION,
) -> dict:
    sources = discover_sources(src)
    column_map: dict[str, int] | None = None
    label_map: dict[str, int] | None = None
    source_names: list[str] = []
    max_particles = 0

    for path, _ in sources:
        with h5py.File(path, "r") as f:
            names = _decode(f["particleFeatureNames"][:])
            resolved = resolve_columns(names)
            if column_map is None:
                column_map, source_names = resolved, names
            elif resolved != column_map:
                raise ConversionError(f"{path} has a different column layout")
            max_particles = max(max_particles, f["jetConstituentList"].shape[1])

    writers = {
        "train": Jtn1Writer(out_train, max_particles),
        "test": Jtn1Writer(out_test, max_particles),
    }
    label_order = {LABEL_NAMES.index(k): k for k in LABEL_NAMES}
    unrouted_index = 0
    try:
        for path, split in sources:
            with h5py.File(path, "r") as f:
                constituents = np.asarray(f["jetConstituentList"], dtype=np.float32)
                jet_names = _decode(f["jetFeatureNames"][:])
                if label_map is None:
                    label_map = resolve_labels(jet_names)
                onehot_cols = [label_map[name] for name in LABEL_NAMES]
                onehot = np.asarray(f["jets"])[:, onehot_cols]
                labels = np.argmax(onehot, axis=1)
                perm = [column_map[c] for c, _ in CANONICAL_COLUMNS]
                for j in range(constituents.shape[0]):
                    rows = constituents[j][:, perm]
                    real = rows[np.any(rows != 0.0, axis=1)]
                    order = np.argsort(-real[:, PT_COLUMN], kind="stable")
                    if split:
                        target = split
                    else:
                        frac = (unrouted_index % 1000) / 1000.0
                        target = "test" if frac < test_fraction else "train"
                        unrouted_index += 1
                    writers[target].add(int(labels[j]), real[order])
    finally:
        for w in writers.values():
            w.close()

    report = {
        "jets_written": {
            "train": writers["train"].count,
            "test": writers["test"].count,
        },
        "label_mapping": {name: i for i, name in enumerate(LABEL_NAMES)},
        "label_counts": {
            split: {
                label_order[i]: writers[split].label_counts[i]
                for i in range(len(LABEL_NAMES))
            }
            for split in ("train", "test")
        },
        "feature_columns": {
            canon: {"index": i, "source": source_names[column_map[canon]]
                    if source_names else None}
            for i, (canon, _) in enumerate(CANONICAL_COLUMNS)
        } if column_map else {},
        "source_files": [str(p) for p, _ in sources],
        "max_constituents": max_particles,
    }
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--src", required=True, type=Path)
    parser.add_argument("--out-train", required=True, type=Path)
    parser.add_argument("--out-test", required=True, type=Path)
    parser.add_argument("--report", required=True, type=Path)
    parser.add_argument("--test-fraction", type=float, default=DEFAULT_TEST_FRACTION,
                        help="split for files without train/val markers")
    args = parser.parse_args(argv)
    try:
        report = convert(
            args.src, args.out_train, args.out_test, args.report, args.test_fraction
        )
    except (ConversionError, OSError, KeyError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    print(json.dumps(report["jets_written"]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
