"""Model checkpoint files.

Both formats are little-endian: a magic tag, a u32 format version, the
topology header, then every tensor's float64 payload in declared order
(site order for chains, layer-major for trees).  Round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .mps import MpsModel, build_mps
from .ttn import TtnModel, build_ttn

__all__ = ["CheckpointError", "save_model", "load_model"]

MPS_MAGIC = b"MPSC"
TTN_MAGIC = b"TTNC"
_VERSION = 1
_MPS_HEADER = struct.Struct("<4sIIIIIIQ")  # magic, ver, n, d, cap, classes, label, seed
_TTN_HEADER = struct.Struct("<4sIIIIIQ")  # magic, ver, n, d, chi, classes, seed


class CheckpointError(ValueError):
    pass


def save_model(model, path: str | Path) -> None:
    if isinstance(model, MpsModel):
        header = _MPS_HEADER.pack(
            MPS_MAGIC,
            _VERSION,
            model.n_sites,
            model.phys_dim,
            model.bond_cap,
            model.n_classes,
            model.label_site,
            model.seed % 2**64,
        )
    elif isinstance(model, TtnModel):
        header = _TTN_HEADER.pack(
            TTN_MAGIC,
            _VERSION,
            model.n_leaves,
            model.phys_dim,
            model.chi,
            model.n_classes,
            model.seed % 2**64,
        )
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")
    chunks = [header]
    chunks += [np.ascontiguousarray(t.array, dtype="<f8").tobytes()
               for t in model.tensors]
    Path(path).write_bytes(b"".join(chunks))


def _read_tensors(data: bytes, offset: int, shapes, path) -> list[np.ndarray]:
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = 8 * count
        if offset + nbytes > len(data):
            raise CheckpointError(f"truncated tensor payload in {path}")
        arrays.append(
            np.frombuffer(data, dtype="<f8", count=count, offset=offset)
            .reshape(shape)
            .astype(np.float64)
        )
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"{len(data) - offset} trailing bytes in {path}")
    return arrays


def load_model(path: str | Path) -> MpsModel | TtnModel:
    data = Path(path).read_bytes()
    if len(data) >= 4 and data[:4] == MPS_MAGIC:
        if len(data) < _MPS_HEADER.size:
            raise CheckpointError(f"truncated chain header in {path}")
        _, version, n, d, cap, classes, label, seed = _MPS_HEADER.unpack_from(data)
        if version != _VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        skeleton = build_mps(n, d, cap, classes, label, seed=0)
        arrays = _read_tensors(
            data, _MPS_HEADER.size, [t.shape for t in skeleton.tensors], path
        )
        model = skeleton.with_arrays(arrays)
        return MpsModel(
            n_sites=n,
            phys_dim=d,
            bond_cap=cap,
            n_classes=classes,
            label_site=label,
            tensors=model.tensors,
            seed=seed,
        )
    if len(data) >= 4 and data[:4] == TTN_MAGIC:
        if len(data) < _TTN_HEADER.size:
            raise CheckpointError(f"truncated tree header in {path}")
        _, version, n, d, chi, classes, seed = _TTN_HEADER.unpack_from(data)
        if version != _VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        skeleton = build_ttn(n, d, chi, classes, seed=0)
        arrays = _read_tensors(
            data, _TTN_HEADER.size, [t.shape for t in skeleton.tensors], path
        )
        model = skeleton.with_arrays(arrays)
        return TtnModel(
            n_leaves=n,
            phys_dim=d,
            chi=chi,
            n_classes=classes,
            layers=model.layers,
            seed=seed,
        )
    raise CheckpointError(f"unrecognized checkpoint magic in {path}")
