"""Jet dataset ingestion: JTN1 binary I/O, interquantile scaling, batching.

JTN1 layout (little-endian): magic ``4A 54 4E 31``, u32 jet count, u16 max
constituent count, u16 feature count (16), then per jet a u8 class label, a
u16 actual constituent count and that many rows of float32 features.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "RAW_FEATURE_COUNT",
    "N_CLASSES",
    "CLASS_NAMES",
    "FeatureIndices",
    "DEFAULT_FEATURES",
    "JetRecord",
    "JetBatch",
    "ScalerParams",
    "Jtn1Error",
    "MalformedHeaderError",
    "TruncatedPayloadError",
    "LabelRangeError",
    "ConstantFeatureError",
    "load_dataset",
    "write_dataset",
    "fit_scaler",
    "make_batch",
]

MAGIC = b"JTN1"
RAW_FEATURE_COUNT = 16
N_CLASSES = 5
CLASS_NAMES = ("g", "q", "W", "Z", "t")


@dataclass(frozen=True)
class FeatureIndices:
    """Columns of the 16 raw constituent features used by the models.

    The raw column order is fixed at dataset-conversion time and recorded in
    the converter's sidecar report; these defaults match its canonical layout.
    """

    pt: int = 5
    e_rel: int = 4
    delta_r: int = 13

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.pt, self.e_rel, self.delta_r)


DEFAULT_FEATURES = FeatureIndices()


class Jtn1Error(ValueError):
    """Invalid JTN1 payload; `offset` is the failing byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class MalformedHeaderError(Jtn1Error):
    pass


class TruncatedPayloadError(Jtn1Error):
    pass


class LabelRangeError(Jtn1Error):
    pass


class ConstantFeatureError(ValueError):
    pass


@dataclass
class JetRecord:
    """One jet: all raw constituent features plus its class label."""

    constituents: np.ndarray  # (n_actual, 16) float32, sorted by descending pt
    label: int


@dataclass(frozen=True)
class JetBatch:
    """Fixed-size model input: (B, N, 3) scaled features and class labels."""

    features: np.ndarray  # float64, padded rows exactly zero
    labels: np.ndarray  # (B,) int64

    @property
    def n_constituents(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature 5th/95th percentiles fitted on the training split."""

    q5: np.ndarray
    q95: np.ndarray
    feature_indices: FeatureIndices = DEFAULT_FEATURES

    def to_dict(self) -> dict:
        return {
            "q5": [float(v) for v in self.q5],
            "q95": [float(v) for v in self.q95],
            "feature_indices": {
                "pt": self.feature_indices.pt,
                "e_rel": self.feature_indices.e_rel,
                "delta_r": self.feature_indices.delta_r,
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ScalerParams":
        return cls(
            q5=np.asarray(payload["q5"], dtype=np.float64),
            q95=np.asarray(payload["q95"], dtype=np.float64),
            feature_indices=FeatureIndices(**payload["feature_indices"]),
        )


_HEADER = struct.Struct("<4sIHH")
_JET_HEAD = struct.Struct("<BH")


def load_dataset(
    path: str | Path, features: FeatureIndices = DEFAULT_FEATURES
) -> list[JetRecord]:
    """Parse a JTN1 file into jet records, sorted by descending pt per jet."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise MalformedHeaderError("file shorter than the JTN1 header", 0)
    magic, count, max_constituents, n_features = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise MalformedHeaderError(f"bad magic {magic!r}", 0)
    if n_features != RAW_FEATURE_COUNT:
        raise MalformedHeaderError(
            f"feature count {n_features} != {RAW_FEATURE_COUNT}", 10
        )
    offset = _HEADER.size
    records: list[JetRecord] = []
    for _ in range(count):
        if offset + _JET_HEAD.size > len(data):
            raise TruncatedPayloadError("jet header past end of file", offset)
        label, n_actual = _JET_HEAD.unpack_from(data, offset)
        if label >= N_CLASSES:
            raise LabelRangeError(f"label {label} out of range", offset)
        if n_actual > max_constituents:
            raise Jtn1Error(
                f"constituent count {n_actual} exceeds header maximum "
                f"{max_constituents}",
                offset + 1,
            )
        offset += _JET_HEAD.size
        nbytes = 4 * n_actual * RAW_FEATURE_COUNT
        if offset + nbytes > len(data):
            raise TruncatedPayloadError("constituent rows past end of file", offset)
        rows = np.frombuffer(data, dtype="<f4", count=n_actual * RAW_FEATURE_COUNT,
                             offset=offset).reshape(n_actual, RAW_FEATURE_COUNT)
        offset += nbytes
        order = np.argsort(-rows[:, features.pt], kind="stable")
        records.append(JetRecord(rows[order].copy(), int(label)))
    if offset != len(data):
        raise Jtn1Error(f"{len(data) - offset} trailing bytes after last jet", offset)
    return records


def write_dataset(
    path: str | Path, records: Sequence[JetRecord], max_constituents: int | None = None
) -> None:
    """Serialize jet records to a JTN1 file."""
    if max_constituents is None:
        max_constituents = max((len(r.constituents) for r in records), default=0)
    chunks = [_HEADER.pack(MAGIC, len(records), max_constituents, RAW_FEATURE_COUNT)]
    for r in records:
        rows = np.ascontiguousarray(r.constituents, dtype="<f4")
        if rows.ndim != 2 or rows.shape[1] != RAW_FEATURE_COUNT:
            raise ValueError(f"constituent matrix has shape {rows.shape}")
        if not 0 <= r.label < N_CLASSES:
            raise ValueError(f"label {r.label} out of range")
        chunks.append(_JET_HEAD.pack(r.label, rows.shape[0]))
        chunks.append(rows.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def fit_scaler(
    train: Sequence[JetRecord], features: FeatureIndices = DEFAULT_FEATURES
) -> ScalerParams:
    """Fit 5th/95th percentiles of each selected feature over all real
    constituents of the training split (linear interpolation between order
    statistics)."""
    if not train:
        raise ValueError("cannot fit a scaler on an empty training split")
    cols = features.as_tuple()
    stacked = np.concatenate(
        [r.constituents[:, cols].astype(np.float64) for r in train], axis=0
    )
    if stacked.shape[0] == 0:
        raise ValueError("training split has no constituents")
    q5 = np.percentile(stacked, 5.0, axis=0)
    q95 = np.percentile(stacked, 95.0, axis=0)
    names = ("pt", "e_rel", "delta_r")
    for i, name in enumerate(names):
        if not q95[i] > q5[i]:
            raise ConstantFeatureError(
                f"feature {name} (raw column {cols[i]}) is constant: "
                f"q5 == q95 == {q5[i]}"
            )
    return ScalerParams(q5=q5, q95=q95, feature_indices=features)


def make_batch(records: Sequence[JetRecord], scaler: ScalerParams, n: int) -> JetBatch:
    """Scale, truncate to the `n` highest-pt constituents and zero-pad.

    Padded rows bypass scaling entirely and stay exactly zero.
    """
    if n < 1 or n & (n - 1):
        raise ValueError(f"constituent count {n} is not a power of two")
    cols = scaler.feature_indices.as_tuple()
    span = scaler.q95 - scaler.q5
    features = np.zeros((len(records), n, 3), dtype=np.float64)
    labels = np.empty(len(records), dtype=np.int64)
    for b, rec in enumerate(records):
        k = min(n, rec.constituents.shape[0])
        if k:
            raw = rec.constituents[:k, cols].astype(np.float64)
            features[b, :k] = (raw - scaler.q5) / span
        labels[b] = rec.label
    features.setflags(write=False)
    labels.setflags(write=False)
    return JetBatch(features=features, labels=labels)
