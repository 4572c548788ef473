"""Dense tensor algebra: storage, pairwise contraction, QR splitting.

Tensors are immutable row-major float64 arrays with optional per-axis string
labels; being immutable they are safe to share across threads.  The output
axis order of a contraction is fixed: free axes of the left operand in their
original order, then free axes of the right operand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ContractionSpec",
    "ShapeMismatchError",
    "contract",
    "qr_split",
    "norm",
]


class ShapeMismatchError(ValueError):
    """Paired contraction axes disagree in length."""


@dataclass(frozen=True)
class Tensor:
    """Immutable dense real tensor with optional axis labels."""

    array: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        arr = np.array(self.array, dtype=np.float64, order="C", copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != arr.ndim:
                raise ValueError(
                    f"got {len(labels)} axis labels for a rank-{arr.ndim} tensor"
                )
            object.__setattr__(self, "labels", labels)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def rank(self) -> int:
        return self.array.ndim

    @property
    def size(self) -> int:
        return self.array.size

    def relabel(self, labels: Sequence[str] | None) -> "Tensor":
        return Tensor(self.array, None if labels is None else tuple(labels))


@dataclass(frozen=True)
class ContractionSpec:
    """Which axes of the two operands are contracted against each other."""

    left_axes: tuple[int, ...]
    right_axes: tuple[int, ...]

    def __post_init__(self) -> None:
        left = tuple(int(a) for a in self.left_axes)
        right = tuple(int(a) for a in self.right_axes)
        object.__setattr__(self, "left_axes", left)
        object.__setattr__(self, "right_axes", right)
        if len(left) != len(right):
            raise ValueError(
                f"left_axes has {len(left)} entries, right_axes has {len(right)}"
            )
        if len(set(left)) != len(left):
            raise ValueError(f"duplicate axis in left_axes {left}")
        if len(set(right)) != len(right):
            raise ValueError(f"duplicate axis in right_axes {right}")


def _check_axes(t: Tensor, axes: Sequence[int], side: str) -> None:
    for ax in axes:
        if not 0 <= ax < t.rank:
            raise ValueError(f"{side} axis {ax} out of range for rank-{t.rank} tensor")


def contract(a: Tensor, b: Tensor, spec: ContractionSpec) -> Tensor:
    """Contract paired axes of `a` and `b`, summing products over them.

    Result axes: the free axes of `a` in order, then the free axes of `b`.
    """
    _check_axes(a, spec.left_axes, "left")
    _check_axes(b, spec.right_axes, "right")
    for la, ra in zip(spec.left_axes, spec.right_axes):
        if a.shape[la] != b.shape[ra]:
            raise ShapeMismatchError(
                f"axis {la} of left operand (size {a.shape[la]}) does not match "
                f"axis {ra} of right operand (size {b.shape[ra]})"
            )
    out = np.tensordot(a.array, b.array, axes=(spec.left_axes, spec.right_axes))
    labels = None
    if a.labels is not None and b.labels is not None:
        free_a = [a.labels[i] for i in range(a.rank) if i not in spec.left_axes]
        free_b = [b.labels[i] for i in range(b.rank) if i not in spec.right_axes]
        labels = tuple(free_a + free_b)
    return Tensor(out, labels)


def qr_split(
    t: Tensor, row_axes: Sequence[int], col_axes: Sequence[int]
) -> tuple[Tensor, Tensor]:
    """Factor `t` into an isometry over `row_axes` and a remainder.

    Returns (q, r) where q has the row axes followed by a new bond as its last
    axis, r has the new bond first followed by the column axes, and contracting
    q with r over the bond reconstructs `t`.  q is isometric over its row
    group: contracting q with itself over all row axes yields the identity on
    the bond.  Output tensors carry no axis labels.
    """
    rows = tuple(int(a) for a in row_axes)
    cols = tuple(int(a) for a in col_axes)
    if sorted(rows + cols) != list(range(t.rank)):
        raise ValueError(
            f"row axes {rows} and column axes {cols} do not partition "
            f"the axes of a rank-{t.rank} tensor"
        )
    row_shape = tuple(t.shape[a] for a in rows)
    col_shape = tuple(t.shape[a] for a in cols)
    m = int(np.prod(row_shape, dtype=np.int64)) if row_shape else 1
    n = int(np.prod(col_shape, dtype=np.int64)) if col_shape else 1
    mat = np.transpose(t.array, rows + cols).reshape(m, n)
    q, r = np.linalg.qr(mat)  # reduced: q (m, k), r (k, n), k = min(m, n)
    k = q.shape[1]
    q_t = Tensor(q.reshape(row_shape + (k,)))
    r_t = Tensor(r.reshape((k,) + col_shape))
    return q_t, r_t


def norm(t: Tensor) -> float:
    """Frobenius norm."""
    return float(np.linalg.norm(t.array))
