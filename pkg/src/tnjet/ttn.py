"""Tree-tensor-network classifier over a complete binary tree.

Layer 0 holds the root, layer L-1 the leaves (L = log2(N)).  Node (l, j)
carries axes (left child, right child, parent); the root's parent axis is the
class axis.  The link between layers l-1 and l has dimension
min(d^(2^(L-l)), chi), i.e. it is capped both by the maximum bond dimension
and by the dimension of the physical space below it; leaf children are the
physical inputs themselves.

Inference contracts layer by layer from the leaves upward; contractions
within a layer are independent of each other.  Class probabilities are the
squared, normalized entries of the root's output vector.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .embedding import EmbeddedJet
from .tensor import Tensor

__all__ = [
    "TtnModel",
    "link_dims",
    "build_ttn",
    "param_count",
    "forward_ttn",
    "forward_ttn_batch",
    "probabilities_ttn",
    "probabilities_batch",
    "overlap_grad_from_probability_grad",
    "grad_ttn",
    "grad_ttn_batch",
]

NodeHook = Callable[[np.ndarray, int], np.ndarray]

NODE_LABELS = ("left_child", "right_child", "parent")
ROOT_LABELS = ("left_child", "right_child", "class")


@dataclass(frozen=True)
class TtnModel:
    n_leaves: int
    phys_dim: int
    chi: int
    n_classes: int
    layers: tuple[tuple[Tensor, ...], ...]  # layers[l][j], layer 0 = root
    seed: int = 0

    @property
    def arch(self) -> str:
        return "ttn"

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def tensors(self) -> tuple[Tensor, ...]:
        """Layer-major flattening (root first)."""
        return tuple(t for layer in self.layers for t in layer)

    def arrays(self) -> list[np.ndarray]:
        return [t.array for t in self.tensors]

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "TtnModel":
        flat = list(arrays)
        if len(flat) != sum(len(layer) for layer in self.layers):
            raise ValueError("wrong number of replacement tensors")
        it = iter(flat)
        new_layers = tuple(
            tuple(Tensor(next(it), t.labels) for t in layer) for layer in self.layers
        )
        return replace(self, layers=new_layers)


def link_dims(n: int, d: int, chi: int) -> list[int]:
    """Dimensions of the links above layers 1..L-1 plus the physical input.

    Entry l (1-based) is the link between layers l-1 and l; the final entry
    is the leaf input dimension d.
    """
    n_layers = int(np.log2(n))
    dims = [min(d ** (2 ** (n_layers - l)), chi) for l in range(1, n_layers)]
    return dims + [d]


def build_ttn(
    n: int, d: int, chi: int, n_classes: int = 5, seed: int = 0
) -> TtnModel:
    """Allocate the tree with isometric non-root tensors.

    Every non-root tensor is the Q factor of a Gaussian matrix with the two
    child axes as rows, so bottom-up messages keep O(1) norm at any depth;
    the root is drawn i.i.d. Normal(0, 1e-2).
    """
    if d < 1 or chi < 1 or n_classes < 1:
        raise ValueError(f"dimensions must be positive, got d={d} chi={chi}")
    if n < 4 or n & (n - 1):
        raise ValueError(f"leaf count {n} must be a power of two, at least 4")
    n_layers = int(np.log2(n))
    links = link_dims(n, d, chi)  # links[l-1] = link above layer l
    rng = np.random.default_rng(seed)
    layers: list[tuple[Tensor, ...]] = []
    root_dim = links[0]
    layers.append(
        (Tensor(rng.normal(0.0, 1e-2, size=(root_dim, root_dim, n_classes)),
                ROOT_LABELS),)
    )
    for l in range(1, n_layers):
        child = links[l]  # leaf layer picks up d here
        parent = links[l - 1]
        row = []
        for _ in range(2**l):
            g = rng.normal(0.0, 1.0, size=(child * child, parent))
            q, _ = np.linalg.qr(g)
            row.append(Tensor(q.reshape(child, child, parent), NODE_LABELS))
        layers.append(tuple(row))
    return TtnModel(
        n_leaves=n,
        phys_dim=d,
        chi=chi,
        n_classes=n_classes,
        layers=tuple(layers),
        seed=seed,
    )


def param_count(m: TtnModel) -> int:
    return sum(t.size for t in m.tensors)


def _check_sites(m: TtnModel, sites: np.ndarray) -> None:
    if sites.ndim != 3 or sites.shape[1] != m.n_leaves or sites.shape[2] != m.phys_dim:
        raise ValueError(
            f"model expects {m.n_leaves} sites of dimension {m.phys_dim}, "
            f"got input of shape {sites.shape[1:]}"
        )


def _upward_messages(
    m: TtnModel, sites: np.ndarray, hook: NodeHook | None
) -> list[list[np.ndarray]]:
    """msgs[l][j]: output of node (l, j) for l >= 1, plus the root scores at
    msgs[0][0].  Each node fuses both children in one contraction."""
    msgs: list[list[np.ndarray]] = [[] for _ in range(m.n_layers)]
    children = [sites[:, k] for k in range(m.n_leaves)]
    for l in range(m.n_layers - 1, -1, -1):
        outs = []
        for j, t in enumerate(m.layers[l]):
            a, b = children[2 * j], children[2 * j + 1]
            out = np.einsum("bi,bj,ijr->br", a, b, t.array, optimize=False)
            if hook is not None:
                out = hook(out, a.shape[1] * b.shape[1])
            outs.append(out)
        msgs[l] = outs
        children = outs
    return msgs


def forward_ttn_batch(
    m: TtnModel, sites: np.ndarray, node_hook: NodeHook | None = None
) -> np.ndarray:
    """Class-overlap vectors for a (B, n, d) batch of embedded site vectors."""
    sites = np.asarray(sites, dtype=np.float64)
    _check_sites(m, sites)
    return _upward_messages(m, sites, node_hook)[0][0]


def forward_ttn(m: TtnModel, x: EmbeddedJet) -> np.ndarray:
    """Class overlaps for one embedded jet; equals the full contraction of
    the tree with the jet's product state."""
    return forward_ttn_batch(m, x.sites[None])[0]


def probabilities_ttn(overlaps: np.ndarray) -> np.ndarray:
    """Squared overlaps normalized to a probability vector."""
    o = np.asarray(overlaps, dtype=np.float64)
    sq = o * o
    total = sq.sum()
    if total == 0.0:
        raise ValueError("all-zero overlap vector has no probability vector")
    return sq / total


def probabilities_batch(overlaps: np.ndarray) -> np.ndarray:
    o = np.asarray(overlaps, dtype=np.float64)
    sq = o * o
    total = sq.sum(axis=1, keepdims=True)
    bad = np.flatnonzero(total[:, 0] == 0.0)
    if bad.size:
        raise ValueError(f"all-zero overlap vector at batch index {bad[0]}")
    return sq / total


def overlap_grad_from_probability_grad(
    overlaps: np.ndarray, prob_grad: np.ndarray
) -> np.ndarray:
    """Chain a gradient w.r.t. normalized squared overlaps back to overlaps."""
    o = np.asarray(overlaps, dtype=np.float64)
    g = np.asarray(prob_grad, dtype=np.float64)
    squeeze = o.ndim == 1
    if squeeze:
        o, g = o[None], g[None]
    total = (o * o).sum(axis=1, keepdims=True)
    p = o * o / total
    inner = (g * p).sum(axis=1, keepdims=True)
    out = 2.0 * o / total * (g - inner)
    return out[0] if squeeze else out


def grad_ttn_batch(
    m: TtnModel, sites: np.ndarray, upstream: np.ndarray
) -> list[np.ndarray]:
    """Gradients of sum_b <upstream_b, forward(m, x_b)> in layer-major order.

    One bottom-up message pass plus one top-down environment pass.
    """
    sites = np.asarray(sites, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    _check_sites(m, sites)
    if upstream.shape != (sites.shape[0], m.n_classes):
        raise ValueError(f"upstream has shape {upstream.shape}")
    msgs = _upward_messages(m, sites, None)

    def child_msgs(l: int, j: int) -> tuple[np.ndarray, np.ndarray]:
        if l == m.n_layers - 1:
            return sites[:, 2 * j], sites[:, 2 * j + 1]
        return msgs[l + 1][2 * j], msgs[l + 1][2 * j + 1]

    grads: list[np.ndarray] = []
    envs = [upstream]  # environment on the parent axis of each node in layer l
    for l in range(m.n_layers):
        next_envs: list[np.ndarray] = []
        for j, t in enumerate(m.layers[l]):
            a, b = child_msgs(l, j)
            e = envs[j]
            grads.append(np.einsum("bi,bj,br->ijr", a, b, e, optimize=True))
            if l < m.n_layers - 1:
                next_envs.append(
                    np.einsum("bj,ijr,br->bi", b, t.array, e, optimize=True)
                )
                next_envs.append(
                    np.einsum("bi,ijr,br->bj", a, t.array, e, optimize=True)
                )
        envs = next_envs
    return grads


def grad_ttn(m: TtnModel, x: EmbeddedJet, upstream: np.ndarray) -> list[np.ndarray]:
    """Per-tensor gradients of <upstream, forward(m, x)> for one jet."""
    return grad_ttn_batch(m, x.sites[None], np.asarray(upstream)[None])
