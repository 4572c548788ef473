"""Matrix-product-state classifier: chain topology, canonical form, forward
pass and gradients.

Site tensors carry axes (left bond, physical, right bond); the label site has
an extra class axis, (left bond, physical, class, right bond).  Bond k sits
between sites k-1 and k and is capped as min(d^k, d^(n-k), bond_cap), which
pins the boundary bonds to 1 and lets the first and last bonds grow only as
fast as the physical space allows.

The inference schedule is the one the cost model accounts for: every site
vector is absorbed into its tensor first (all independent), then two chains
of bond-space messages advance in parallel from the boundaries toward the
label tensor, where left message, label tensor and right message merge into
the class-score vector.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .embedding import EmbeddedJet
from .tensor import Tensor

__all__ = [
    "MpsModel",
    "bond_dims",
    "build_mps",
    "param_count",
    "canonicalize",
    "forward_mps",
    "forward_mps_batch",
    "grad_mps",
    "grad_mps_batch",
]

# node_hook(out, contracted_size) -> out: called with the batched result of
# every pairwise contraction of the inference schedule, in schedule order.
NodeHook = Callable[[np.ndarray, int], np.ndarray]

SITE_LABELS = ("left", "phys", "right")
LABEL_SITE_LABELS = ("left", "phys", "class", "right")


@dataclass(frozen=True)
class MpsModel:
    n_sites: int
    phys_dim: int
    bond_cap: int
    n_classes: int
    label_site: int
    tensors: tuple[Tensor, ...]
    seed: int = 0

    @property
    def arch(self) -> str:
        return "mps"

    def arrays(self) -> list[np.ndarray]:
        return [t.array for t in self.tensors]

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "MpsModel":
        if len(arrays) != len(self.tensors):
            raise ValueError("wrong number of replacement tensors")
        wrapped = tuple(
            Tensor(a, t.labels) for a, t in zip(arrays, self.tensors)
        )
        return replace(self, tensors=wrapped)


def bond_dims(n: int, d: int, bond_cap: int) -> list[int]:
    """Capped bond dimensions b_0..b_n (b_0 = b_n = 1)."""
    return [min(d**k, d ** (n - k), bond_cap) for k in range(n + 1)]


def build_mps(
    n: int,
    d: int,
    bond_cap: int,
    n_classes: int = 5,
    label_site: int | None = None,
    seed: int = 0,
) -> MpsModel:
    """Allocate a chain with i.i.d. Normal(0, 1e-2) entries.

    The label site defaults to the middle of the chain.
    """
    if n < 1 or d < 1 or bond_cap < 1 or n_classes < 1:
        raise ValueError(
            f"dimensions must be positive, got n={n} d={d} "
            f"bond_cap={bond_cap} n_classes={n_classes}"
        )
    if label_site is None:
        label_site = n // 2
    if not 0 <= label_site < n:
        raise ValueError(f"label site {label_site} out of range for {n} sites")
    bonds = bond_dims(n, d, bond_cap)
    rng = np.random.default_rng(seed)
    tensors = []
    for k in range(n):
        if k == label_site:
            shape = (bonds[k], d, n_classes, bonds[k + 1])
            labels = LABEL_SITE_LABELS
        else:
            shape = (bonds[k], d, bonds[k + 1])
            labels = SITE_LABELS
        tensors.append(Tensor(rng.normal(0.0, 1e-2, size=shape), labels))
    return MpsModel(
        n_sites=n,
        phys_dim=d,
        bond_cap=bond_cap,
        n_classes=n_classes,
        label_site=label_site,
        tensors=tuple(tensors),
        seed=seed,
    )


def param_count(m: MpsModel) -> int:
    return sum(t.size for t in m.tensors)


def _check_sites(m: MpsModel, sites: np.ndarray) -> None:
    if sites.ndim != 3 or sites.shape[1] != m.n_sites or sites.shape[2] != m.phys_dim:
        raise ValueError(
            f"model expects {m.n_sites} sites of dimension {m.phys_dim}, "
            f"got input of shape {sites.shape[1:]}"
        )


def _absorb(m: MpsModel, sites: np.ndarray, hook: NodeHook | None) -> list[np.ndarray]:
    """Contract every site vector with its tensor's physical axis."""
    mats = []
    for k, t in enumerate(m.tensors):
        if k == m.label_site:
            out = np.einsum("bd,ldcr->blcr", sites[:, k], t.array, optimize=False)
        else:
            out = np.einsum("bd,ldr->blr", sites[:, k], t.array, optimize=False)
        if hook is not None:
            out = hook(out, m.phys_dim)
        mats.append(out)
    return mats


def forward_mps_batch(
    m: MpsModel, sites: np.ndarray, node_hook: NodeHook | None = None
) -> np.ndarray:
    """Class scores for a (B, n, d) batch of embedded site vectors."""
    sites = np.asarray(sites, dtype=np.float64)
    _check_sites(m, sites)
    mats = _absorb(m, sites, node_hook)
    s = m.label_site
    n = m.n_sites

    left = None
    if s > 0:
        left = mats[0][:, 0, :]  # boundary bond has size 1
        for k in range(1, s):
            out = np.einsum("bl,blr->br", left, mats[k], optimize=False)
            if node_hook is not None:
                out = node_hook(out, left.shape[1])
            left = out
    right = None
    if s < n - 1:
        right = mats[n - 1][:, :, 0]
        for k in range(n - 2, s, -1):
            out = np.einsum("blr,br->bl", mats[k], right, optimize=False)
            if node_hook is not None:
                out = node_hook(out, right.shape[1])
            right = out

    core = mats[s]  # (B, l, c, r)
    if left is not None:
        out = np.einsum("bl,blcr->bcr", left, core, optimize=False)
        if node_hook is not None:
            out = node_hook(out, left.shape[1])
    else:
        out = core[:, 0]
    if right is not None:
        scores = np.einsum("bcr,br->bc", out, right, optimize=False)
        if node_hook is not None:
            scores = node_hook(scores, right.shape[1])
    else:
        scores = out[:, :, 0]
    return scores


def forward_mps(m: MpsModel, x: EmbeddedJet) -> np.ndarray:
    """Class scores for one embedded jet; equals the contraction of the full
    network with the jet's product state."""
    return forward_mps_batch(m, x.sites[None])[0]


def _messages(m: MpsModel, mats: list[np.ndarray]):
    """Left/right bond messages entering every site, for gradient reuse."""
    b = mats[0].shape[0]
    s = m.label_site
    lmsg = [None] * m.n_sites  # lmsg[k]: (B, b_k), sites 0..k-1 absorbed
    lmsg[0] = np.ones((b, 1))
    for k in range(s):
        lmsg[k + 1] = np.einsum("bl,blr->br", lmsg[k], mats[k], optimize=False)
    rmsg = [None] * m.n_sites  # rmsg[k]: (B, b_{k+1}), sites k+1.. absorbed
    rmsg[m.n_sites - 1] = np.ones((b, 1))
    for k in range(m.n_sites - 2, s - 1, -1):
        rmsg[k] = np.einsum("blr,br->bl", mats[k + 1], rmsg[k + 1], optimize=False)
    return lmsg, rmsg


def grad_mps_batch(
    m: MpsModel, sites: np.ndarray, upstream: np.ndarray
) -> list[np.ndarray]:
    """Gradients of sum_b <upstream_b, forward(m, x_b)> for every tensor.

    Reuses the cached left/right environment messages of the forward pass,
    costing O(n) contractions per batch.
    """
    sites = np.asarray(sites, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    _check_sites(m, sites)
    if upstream.shape != (sites.shape[0], m.n_classes):
        raise ValueError(f"upstream has shape {upstream.shape}")
    mats = _absorb(m, sites, None)
    lmsg, rmsg = _messages(m, mats)
    s = m.label_site
    core = mats[s]
    grads: list[np.ndarray | None] = [None] * m.n_sites

    grads[s] = np.einsum(
        "bl,bd,bc,br->ldcr", lmsg[s], sites[:, s], upstream, rmsg[s], optimize=True
    )

    if s > 0:
        # label tensor folded with upstream and the right environment, then
        # carried leftward through the absorbed matrices
        w = np.einsum("blcr,bc,br->bl", core, upstream, rmsg[s], optimize=True)
        for k in range(s - 1, -1, -1):
            grads[k] = np.einsum(
                "bl,bd,br->ldr", lmsg[k], sites[:, k], w, optimize=True
            )
            if k > 0:
                w = np.einsum("blr,br->bl", mats[k], w, optimize=False)

    if s < m.n_sites - 1:
        v = np.einsum("bl,blcr,bc->br", lmsg[s], core, upstream, optimize=True)
        for k in range(s + 1, m.n_sites):
            grads[k] = np.einsum(
                "bl,bd,br->ldr", v, sites[:, k], rmsg[k], optimize=True
            )
            if k < m.n_sites - 1:
                v = np.einsum("bl,blr->br", v, mats[k], optimize=False)

    return grads  # type: ignore[return-value]


def grad_mps(m: MpsModel, x: EmbeddedJet, upstream: np.ndarray) -> list[np.ndarray]:
    """Per-tensor gradients of <upstream, forward(m, x)> for one jet."""
    return grad_mps_batch(m, x.sites[None], np.asarray(upstream)[None])


def canonicalize(m: MpsModel) -> MpsModel:
    """QR-sweep every tensor into an isometry pointing at the label site.

    Class scores are preserved exactly (up to float error); only the gauge on
    the bonds changes.  Stored shapes are unchanged because every capped bond
    satisfies b_{k+1} <= b_k * d on the left of the label and mirrored on the
    right.
    """
    arrays = [t.array.copy() for t in m.tensors]
    s = m.label_site
    for k in range(s):
        l, d, r = arrays[k].shape
        q, rmat = np.linalg.qr(arrays[k].reshape(l * d, r))
        if q.shape != (l * d, r):
            raise ValueError(
                f"bond {k + 1} of size {r} is not reachable from the left "
                f"(rows {l * d}); tensor shapes violate the capped-bond rule"
            )
        arrays[k] = q.reshape(l, d, r)
        arrays[k + 1] = np.einsum("ab,b...->a...", rmat, arrays[k + 1])
    for k in range(m.n_sites - 1, s, -1):
        l = arrays[k].shape[0]
        rest = arrays[k].shape[1:]
        q, rmat = np.linalg.qr(arrays[k].reshape(l, -1).T)
        if q.shape[1] != l:
            raise ValueError(
                f"bond {k} of size {l} is not reachable from the right; "
                f"tensor shapes violate the capped-bond rule"
            )
        arrays[k] = q.T.reshape((l,) + rest)
        arrays[k - 1] = np.einsum("...a,ja->...j", arrays[k - 1], rmat)
    return m.with_arrays(arrays)
