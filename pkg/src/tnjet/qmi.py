"""Quantum mutual information between input sites of a trained network.

The trained model with its class axis is read as a family of states, one per
class; the analyzed density operator is their unnormalized mixture
rho = sum_c |psi_c><psi_c| scaled to unit trace.  Reduced density matrices of
one or two sites come from contracting the network with a copy of itself over
all remaining sites (the class axis is always summed).  Mutual information is
I(a:b) = S(rho_a) + S(rho_b) - S(rho_ab) in nats.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .mps import MpsModel
from .tensor import Tensor
from .ttn import TtnModel

__all__ = [
    "QmiError",
    "QmiMatrix",
    "reduced_density",
    "von_neumann_entropy",
    "qmi_matrix",
]

_EIG_FLOOR = 1e-12


class QmiError(ValueError):
    pass


@dataclass(frozen=True)
class QmiMatrix:
    values: np.ndarray  # (S, S) symmetric, zero diagonal
    site_labels: tuple[str, ...]


def _n_input_sites(model) -> int:
    return model.n_sites if isinstance(model, MpsModel) else model.n_leaves


def reduced_density(model, sites: Sequence[int]) -> Tensor:
    """Unit-trace reduced density matrix of one or two input sites."""
    sites = tuple(sorted(set(int(s) for s in sites)))
    if len(sites) not in (1, 2):
        raise ValueError("reduced density is defined for 1 or 2 sites")
    n = _n_input_sites(model)
    if any(not 0 <= s < n for s in sites):
        raise ValueError(f"site indices {sites} out of range for {n} sites")
    if isinstance(model, MpsModel):
        rho = _mps_rho(model, sites)
    elif isinstance(model, TtnModel):
        rho = _ttn_rho(model, sites)
    else:
        raise TypeError(f"cannot reduce {type(model).__name__}")
    trace = float(np.trace(rho))
    if trace <= 0.0 or not np.isfinite(trace):
        raise QmiError("model state has zero norm")
    return Tensor(rho / trace)


def von_neumann_entropy(rho) -> float:
    """-sum(lambda ln lambda) over the spectrum, in nats.

    Eigenvalues below the numerical floor contribute zero; an eigenvalue
    below -1e-8 marks a non-physical density matrix and raises.
    """
    arr = rho.array if isinstance(rho, Tensor) else np.asarray(rho, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if not np.allclose(arr, arr.T, atol=1e-8):
        raise QmiError("density matrix is not symmetric")
    if abs(float(np.trace(arr)) - 1.0) > 1e-8:
        raise QmiError(f"density matrix has trace {np.trace(arr)}, expected 1")
    lam = np.linalg.eigvalsh(arr)
    if lam.min() < -1e-8:
        raise QmiError(f"negative eigenvalue {lam.min()} in density matrix")
    lam = lam[lam > _EIG_FLOOR]
    return float(-(lam * np.log(lam)).sum())


def qmi_matrix(model, site_labels: Iterable[str] | None = None) -> QmiMatrix:
    """Pairwise mutual information between all input sites."""
    n = _n_input_sites(model)
    if site_labels is None:
        labels = tuple(f"site{k}" for k in range(n))
    else:
        labels = tuple(site_labels)
        if len(labels) != n:
            raise ValueError(f"{len(labels)} labels for {n} sites")
    single = [von_neumann_entropy(reduced_density(model, (k,))) for k in range(n)]
    values = np.zeros((n, n))
    for a in range(n):
        for b in range(a + 1, n):
            joint = von_neumann_entropy(reduced_density(model, (a, b)))
            values[a, b] = values[b, a] = single[a] + single[b] - joint
    return QmiMatrix(values=values, site_labels=labels)


# --- chain contraction path ---------------------------------------------


def _mps_transfer(a: np.ndarray, env: np.ndarray) -> np.ndarray:
    """Advance a left bond environment through one site, tracing it."""
    if a.ndim == 4:  # class axis is always traced
        return np.einsum("lm,ldcr,mdcq->rq", env, a, a, optimize=True)
    return np.einsum("lm,ldr,mdq->rq", env, a, a, optimize=True)


def _mps_transfer_right(a: np.ndarray, env: np.ndarray) -> np.ndarray:
    if a.ndim == 4:
        return np.einsum("rq,ldcr,mdcq->lm", env, a, a, optimize=True)
    return np.einsum("rq,ldr,mdq->lm", env, a, a, optimize=True)


def _open_site(a: np.ndarray, env: np.ndarray) -> np.ndarray:
    """Advance the environment keeping the site's ket/bra physicals open:
    result axes (right, right', ket, bra)."""
    if a.ndim == 4:
        return np.einsum("lm,ldcr,mecq->rqde", env, a, a, optimize=True)
    return np.einsum("lm,ldr,meq->rqde", env, a, a, optimize=True)


def _mps_rho(m: MpsModel, sites: tuple[int, ...]) -> np.ndarray:
    arrays = m.arrays()
    n = m.n_sites
    left = [np.ones((1, 1))]
    for k in range(n):
        left.append(_mps_transfer(arrays[k], left[k]))
    right = [np.ones((1, 1)) for _ in range(n + 1)]
    for k in range(n - 1, -1, -1):
        right[k] = _mps_transfer_right(arrays[k], right[k + 1])
    if len(sites) == 1:
        (a,) = sites
        x = _open_site(arrays[a], left[a])
        return np.einsum("rqde,rq->de", x, right[a + 1], optimize=True)
    a, b = sites
    x = _open_site(arrays[a], left[a])  # (r, q, d_a, e_a)
    for k in range(a + 1, b):
        t = arrays[k]
        if t.ndim == 4:
            x = np.einsum("rqde,rpcs,qpct->stde", x, t, t, optimize=True)
        else:
            x = np.einsum("rqde,rps,qpt->stde", x, t, t, optimize=True)
    t = arrays[b]
    if t.ndim == 4:
        rho = np.einsum(
            "rqde,rfcs,qgct,st->dfeg", x, t, t, right[b + 1], optimize=True
        )
    else:
        rho = np.einsum("rqde,rfs,qgt,st->dfeg", x, t, t, right[b + 1], optimize=True)
    d = rho.shape[0] * rho.shape[1]
    return rho.reshape(d, d)


# --- tree contraction path ----------------------------------------------


def _ttn_env(m: TtnModel, l: int, j: int, open_sites: tuple[int, ...]) -> np.ndarray:
    """Ket/bra contraction of the subtree under node (l, j).

    Returns (parent, parent', then a (ket, bra) axis pair per open site in
    ascending site order).  Leaves outside `open_sites` are traced.
    """
    t = m.layers[l][j].array
    n_below = m.n_leaves >> (l + 1)  # leaves under each child
    if l == m.n_layers - 1:
        la, lb = 2 * j, 2 * j + 1
        oa, ob = la in open_sites, lb in open_sites
        if oa and ob:
            return np.einsum("ijr,klq->rqikjl", t, t, optimize=True)
        if oa:
            return np.einsum("ijr,kjq->rqik", t, t, optimize=True)
        if ob:
            return np.einsum("ijr,ilq->rqjl", t, t, optimize=True)
        return np.einsum("ijr,ijq->rq", t, t, optimize=True)
    lo = j * 2 * n_below
    left_open = tuple(s for s in open_sites if lo <= s < lo + n_below)
    right_open = tuple(s for s in open_sites if lo + n_below <= s < lo + 2 * n_below)
    el = _ttn_env(m, l + 1, 2 * j, left_open)
    er = _ttn_env(m, l + 1, 2 * j + 1, right_open)
    # dynamic subscripts: children environments carry 0, 2 or 4 extra axes
    extra_l = "uv"[: el.ndim - 2] + ("wx" if el.ndim == 6 else "")
    extra_r = "yz"[: er.ndim - 2] + ("UV" if er.ndim == 6 else "")
    expr = (
        f"ijr,klq,ik{extra_l},jl{extra_r}->rq{extra_l}{extra_r}"
    )
    return np.einsum(expr, t, t, el, er, optimize=True)


def _ttn_rho(m: TtnModel, sites: tuple[int, ...]) -> np.ndarray:
    root = m.layers[0][0].array
    half = m.n_leaves // 2
    left_open = tuple(s for s in sites if s < half)
    right_open = tuple(s for s in sites if s >= half)
    el = _ttn_env(m, 1, 0, left_open)
    er = _ttn_env(m, 1, 1, right_open)
    extra_l = "uv"[: el.ndim - 2] + ("wx" if el.ndim == 6 else "")
    extra_r = "yz"[: er.ndim - 2] + ("UV" if er.ndim == 6 else "")
    expr = f"ijc,klc,ik{extra_l},jl{extra_r}->{extra_l}{extra_r}"
    rho = np.einsum(expr, root, root, el, er, optimize=True)
    if len(sites) == 1:
        return rho  # (ket, bra)
    # axes: (ket_a, bra_a, ket_b, bra_b) -> (ket_a ket_b, bra_a bra_b)
    rho = rho.transpose(0, 2, 1, 3)
    d = rho.shape[0] * rho.shape[1]
    return rho.reshape(d, d)
