"""Local feature maps turning scaled constituents into unit product states.

Each site vector is a degree-two monomial expansion divided by its own L2
norm, so every site (including all-zero padding rows, which map to the basis
vector [1, 0, ...]) has unit norm and the implied jet-level product state is
normalized.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "Layout",
    "Feature",
    "EmbeddedJet",
    "PER_PARTICLE_DIM",
    "PER_FEATURE_DIM",
    "embed_particle",
    "embed_feature_pair",
    "embed_jet",
    "embed_batch",
    "pt_first_permutation",
    "site_labels",
]

PER_PARTICLE_DIM = 7
PER_FEATURE_DIM = 3


class Layout(Enum):
    PER_PARTICLE = "per-particle"  # one 7-dim site per particle
    PER_FEATURE = "per-feature"  # two 3-dim sites (pt, dR) per particle

    @property
    def site_dim(self) -> int:
        return PER_PARTICLE_DIM if self is Layout.PER_PARTICLE else PER_FEATURE_DIM

    def n_sites(self, n_particles: int) -> int:
        return n_particles if self is Layout.PER_PARTICLE else 2 * n_particles


class Feature(Enum):
    PT = 0
    DELTA_R = 2


@dataclass(frozen=True)
class EmbeddedJet:
    """Per-site unit vectors for one jet; row k is site k."""

    sites: np.ndarray  # (n_sites, site_dim)
    layout: Layout

    @property
    def n_sites(self) -> int:
        return self.sites.shape[0]

    @property
    def site_dim(self) -> int:
        return self.sites.shape[1]


def _require_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature value in embedding input")


def embed_particle(x) -> np.ndarray:
    """[1, pt, e_rel, dR, pt^2, e_rel^2, dR^2] normalized to unit L2 norm."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {x.shape}")
    _require_finite(x)
    v = np.concatenate(([1.0], x, x * x))
    return v / np.linalg.norm(v)


def embed_feature_pair(x, which: Feature) -> np.ndarray:
    """[1, v, v^2] / norm for a single selected feature v of a particle."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {x.shape}")
    _require_finite(x)
    v = x[which.value]
    m = np.array([1.0, v, v * v])
    return m / np.linalg.norm(m)


def _check_permutation(perm, n_sites: int) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    if perm.shape != (n_sites,) or sorted(perm.tolist()) != list(range(n_sites)):
        raise ValueError(f"permutation is not a bijection on {n_sites} sites")
    return perm


def embed_jet(rows, layout: Layout, permutation=None) -> EmbeddedJet:
    """Embed one jet's (N, 3) scaled features as a list of site vectors.

    `permutation`, when given, lists for each output position the
    definition-order site index placed there.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) matrix, got shape {rows.shape}")
    sites = embed_batch(rows[None], layout, permutation)[0]
    return EmbeddedJet(sites=sites, layout=layout)


def embed_batch(features, layout: Layout, permutation=None) -> np.ndarray:
    """Vectorized embedding of a (B, N, 3) feature array to (B, S, d)."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 3 or f.shape[2] != 3:
        raise ValueError(f"expected a (B, N, 3) array, got shape {f.shape}")
    _require_finite(f)
    b, n = f.shape[:2]
    if layout is Layout.PER_PARTICLE:
        ones = np.ones((b, n, 1))
        sites = np.concatenate([ones, f, f * f], axis=2)
    else:
        vals = f[:, :, [Feature.PT.value, Feature.DELTA_R.value]]  # (B, N, 2)
        v = vals.reshape(b, 2 * n)  # interleaved: pt_0, dR_0, pt_1, ...
        sites = np.stack([np.ones_like(v), v, v * v], axis=2)
    sites /= np.linalg.norm(sites, axis=2, keepdims=True)
    if permutation is not None:
        perm = _check_permutation(permutation, sites.shape[1])
        sites = sites[:, perm]
    return sites


def pt_first_permutation(n_particles: int) -> np.ndarray:
    """Reorder the per-feature layout so all pt sites precede all dR sites."""
    return np.concatenate(
        [np.arange(0, 2 * n_particles, 2), np.arange(1, 2 * n_particles, 2)]
    )


def site_labels(layout: Layout, n_particles: int, permutation=None) -> list[str]:
    """Human-readable site names in the order the model sees them."""
    if layout is Layout.PER_PARTICLE:
        names = [f"particle{i}" for i in range(n_particles)]
    else:
        names = []
        for i in range(n_particles):
            names += [f"pt{i}", f"dR{i}"]
    if permutation is not None:
        perm = _check_permutation(permutation, len(names))
        names = [names[i] for i in perm]
    return names
