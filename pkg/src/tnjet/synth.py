"""Synthetic jet generator for fixtures and demos.

Five parametric jet families mimic the qualitative structure of the real
classes: wide many-particle radiation (g), narrow few-particle jets (q),
two-prong decays at two different opening-angle rings (W, Z) and wide
three-prong decays (t).  The signal lives in the transverse momentum
spectrum, the energy fractions and the angular distances, i.e. exactly the
three columns the models consume; the remaining raw columns are filled with
kinematically plausible derived values.
"""

from __future__ import annotations

import numpy as np

from .data import DEFAULT_FEATURES, RAW_FEATURE_COUNT, JetRecord, write_dataset

__all__ = ["synth_records", "write_synthetic_dataset"]

# multiplicity, prongs, prong dR (center, spread), soft dR span, pt softness
_PROFILES = {
    0: dict(mult=22, prongs=0, ring=(0.0, 0.0), soft_dr=(0.02, 0.42), decay=1.6),
    1: dict(mult=9, prongs=0, ring=(0.0, 0.0), soft_dr=(0.01, 0.14), decay=0.7),
    2: dict(mult=7, prongs=2, ring=(0.17, 0.025), soft_dr=(0.02, 0.30), decay=1.0),
    3: dict(mult=8, prongs=2, ring=(0.30, 0.025), soft_dr=(0.02, 0.35), decay=1.0),
    4: dict(mult=14, prongs=3, ring=(0.26, 0.09), soft_dr=(0.05, 0.45), decay=1.2),
}
_EREL_FACTOR = (0.78, 1.10, 0.95, 0.88, 1.02)


def _one_jet(rng: np.random.Generator, label: int, max_constituents: int) -> np.ndarray:
    p = _PROFILES[label]
    n = int(np.clip(rng.poisson(p["mult"]) + 1, 1, max_constituents))
    n_prong = min(p["prongs"], n)

    pt = rng.exponential(scale=1.0 / p["decay"], size=n)
    if n_prong:
        pt[:n_prong] = 3.0 + rng.exponential(1.0, size=n_prong)
    pt = np.sort(pt)[::-1]
    pt = pt / pt.sum()  # momentum fractions of the jet

    dr = rng.uniform(*p["soft_dr"], size=n)
    if n_prong:
        center, spread = p["ring"]
        dr[:n_prong] = np.abs(rng.normal(center, spread, size=n_prong))
    dr = np.clip(dr, 0.0, 0.5)

    e_rel = pt * _EREL_FACTOR[label] * rng.lognormal(0.0, 0.12, size=n)

    phi = rng.uniform(-np.pi, np.pi, size=n)
    eta = dr * np.cos(phi)
    phi_rel = dr * np.sin(phi)
    rows = np.zeros((n, RAW_FEATURE_COUNT), dtype=np.float64)
    rows[:, 0] = pt * np.cos(phi)  # px
    rows[:, 1] = pt * np.sin(phi)  # py
    rows[:, 2] = pt * np.sinh(eta)  # pz
    rows[:, 3] = e_rel * np.cosh(eta)  # energy
    rows[:, DEFAULT_FEATURES.e_rel] = e_rel
    rows[:, DEFAULT_FEATURES.pt] = pt
    rows[:, 6] = pt / max(pt[0], 1e-12)
    rows[:, 7] = eta
    rows[:, 8] = eta - eta.mean()
    rows[:, 9] = eta * 0.9 + rng.normal(0.0, 0.01, size=n)
    rows[:, 10] = phi
    rows[:, 11] = phi_rel
    rows[:, 12] = phi_rel * 0.9 + rng.normal(0.0, 0.01, size=n)
    rows[:, DEFAULT_FEATURES.delta_r] = dr
    rows[:, 14] = np.tanh(eta)
    rows[:, 15] = np.tanh(eta - eta.mean())
    order = np.argsort(-rows[:, DEFAULT_FEATURES.pt], kind="stable")
    return rows[order]


def synth_records(
    n_jets: int, seed: int = 0, max_constituents: int = 48
) -> list[JetRecord]:
    """Draw labeled jets with a uniform class mix."""
    rng = np.random.default_rng([seed, 0x5E7])
    labels = rng.integers(0, 5, size=n_jets)
    return [
        JetRecord(
            constituents=_one_jet(rng, int(lab), max_constituents).astype(np.float32),
            label=int(lab),
        )
        for lab in labels
    ]


def write_synthetic_dataset(
    path, n_jets: int, seed: int = 0, max_constituents: int = 48
) -> None:
    write_dataset(path, synth_records(n_jets, seed, max_constituents), max_constituents)
