"""Post-training quantization to signed fixed point and emulated quantized
inference.

The format is sign-inclusive Q2.FB: two integer bits (one of them the sign)
and FB fractional bits, representable range [-2, 2 - 2^-FB].  Weights are
rounded half-to-even onto the grid and saturated.  Two inference modes exist
over a quantized model: `fpop` runs every contraction in full precision,
`qop` additionally quantizes the inputs and re-quantizes the result of every
contraction of the inference schedule, accumulating in full precision inside
each contraction and clipping once per node (per multiply-accumulate clipping
is available for sensitivity studies).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import JetBatch
from .embedding import Layout, embed_batch
from .mps import MpsModel, canonicalize, forward_mps_batch
from .ttn import TtnModel, forward_ttn_batch
from .util import worker_count

__all__ = [
    "FxpFormat",
    "QuantMode",
    "QuantizedModel",
    "SweepRow",
    "CalibrationReport",
    "quantize_value",
    "quantize_array",
    "quantize_model",
    "forward_quantized",
    "forward_quantized_batch",
    "calibrate_scale",
    "ptq_sweep",
    "detect_knee",
]


@dataclass(frozen=True)
class FxpFormat:
    """Signed fixed-point format with `int_bits` + `frac_bits` total bits."""

    frac_bits: int
    int_bits: int = 2  # sign-inclusive

    def __post_init__(self) -> None:
        if not 1 <= self.frac_bits <= 52:
            raise ValueError(f"fractional bits {self.frac_bits} out of range")
        if self.int_bits != 2:
            raise ValueError("only the 2-integer-bit format is supported")

    @property
    def resolution(self) -> float:
        return 2.0**-self.frac_bits

    @property
    def min_value(self) -> float:
        return -2.0

    @property
    def max_value(self) -> float:
        return 2.0 - self.resolution

    @property
    def word_bits(self) -> int:
        return self.int_bits + self.frac_bits


class QuantMode(Enum):
    FPOP = "fpop"  # quantized weights, full-precision contractions
    QOP = "qop"  # re-quantize after every scheduled contraction


def quantize_array(x: np.ndarray, fmt: FxpFormat) -> np.ndarray:
    """Round half-to-even onto the grid, then saturate."""
    scale = 2.0**fmt.frac_bits
    return np.clip(np.round(x * scale) / scale, fmt.min_value, fmt.max_value)


def quantize_value(x: float, fmt: FxpFormat) -> float:
    if not np.isfinite(x):
        raise ValueError(f"cannot quantize non-finite value {x}")
    return float(quantize_array(np.float64(x), fmt))


@dataclass(frozen=True)
class QuantizedModel:
    base: MpsModel | TtnModel  # every weight already on the grid
    fmt: FxpFormat
    mode: QuantMode = QuantMode.QOP
    per_mac: bool = False  # qop only: clip each product and partial sum


def quantize_model(
    model, fmt: FxpFormat, mode: QuantMode = QuantMode.QOP, per_mac: bool = False
) -> QuantizedModel:
    """Element-wise quantization of every tensor."""
    quantized = model.with_arrays([quantize_array(a, fmt) for a in model.arrays()])
    return QuantizedModel(base=quantized, fmt=fmt, mode=mode, per_mac=per_mac)


def forward_quantized_batch(qm: QuantizedModel, sites: np.ndarray) -> np.ndarray:
    """Class scores (MPS) or overlaps (TTN) under the chosen arithmetic."""
    sites = np.asarray(sites, dtype=np.float64)
    hook = None
    if qm.mode is QuantMode.QOP:
        sites = quantize_array(sites, qm.fmt)
        if qm.per_mac:
            return _forward_per_mac(qm.base, sites, qm.fmt)
        hook = lambda out, k: quantize_array(out, qm.fmt)  # noqa: E731
    if isinstance(qm.base, MpsModel):
        return forward_mps_batch(qm.base, sites, node_hook=hook)
    return forward_ttn_batch(qm.base, sites, node_hook=hook)


def forward_quantized(qm: QuantizedModel, x) -> np.ndarray:
    return forward_quantized_batch(qm, x.sites[None])[0]


def _qdot(weights: np.ndarray, vec: np.ndarray, fmt: FxpFormat) -> np.ndarray:
    """(F, K) x (K,) product clipping every product and partial sum."""
    acc = np.zeros(weights.shape[0])
    for k in range(weights.shape[1]):
        acc = quantize_array(acc + quantize_array(weights[:, k] * vec[k], fmt), fmt)
    return acc


def _forward_per_mac(model, sites: np.ndarray, fmt: FxpFormat) -> np.ndarray:
    out = []
    for b in range(sites.shape[0]):
        out.append(_per_mac_single(model, sites[b], fmt))
    return np.stack(out)


def _per_mac_single(model, sites: np.ndarray, fmt: FxpFormat) -> np.ndarray:
    if isinstance(model, MpsModel):
        s = model.label_site
        mats = []
        for k, t in enumerate(model.tensors):
            a = t.array
            flat = np.moveaxis(a, 1, -1).reshape(-1, model.phys_dim)
            free_shape = a.shape[:1] + a.shape[2:]
            mats.append(_qdot(flat, sites[k], fmt).reshape(free_shape))
        left = None
        if s > 0:
            left = mats[0][0]
            for k in range(1, s):
                left = _qdot(mats[k].T, left, fmt)
        right = None
        if s < model.n_sites - 1:
            right = mats[model.n_sites - 1][:, 0]
            for k in range(model.n_sites - 2, s, -1):
                right = _qdot(mats[k], right, fmt)
        core = mats[s]  # (l, c, r)
        if left is not None:
            core = _qdot(np.moveaxis(core, 0, -1).reshape(-1, core.shape[0]), left, fmt
                         ).reshape(core.shape[1:])
        else:
            core = core[0]
        if right is not None:
            return _qdot(core, right, fmt)
        return core[:, 0]
    vecs = [sites[k] for k in range(model.n_leaves)]
    for l in range(model.n_layers - 1, -1, -1):
        nxt = []
        for j, t in enumerate(model.layers[l]):
            a, b = vecs[2 * j], vecs[2 * j + 1]
            pair = quantize_array(np.outer(a, b).ravel(), fmt)
            flat = t.array.reshape(-1, t.array.shape[2]).T
            nxt.append(_qdot(flat, pair, fmt))
        vecs = nxt
    return vecs[0]


@dataclass(frozen=True)
class CalibrationReport:
    shift_bits: int  # shift applied to the class-carrying tensor
    observed_max: float  # its pre-scaling peak output magnitude
    fixed_max: float  # peak magnitude the class-tensor scaling cannot reach
    per_tensor_shift_bits: tuple[int, ...] = ()


_WEIGHT_CAP = 1.9  # scaled weights must stay inside the representable range


def _shift_for(peak: float, target: float, weight_peak: float = 0.0) -> int:
    """Largest power-of-two exponent placing the node output at or below
    `target` while keeping the tensor entries representable."""
    if peak <= 0.0:
        return 0
    shift = int(np.floor(np.log2(target / peak)))
    while weight_peak > 0.0 and weight_peak * 2.0**shift > _WEIGHT_CAP:
        shift -= 1
    return shift


def calibrate_scale(
    model, sites: np.ndarray
) -> tuple[MpsModel | TtnModel, CalibrationReport]:
    """Rescale tensors by powers of two so scheduled intermediates sit just
    below full scale, maximizing fixed-point resolution without saturation.

    Every tensor enters the class scores linearly, so positive per-tensor
    factors scale all class scores identically and predictions are exactly
    unchanged.  A chain model is canonicalized first (isometries bound every
    pre-label message by construction) and only its label tensor is scaled,
    against the peak observed score: chain scores span a wide dynamic range
    and clipping the top of it reorders classes.  A tree is rescaled node by
    node from the leaves upward against a high percentile of each node's
    output, which compensates the geometric shrinkage of bottom-up messages
    with depth; tree outputs are bounded, so clipping the far tail is safe.
    """
    if isinstance(model, MpsModel):
        return _calibrate_mps(model, sites, target=1.0)
    return _calibrate_ttn(model, sites, target=1.5, percentile=99.5)


def _calibrate_mps(m: MpsModel, sites: np.ndarray, target: float):
    m = canonicalize(m)
    arrays = m.arrays()
    label = m.label_site
    scale_dependent = [float(np.max(np.abs(arrays[label])))]
    fixed = [0.0]
    flags = [k == label for k in range(m.n_sites)]  # absorb stage
    flags += [False] * (max(label - 1, 0) + max(m.n_sites - 2 - label, 0))  # chains
    flags += [True] * (int(label > 0) + int(label < m.n_sites - 1))  # merges
    order = iter(flags)

    def hook(out, contracted):
        peak = float(np.max(np.abs(out)))
        (scale_dependent if next(order) else fixed).append(peak)
        return out

    forward_mps_batch(m, sites, node_hook=hook)
    observed = max(scale_dependent)
    shift = _shift_for(observed, target, float(np.max(np.abs(arrays[label]))))
    arrays[label] = arrays[label] * 2.0**shift
    return m.with_arrays(arrays), CalibrationReport(
        shift_bits=shift, observed_max=observed, fixed_max=max(fixed)
    )


def _calibrate_ttn(m: TtnModel, sites: np.ndarray, target: float, percentile: float):
    arrays = m.arrays()  # layer-major, root first
    layer_start = np.cumsum([0] + [len(layer) for layer in m.layers]).tolist()
    shifts = [0] * len(arrays)
    observed = fixed = 0.0
    vecs = [sites[:, k] for k in range(m.n_leaves)]
    for l in range(m.n_layers - 1, -1, -1):
        nxt = []
        for j in range(len(m.layers[l])):
            flat = layer_start[l] + j
            t = arrays[flat]
            out = np.einsum("bi,bj,ijr->br", vecs[2 * j], vecs[2 * j + 1], t,
                            optimize=True)
            peak = float(np.percentile(np.abs(out), percentile)) if out.size else 0.0
            if l == 0:
                observed = peak
            else:
                fixed = max(fixed, peak)
            shift = _shift_for(peak, target, float(np.max(np.abs(t))))
            shifts[flat] = shift
            arrays[flat] = t * 2.0**shift
            nxt.append(out * 2.0**shift)
        vecs = nxt
    return m.with_arrays(arrays), CalibrationReport(
        shift_bits=shifts[0],
        observed_max=observed,
        fixed_max=fixed,
        per_tensor_shift_bits=tuple(shifts),
    )


@dataclass(frozen=True)
class SweepRow:
    arch: str
    n: int
    fb: int
    mode: QuantMode
    accuracy: float


def _accuracy(model, fmt: FxpFormat, mode: QuantMode, sites, labels) -> float:
    qm = quantize_model(model, fmt, mode)
    raw = forward_quantized_batch(qm, sites)
    if isinstance(model, TtnModel):
        raw = raw * raw
    return float(np.mean(np.argmax(raw, axis=1) == labels))


def ptq_sweep(
    model,
    batch: JetBatch,
    fb_list,
    modes: tuple[QuantMode, ...] = (QuantMode.FPOP, QuantMode.QOP),
    layout: Layout = Layout.PER_PARTICLE,
    calibrate: bool = True,
) -> tuple[list[SweepRow], CalibrationReport | None]:
    """Accuracy of every (fractional bits, mode) cell on a labeled batch.

    Cells are independent and evaluated in parallel up to the worker cap;
    row order is fixed regardless of worker count.
    """
    sites = embed_batch(batch.features, layout)
    report = None
    if calibrate:
        probe = sites[: min(len(batch), 2048)]
        model, report = calibrate_scale(model, probe)
    n = model.n_sites if isinstance(model, MpsModel) else model.n_leaves
    cells = [(int(fb), mode) for fb in fb_list for mode in modes]

    def run(cell):
        fb, mode = cell
        return _accuracy(model, FxpFormat(fb), mode, sites, batch.labels)

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        accs = list(pool.map(run, cells))
    rows = [
        SweepRow(arch=model.arch, n=n, fb=fb, mode=mode, accuracy=acc)
        for (fb, mode), acc in zip(cells, accs)
    ]
    return rows, report


def detect_knee(
    rows: list[SweepRow], mode: QuantMode, threshold: float = 0.02
) -> int | None:
    """Largest fractional bit width whose accuracy drops more than
    `threshold` below the highest-precision accuracy of the same mode."""
    per_mode = sorted((r for r in rows if r.mode is mode), key=lambda r: r.fb)
    if not per_mode:
        return None
    plateau = per_mode[-1].accuracy
    knees = [r.fb for r in per_mode if plateau - r.accuracy > threshold]
    return max(knees) if knees else None
