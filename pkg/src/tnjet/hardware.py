"""Contraction-DAG construction and the cycle/memory cost model.

A DAG node is one scheduled pairwise (or child-fused) contraction with
`free_size` output elements each accumulated over `contracted_size` products,
so the node performs free*contracted multiplications and free*(contracted-1)
additions.  Nodes sharing a stage have no data dependencies and run in
parallel; a stage with maximum contracted size K costs

    n_reg * 1  +  ceil(log2 K)  +  stage_overhead

cycles: one pipelined multiplier level of n_reg cycles, an adder tree of
depth ceil(log2 K), and a per-stage scheduling overhead.  With the default
calibrations (n_reg=1, overhead=0 for the tree model; n_reg=3, overhead=3
for the chain model) this reproduces the reference tree latencies exactly
and the chain latencies within a few percent; chain synthesis is compiler
scheduled, so its estimate is declared approximate.

Memory is the pure weight payload: parameter count times the word width
(2 + FB bits, sign included), reported in kilobits of 1000 bits.  Reference
chain synthesis reports include buffer overhead beyond the weight payload,
so the chain memory figure is labeled weights-only in the report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mps import MpsModel, bond_dims
from .quantization import FxpFormat
from .ttn import TtnModel, link_dims

__all__ = [
    "DagNode",
    "ContractionDag",
    "CostModel",
    "LatencyEstimate",
    "OpCounter",
    "default_cost_model",
    "build_dag",
    "estimate_latency",
    "estimate_memory",
    "hardware_report",
]


@dataclass(frozen=True)
class DagNode:
    node_id: str
    stage: int
    free_size: int
    contracted_size: int
    deps: tuple[str, ...] = ()

    @property
    def mult_count(self) -> int:
        return self.free_size * self.contracted_size

    @property
    def add_count(self) -> int:
        return self.free_size * (self.contracted_size - 1)


@dataclass(frozen=True)
class ContractionDag:
    arch: str
    nodes: tuple[DagNode, ...]

    @property
    def n_stages(self) -> int:
        return 1 + max((n.stage for n in self.nodes), default=-1)

    @property
    def total_mults(self) -> int:
        return sum(n.mult_count for n in self.nodes)

    @property
    def total_adds(self) -> int:
        return sum(n.add_count for n in self.nodes)


@dataclass(frozen=True)
class CostModel:
    n_reg: int  # pipeline registers per multiplier
    stage_overhead: int = 0
    clock_mhz: float = 250.0

    def __post_init__(self) -> None:
        if self.n_reg < 1 or self.clock_mhz <= 0 or self.stage_overhead < 0:
            raise ValueError("invalid cost model constants")


def default_cost_model(arch: str) -> CostModel:
    if arch == "mps":
        return CostModel(n_reg=3, stage_overhead=3)
    if arch == "ttn":
        return CostModel(n_reg=1, stage_overhead=0)
    raise ValueError(f"unknown architecture {arch!r}")


class OpCounter:
    """Node hook tallying per-sample multiply/add counts of an executed
    forward pass, from the live operand shapes."""

    def __init__(self) -> None:
        self.mults = 0
        self.adds = 0
        self.n_ops = 0

    def __call__(self, out: np.ndarray, contracted: int) -> np.ndarray:
        free = int(np.prod(out.shape[1:], dtype=np.int64))
        self.mults += free * contracted
        self.adds += free * (contracted - 1)
        self.n_ops += 1
        return out


def _mps_dag(m: MpsModel) -> ContractionDag:
    bonds = bond_dims(m.n_sites, m.phys_dim, m.bond_cap)
    s, n, d = m.label_site, m.n_sites, m.phys_dim
    nodes: list[DagNode] = []
    for k in range(n):
        free = bonds[k] * bonds[k + 1] * (m.n_classes if k == s else 1)
        nodes.append(DagNode(f"absorb{k}", 0, free, d))
    # the two chains advance one step per stage, in parallel
    left_steps = max(s - 1, 0)
    right_steps = max(n - 2 - s, 0)
    for i in range(1, left_steps + 1):
        k = i  # matrix absorbed by the left message at this step
        deps = ("absorb0" if i == 1 else f"left{i - 1}", f"absorb{k}")
        nodes.append(DagNode(f"left{i}", i, bonds[k + 1], bonds[k], deps))
    for i in range(1, right_steps + 1):
        k = n - 1 - i
        deps = (f"absorb{n - 1}" if i == 1 else f"right{i - 1}", f"absorb{k}")
        nodes.append(DagNode(f"right{i}", i, bonds[k], bonds[k + 1], deps))
    stage = 1 + max(left_steps, right_steps)
    if s > 0:
        deps = (f"left{left_steps}" if left_steps else "absorb0", f"absorb{s}")
        nodes.append(
            DagNode("merge_left", stage, m.n_classes * bonds[s + 1], bonds[s], deps)
        )
        stage += 1
    if s < n - 1:
        deps = (
            "merge_left" if s > 0 else f"absorb{s}",
            f"right{right_steps}" if right_steps else f"absorb{n - 1}",
        )
        nodes.append(DagNode("merge_right", stage, m.n_classes, bonds[s + 1], deps))
    return ContractionDag(arch="mps", nodes=tuple(nodes))


def _ttn_dag(m: TtnModel) -> ContractionDag:
    links = link_dims(m.n_leaves, m.phys_dim, m.chi)  # links[l-1] above layer l
    n_layers = m.n_layers
    nodes: list[DagNode] = []
    for l in range(n_layers - 1, -1, -1):
        stage = n_layers - 1 - l
        parent = m.n_classes if l == 0 else links[l - 1]
        child_dim = m.phys_dim if l == n_layers - 1 else links[l]
        for j in range(2**l):
            deps = ()
            if l < n_layers - 1:
                deps = (f"node{l + 1}_{2 * j}", f"node{l + 1}_{2 * j + 1}")
            nodes.append(
                DagNode(f"node{l}_{j}", stage, parent, child_dim * child_dim, deps)
            )
    return ContractionDag(arch="ttn", nodes=tuple(nodes))


def build_dag(model) -> ContractionDag:
    """Static inference DAG from the model topology (bond formulas, not the
    allocated arrays)."""
    if isinstance(model, MpsModel):
        if not model.tensors:
            return ContractionDag(arch="mps", nodes=())
        return _mps_dag(model)
    if isinstance(model, TtnModel):
        if not model.tensors:
            return ContractionDag(arch="ttn", nodes=())
        return _ttn_dag(model)
    raise TypeError(f"cannot build a DAG for {type(model).__name__}")


@dataclass(frozen=True)
class LatencyEstimate:
    cycles: int
    ns: float
    per_stage_cycles: tuple[int, ...] = field(default=())


def _adder_depth(k: int) -> int:
    return (k - 1).bit_length() if k > 1 else 0


def estimate_latency(dag: ContractionDag, cost: CostModel) -> LatencyEstimate:
    """Critical-path cycles: stages run back to back, each paying the
    multiplier latency, its widest adder tree and the stage overhead."""
    per_stage = []
    for stage in range(dag.n_stages):
        ks = [n.contracted_size for n in dag.nodes if n.stage == stage]
        if not ks:
            continue
        per_stage.append(cost.n_reg + _adder_depth(max(ks)) + cost.stage_overhead)
    cycles = sum(per_stage)
    return LatencyEstimate(
        cycles=cycles,
        ns=cycles * 1000.0 / cost.clock_mhz,
        per_stage_cycles=tuple(per_stage),
    )


def estimate_memory(n_params: int, fmt: FxpFormat) -> int:
    """Weight payload in kilobits (1000 bits), truncated to an integer."""
    return n_params * fmt.word_bits // 1000


def hardware_report(model, fmt: FxpFormat, cost: CostModel | None = None) -> dict:
    """Latency, memory and operation-count summary for one configuration."""
    n_params = sum(t.size for t in model.tensors)
    dag = build_dag(model)
    if cost is None:
        cost = default_cost_model(dag.arch)
    latency = estimate_latency(dag, cost)
    report = {
        "arch": dag.arch,
        "n_sites": model.n_sites if isinstance(model, MpsModel) else model.n_leaves,
        "param_count": n_params,
        "word_bits": fmt.word_bits,
        "frac_bits": fmt.frac_bits,
        "memory_bits": n_params * fmt.word_bits,
        "memory_kilobits": estimate_memory(n_params, fmt),
        "total_mults": dag.total_mults,
        "total_adds": dag.total_adds,
        "n_stages": dag.n_stages,
        "cycles": latency.cycles,
        "latency_ns": latency.ns,
        "n_reg": cost.n_reg,
        "clock_mhz": cost.clock_mhz,
    }
    if dag.arch == "mps":
        report["memory_note"] = (
            "weights-only estimate; compiler-scheduled chain synthesis adds "
            "buffer overhead beyond the weight payload"
        )
        report["latency_note"] = "approximate: chain scheduling is compiler-dependent"
    return report
