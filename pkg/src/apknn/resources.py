"""Element tallies, block placement, and analytic resource savings.

The placement model is deliberately conservative: every connected NFA
gets a private contiguous span of blocks sized by the worst of its four
per-block limits, spans are packed first-fit into half-cores, and no NFA
may straddle a half-core. Routing is not modeled; a calibration factor
rho scales occupied blocks when comparing against measured boards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .compiler import BoardImage, CompileOptions, compile_partition
from .fabric import Automaton, FabricConfig

__all__ = [
    "NfaTally",
    "ResourceTally",
    "CapacityProfile",
    "Placement",
    "tally",
    "place",
    "packing_savings",
    "decomposition_savings",
    "resource_report",
]

_DECOMPOSITION_FACTORS = (1, 2, 4, 8, 16, 32)


@dataclass(frozen=True)
class NfaTally:
    """Element counts of one connected NFA."""

    stes: int = 0
    counters: int = 0
    booleans: int = 0
    reporting_stes: int = 0


@dataclass(frozen=True)
class ResourceTally:
    """Whole-automaton element counts plus the per-NFA breakdown."""

    stes: int
    counters: int
    booleans: int
    reporting_stes: int
    nfas: tuple[NfaTally, ...] = ()

    def __post_init__(self):
        for name in ("stes", "counters", "booleans", "reporting_stes"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} cannot be negative")
        if self.reporting_stes > self.stes:
            raise ValueError("reporting STEs exceed total STEs")

    @property
    def max_nfa_stes(self) -> int:
        return max((n.stes for n in self.nfas), default=0)

    @property
    def max_nfa_counters(self) -> int:
        return max((n.counters for n in self.nfas), default=0)


@dataclass(frozen=True)
class CapacityProfile:
    """Vectors per board configuration, by dimensionality.

    Dimensionalities outside the calibrated table fall back to a fixed
    bit budget of 131072 vector-bits, capped at 1024 vectors. ``rho``
    scales occupied blocks in utilization figures.
    """

    table: dict[int, int] = field(
        default_factory=lambda: {64: 1024, 128: 1024, 256: 512})
    rho: float = 1.0

    def __post_init__(self):
        if self.rho < 1.0:
            raise ValueError("routing overhead factor must be at least 1")
        for d, cap in self.table.items():
            if d < 1 or cap < 1:
                raise ValueError("capacity table entries must be positive")

    def capacity_for(self, d: int) -> int:
        if d < 1:
            raise ValueError("dimensionality must be positive")
        if d in self.table:
            return self.table[d]
        return max(1, min(131072 // d, 1024))


@dataclass(frozen=True)
class Placement:
    blocks: int
    half_cores: int
    devices: int
    utilization: float


class _UnionFind:
    def __init__(self):
        self.parent: dict[int, int] = {}

    def find(self, x: int) -> int:
        root = x
        while self.parent.setdefault(root, root) != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int):
        self.parent[self.find(a)] = self.find(b)


def tally(automaton: Automaton) -> ResourceTally:
    """Exact element counts, total and per connected NFA.

    Connectivity follows every influence relation: edges, counter
    increment/reset ports, counter-valued thresholds, and gate inputs.
    """
    uf = _UnionFind()
    for e in automaton.elements():
        uf.find(e.id)
    for src, dst in automaton.edges:
        uf.union(src, dst)
    for c in automaton.counters:
        for src in c.increment_drivers + c.reset_drivers:
            uf.union(src, c.id)
        if c.threshold_counter is not None:
            uf.union(c.threshold_counter, c.id)
    for g in automaton.gates:
        for src in g.inputs:
            uf.union(src, g.id)

    groups: dict[int, list[int]] = {}
    for ste in automaton.stes:
        root = uf.find(ste.id)
        groups.setdefault(root, [0, 0, 0, 0])
        groups[root][0] += 1
        if ste.report:
            groups[root][3] += 1
    for c in automaton.counters:
        groups.setdefault(uf.find(c.id), [0, 0, 0, 0])[1] += 1
    for g in automaton.gates:
        groups.setdefault(uf.find(g.id), [0, 0, 0, 0])[2] += 1

    nfas = tuple(NfaTally(*groups[root]) for root in sorted(groups))
    return ResourceTally(
        stes=sum(n.stes for n in nfas),
        counters=sum(n.counters for n in nfas),
        booleans=sum(n.booleans for n in nfas),
        reporting_stes=sum(n.reporting_stes for n in nfas),
        nfas=nfas)


def _blocks_for(nfa: NfaTally, config: FabricConfig) -> int:
    return max(
        -(-nfa.stes // config.stes_per_block),
        -(-nfa.counters // config.counters_per_block),
        -(-nfa.booleans // config.booleans_per_block),
        -(-nfa.reporting_stes // config.reporting_per_block),
        1 if (nfa.stes or nfa.counters or nfa.booleans) else 0)


def place(resource_tally: ResourceTally,
          config: FabricConfig | None = None,
          rho: float = 1.0) -> Placement:
    """Greedy first-fit placement of NFA block spans into half-cores."""
    config = config if config is not None else FabricConfig()
    per_halfcore = config.blocks_per_halfcore
    spans = []
    for nfa in resource_tally.nfas:
        need = _blocks_for(nfa, config)
        if need > per_halfcore:
            raise ValueError(
                f"one NFA needs {need} blocks; a half-core holds "
                f"{per_halfcore}")
        if need:
            spans.append(need)
    half_cores = 0
    room = 0
    total = 0
    for need in spans:
        if need > room:
            half_cores += 1
            room = per_halfcore
        room -= need
        total += need
    device_halfcores = config.halfcores_per_device
    devices = max(1, -(-half_cores // device_halfcores))
    capacity = per_halfcore * device_halfcores * devices
    return Placement(blocks=total, half_cores=half_cores, devices=devices,
                     utilization=total * rho / capacity)


def packing_savings(d: int, packing_factor: int, fan_in: int = 16) -> float:
    """STE cost ratio of P standalone macros to one packed group of P.

    Both sides are built with the real compiler, so the figure tracks the
    exact trellis, collector, and delay share structure.
    """
    if packing_factor < 1:
        raise ValueError("packing factor must be at least 1")
    if packing_factor == 1:
        return 1.0
    zeros = np.zeros((1, d), dtype=np.uint8)
    single = compile_partition(zeros, CompileOptions(fan_in=fan_in))
    group = np.zeros((packing_factor, d), dtype=np.uint8)
    packed = compile_partition(
        group, CompileOptions(packing_factor=packing_factor, fan_in=fan_in))
    return (packing_factor * single.automaton.ste_count()
            / packed.automaton.ste_count())


def decomposition_savings(image, x: int) -> float:
    """Resource factor of splitting STEs by symbol-class sensitivity.

    A class sensitive to at most 8 - log2(x) symbol bits fits a 1/x
    slice of the full 256-row column; anything wider stays whole.
    """
    if x not in _DECOMPOSITION_FACTORS:
        raise ValueError(f"decomposition factor must be one of "
                         f"{_DECOMPOSITION_FACTORS}")
    automaton = image.automaton if isinstance(image, BoardImage) else image
    if not automaton.stes:
        raise ValueError("automaton has no STEs")
    budget = 8 - int(math.log2(x))
    cost = 0.0
    for ste in automaton.stes:
        narrow = len(ste.symbol_class.sensitivity()) <= budget
        cost += 1.0 / x if narrow else 1.0
    return len(automaton.stes) / cost


def resource_report(image, config: FabricConfig | None = None,
                    rho: float = 1.0) -> dict:
    """Structured tally + placement summary for one board image."""
    automaton = image.automaton if isinstance(image, BoardImage) else image
    config = config if config is not None else (
        image.config if isinstance(image, BoardImage) else FabricConfig())
    counts = tally(automaton)
    placed = place(counts, config, rho=rho)
    return {
        "stes": counts.stes,
        "counters": counts.counters,
        "booleans": counts.booleans,
        "reporting_stes": counts.reporting_stes,
        "nfas": len(counts.nfas),
        "largest_nfa_stes": counts.max_nfa_stes,
        "blocks": placed.blocks,
        "half_cores": placed.half_cores,
        "devices": placed.devices,
        "utilization": placed.utilization,
    }
