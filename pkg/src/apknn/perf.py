"""Closed-form runtime, bandwidth, and energy models for the fabric.

The throughput model charges d cycles per query: frames overlap, so the
fill phase of one query hides behind the payload phase of the next. The
cycle-accurate simulator intentionally does not pipeline frames; these
formulas describe steady-state hardware throughput, not the simulator.

Energy figures need a wattage. The fabric's dynamic power is not public,
so per-workload defaults are back-solved from the first generation
large-dataset reference efficiency figures and marked as calibration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .compiler import CompileOptions, Reduction, compile_partition
from .resources import CapacityProfile, decomposition_savings, packing_savings

__all__ = [
    "LARGE_N",
    "PlatformParams",
    "WorkloadSpec",
    "DEFAULT_POWER_WATTS",
    "standard_workloads",
    "reconfigurations",
    "small_runtime",
    "large_runtime",
    "report_bandwidth",
    "reporting_feasible",
    "improvement_factors",
    "optext_runtime",
    "energy_efficiency",
    "indexed_runtime",
]

LARGE_N = 2 ** 20

# Back-solved from the generation-1 large-dataset reference efficiency rows;
# treat as calibration constants, not measurements.
DEFAULT_POWER_WATTS = {
    "WordEmbed": 18.80,
    "SIFT": 18.83,
    "TagSpace": 23.34,
}


@dataclass(frozen=True)
class PlatformParams:
    clock_hz: float = 133e6
    reconfig_gen1_s: float = 0.045
    reconfig_gen2_s: float = 0.00045
    pcie_gbps: float = 63.0
    process_nm: float = 50.0
    target_nm: float = 28.0

    def __post_init__(self):
        for name in ("clock_hz", "reconfig_gen1_s", "reconfig_gen2_s",
                     "pcie_gbps", "process_nm", "target_nm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def reconfig_seconds(self, generation: int) -> float:
        if generation == 1:
            return self.reconfig_gen1_s
        if generation == 2:
            return self.reconfig_gen2_s
        raise ValueError(f"unknown device generation {generation!r}")


@dataclass(frozen=True)
class WorkloadSpec:
    name: str
    d: int
    k: int
    capacity: int
    n: int
    q: int = 4096

    def __post_init__(self):
        if min(self.d, self.k, self.capacity, self.n) < 1:
            raise ValueError("workload dimensions must be positive")
        if self.q < 0:
            raise ValueError("query count cannot be negative")


_PRESETS = (("WordEmbed", 64, 2), ("SIFT", 128, 4), ("TagSpace", 256, 16))


def standard_workloads(n: int | None = None,
                       profile: CapacityProfile | None = None,
                       q: int = 4096) -> tuple[WorkloadSpec, ...]:
    """The three benchmark parameter sets; n defaults to board capacity."""
    profile = profile if profile is not None else CapacityProfile()
    out = []
    for name, d, k in _PRESETS:
        cap = profile.capacity_for(d)
        out.append(WorkloadSpec(name=name, d=d, k=k, capacity=cap,
                                n=cap if n is None else n, q=q))
    return tuple(out)


def reconfigurations(w: WorkloadSpec) -> int:
    return -(-w.n // w.capacity)


def small_runtime(w: WorkloadSpec,
                  params: PlatformParams | None = None) -> float:
    """Seconds to stream q queries against one resident configuration."""
    params = params if params is not None else PlatformParams()
    if w.n > w.capacity:
        raise ValueError("dataset exceeds one board configuration; use "
                         "large_runtime")
    return w.q * w.d / params.clock_hz


def large_runtime(w: WorkloadSpec, generation: int,
                  params: PlatformParams | None = None) -> float:
    """Seconds to cycle every partition through the board, q queries each."""
    params = params if params is not None else PlatformParams()
    rounds = reconfigurations(w)
    scan = w.q * w.d / params.clock_hz
    return rounds * (params.reconfig_seconds(generation) + scan)


def _reduction_ratio(reduction) -> float:
    if reduction is None:
        return 1.0
    if isinstance(reduction, Reduction):
        return reduction.budget / reduction.group_size
    group, budget = reduction
    return Reduction(group, budget).budget / group


def report_bandwidth(w: WorkloadSpec,
                     params: PlatformParams | None = None,
                     slices: int = 1,
                     reduction=None) -> float:
    """Sustained report traffic in bits per second.

    Every resident vector reports once per frame as a 32-bit record, plus
    32 bits per dimension of offset context, all inside a 2d-cycle query
    window. Statistical reduction thins the per-vector term to budget /
    group_size; multiplexed slices multiply the whole figure.
    """
    params = params if params is not None else PlatformParams()
    vectors = w.capacity * _reduction_ratio(reduction)
    bits = 32.0 * (vectors + w.d)
    window = 2.0 * w.d / params.clock_hz
    return slices * bits / window


def reporting_feasible(w: WorkloadSpec,
                       params: PlatformParams | None = None,
                       slices: int = 1,
                       reduction=None) -> bool:
    params = params if params is not None else PlatformParams()
    return report_bandwidth(w, params, slices, reduction) \
        <= params.pcie_gbps * 1e9


def improvement_factors(w: WorkloadSpec,
                        packing_factor: int = 4,
                        decomposition_factor: int = 4,
                        params: PlatformParams | None = None) -> dict:
    """Compounded speedup multipliers for the optimized, extended design.

    Technology scaling is the squared feature-size ratio; packing and
    decomposition factors come from the resource models at this
    workload's dimensionality; the counter extension shortens the frame
    from 2d to d + d/7 cycles.
    """
    params = params if params is not None else PlatformParams()
    image = compile_partition(np.zeros((1, w.d), dtype=np.uint8))
    factors = {
        "technology": (params.process_nm / params.target_nm) ** 2,
        "vector_packing": packing_savings(w.d, packing_factor),
        "ste_decomposition": decomposition_savings(image,
                                                   decomposition_factor),
        "counter_increment": (2 * w.d) / (w.d + w.d / 7),
    }
    factors["total"] = math.prod(factors.values())
    return factors


def optext_runtime(w: WorkloadSpec,
                   params: PlatformParams | None = None,
                   factors: dict | None = None) -> float:
    """Projected large-dataset runtime after all modeled improvements."""
    params = params if params is not None else PlatformParams()
    if factors is None:
        factors = improvement_factors(w, params=params)
    return large_runtime(w, 2, params) / factors["total"]


def energy_efficiency(w: WorkloadSpec, runtime_s: float,
                      power_watts: float) -> float:
    """Queries answered per joule at the given runtime and power draw."""
    if power_watts <= 0:
        raise ValueError("power must be positive")
    if runtime_s <= 0:
        raise ValueError("runtime must be positive")
    return w.q / (power_watts * runtime_s)


def indexed_runtime(w: WorkloadSpec, bucket_queries,
                    generation: int,
                    params: PlatformParams | None = None,
                    host_seconds: float = 0.0) -> float:
    """Seconds to serve index-routed queries bucket by bucket.

    ``bucket_queries`` holds one query count per distinct visited bucket;
    each visited bucket costs one reconfiguration plus its batched scan.
    A degenerate index routing all queries to every one of R partitions
    reproduces large_runtime exactly.
    """
    params = params if params is not None else PlatformParams()
    counts = [int(c) for c in bucket_queries]
    if any(c < 0 for c in counts):
        raise ValueError("bucket query counts cannot be negative")
    reconfig = len(counts) * params.reconfig_seconds(generation)
    scan = sum(counts) * w.d / params.clock_hz
    return host_seconds + reconfig + scan
