"""Element and configuration types for the automata fabric.

The fabric is homogeneous-automata hardware modeled at cycle granularity:
state transition elements (STEs) match one 8-bit symbol per cycle against a
256-entry symbol class, counters accumulate activations and emit a single
latched pulse on threshold crossing, and two-input boolean elements combine
same-cycle activations. Activation wires into STEs live in
``Automaton.edges``; counter port connections and boolean inputs live on the
owning element.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

__all__ = [
    "SymbolClass",
    "Ste",
    "Counter",
    "BooleanGate",
    "Automaton",
    "FabricConfig",
    "ReportEvent",
    "GATE_OPS",
]

_FULL_MASK = (1 << 256) - 1


@functools.lru_cache(maxsize=4096)
def _sensitivity_bits(mask: int) -> tuple[int, ...]:
    # A bit position matters iff some symbol pair differing only there
    # disagrees on membership. The set of such positions is exactly the
    # minimal support of the membership function.
    bits = []
    for b in range(8):
        flip = 1 << b
        if any((mask >> s) & 1 != (mask >> (s ^ flip)) & 1 for s in range(256)):
            bits.append(b)
    return tuple(bits)


@dataclass(frozen=True)
class SymbolClass:
    """Set of 8-bit symbols an STE matches, as a 256-bit membership mask.

    Bit i of ``mask`` is set iff symbol i matches.
    """

    mask: int

    def __post_init__(self):
        if not 0 <= self.mask <= _FULL_MASK:
            raise ValueError("symbol class mask out of range")

    @classmethod
    def from_symbols(cls, symbols: Iterable[int]) -> "SymbolClass":
        m = 0
        for s in symbols:
            if not 0 <= s <= 255:
                raise ValueError(f"symbol {s} out of range")
            m |= 1 << s
        return cls(m)

    @classmethod
    def from_predicate(cls, pred) -> "SymbolClass":
        m = 0
        for s in range(256):
            if pred(s):
                m |= 1 << s
        return cls(m)

    @classmethod
    def all_symbols(cls) -> "SymbolClass":
        return cls(_FULL_MASK)

    @classmethod
    def from_hex(cls, text: str) -> "SymbolClass":
        if len(text) != 64:
            raise ValueError("symbol class hex must be 64 characters")
        return cls(int(text, 16))

    def to_hex(self) -> str:
        return format(self.mask, "064x")

    def matches(self, symbol: int) -> bool:
        return bool((self.mask >> symbol) & 1)

    def size(self) -> int:
        return self.mask.bit_count()

    def sensitivity(self) -> tuple[int, ...]:
        """Minimal set of symbol bit positions membership depends on."""
        return _sensitivity_bits(self.mask)

    def union(self, other: "SymbolClass") -> "SymbolClass":
        return SymbolClass(self.mask | other.mask)

    def invert(self) -> "SymbolClass":
        return SymbolClass(self.mask ^ _FULL_MASK)


@dataclass(frozen=True)
class Ste:
    id: int
    symbol_class: SymbolClass
    start: bool = False
    report: bool = False
    report_tag: int | None = None


@dataclass(frozen=True)
class Counter:
    """Threshold counter in pulse mode.

    Exactly one of ``threshold`` (static) and ``threshold_counter`` (id of
    another counter, compared strictly) must be set. Reset beats a same-step
    increment and clears the fired latch.
    """

    id: int
    threshold: int | None = None
    threshold_counter: int | None = None
    increment_drivers: tuple[int, ...] = ()
    reset_drivers: tuple[int, ...] = ()


# Two-input truth tables, bit index = (a << 1) | b.
GATE_OPS = {
    "and": 0b1000,
    "or": 0b1110,
    "xor": 0b0110,
    "nand": 0b0111,
    "nor": 0b0001,
    "xnor": 0b1001,
}


@dataclass(frozen=True)
class BooleanGate:
    id: int
    truth_table: int
    inputs: tuple[int, int]

    def __post_init__(self):
        if not 0 <= self.truth_table <= 15:
            raise ValueError("truth table must fit 2 inputs")


class ReportEvent(NamedTuple):
    tag: int
    offset: int


@dataclass
class Automaton:
    stes: list[Ste] = field(default_factory=list)
    counters: list[Counter] = field(default_factory=list)
    gates: list[BooleanGate] = field(default_factory=list)
    edges: list[tuple[int, int]] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def elements(self) -> Iterator:
        yield from self.stes
        yield from self.counters
        yield from self.gates

    def by_id(self) -> dict[int, object]:
        return {e.id: e for e in self.elements()}

    def ste_count(self) -> int:
        return len(self.stes)


@dataclass(frozen=True)
class FabricConfig:
    """Capacity constants and optional capabilities of one fabric device."""

    stes_per_block: int = 256
    counters_per_block: int = 4
    booleans_per_block: int = 12
    reporting_per_block: int = 32
    blocks_per_halfcore: int = 96
    halfcores_per_device: int = 32
    clock_hz: float = 133e6
    fan_in_limit: int = 16
    fan_out_limit: int = 64
    increment_by_n: bool = False
    increment_cap: int = 8
    dynamic_threshold: bool = False
    ste_decomposition_factor: int = 1

    def halfcore_ste_limit(self) -> int:
        return self.stes_per_block * self.blocks_per_halfcore
