"""Cycle-accurate model of an automata-processing fabric."""

from .elements import (
    GATE_OPS,
    Automaton,
    BooleanGate,
    Counter,
    FabricConfig,
    ReportEvent,
    Ste,
    SymbolClass,
)
from .image import dumps, load, loads, save
from .simulate import Simulator, SimState, new_state, reset, simulate, step
from .validate import Diagnostic, InvalidAutomatonError, validate

__all__ = [
    "Automaton",
    "BooleanGate",
    "Counter",
    "Diagnostic",
    "FabricConfig",
    "GATE_OPS",
    "InvalidAutomatonError",
    "ReportEvent",
    "SimState",
    "Simulator",
    "Ste",
    "SymbolClass",
    "dumps",
    "load",
    "loads",
    "new_state",
    "reset",
    "save",
    "simulate",
    "step",
    "validate",
]
