"""Automata-fabric simulation and kNN compilation for Hamming-space search."""

__version__ = "0.1.0"
