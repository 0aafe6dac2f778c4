"""Cycle-accurate simulation of automata on the fabric.

Timing model: every wire carries one step of delay. An element's output at
step t is visible to its consumers at step t+1.

* An STE is active at step t iff its class matches the step-t symbol and it
  is either a start STE or some driver's output was true at step t-1.
* A counter applies its step t-1 driver outputs at step t. A reset wins over
  a simultaneous increment, zeroes the count, and re-arms the fired latch.
  With the single-step port the increment is +1 regardless of how many
  drivers were active; with the multi-driver port it is the number of active
  increment drivers, capped. The threshold test runs after the update. A
  static threshold fires at count >= threshold; a counter-valued threshold
  fires at count > other counter's count as of the end of step t-1. The
  pulse lasts one step and does not repeat until after a reset.
* Boolean elements settle within step t over same-step outputs and drive
  consumers at t+1.

Reported events are emitted at the active step's stream offset and returned
sorted by (offset, tag).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .elements import Automaton, FabricConfig, ReportEvent
from .validate import InvalidAutomatonError, validate

__all__ = ["Simulator", "SimState", "simulate", "reset", "new_state", "step"]


@dataclass
class SimState:
    """Mutable per-stream state; create via ``Simulator.new_state``."""

    sim: "Simulator"
    prev_out: list[int]
    counts: list[int]
    fired: list[bool]
    prev_ref_counts: dict[int, int]
    offset: int = 0
    _stamp: int = 0
    _stamps: list[int] = field(default_factory=list)


class Simulator:
    """Compiled form of one automaton, reusable across streams."""

    def __init__(self, automaton: Automaton, config: FabricConfig | None = None):
        config = config or FabricConfig()
        diags = validate(automaton, config)
        if diags:
            raise InvalidAutomatonError(diags)
        self.config = config

        ids = [e.id for e in automaton.elements()]
        self._index = {eid: i for i, eid in enumerate(ids)}
        n = len(ids)
        idx = self._index

        self._n_stes = len(automaton.stes)
        self._masks = [s.symbol_class.mask for s in automaton.stes]
        self._tags: list[int | None] = [
            s.report_tag if s.report else None for s in automaton.stes]

        self._out_ste: list[list[int]] = [[] for _ in range(n)]
        self._out_inc: list[list[int]] = [[] for _ in range(n)]
        self._out_rst: list[list[int]] = [[] for _ in range(n)]
        for src, dst in automaton.edges:
            self._out_ste[idx[src]].append(idx[dst])

        base_c = self._n_stes
        self._n_counters = len(automaton.counters)
        self._thresholds: list[int] = []
        self._thr_src: list[int] = []  # -1 for static
        referenced: set[int] = set()
        for ci, c in enumerate(automaton.counters):
            if c.threshold is not None:
                self._thresholds.append(c.threshold)
                self._thr_src.append(-1)
            else:
                self._thresholds.append(0)
                ref = self._counter_pos(automaton, c.threshold_counter)
                self._thr_src.append(ref)
                referenced.add(ref)
            for drv in c.increment_drivers:
                self._out_inc[idx[drv]].append(ci)
            for drv in c.reset_drivers:
                self._out_rst[idx[drv]].append(ci)
        self._referenced = sorted(referenced)
        self._dynamic = [ci for ci in range(self._n_counters)
                         if self._thr_src[ci] >= 0]

        # Booleans in dependency order so one pass settles the cycle.
        gate_by_id = {g.id: g for g in automaton.gates}
        order: list[int] = []
        mark: dict[int, int] = {}

        def visit(gid: int):
            mark[gid] = 1
            for ref in gate_by_id[gid].inputs:
                if ref in gate_by_id and mark.get(ref, 0) == 0:
                    visit(ref)
            mark[gid] = 2
            order.append(gid)

        for g in automaton.gates:
            if mark.get(g.id, 0) == 0:
                visit(g.id)
        self._gates = [
            (idx[gid], gate_by_id[gid].truth_table,
             idx[gate_by_id[gid].inputs[0]], idx[gate_by_id[gid].inputs[1]])
            for gid in order]

        self._starts_by_symbol: list[list[int]] = [[] for _ in range(256)]
        for i, s in enumerate(automaton.stes):
            if s.start:
                m = s.symbol_class.mask
                for sym in range(256):
                    if (m >> sym) & 1:
                        self._starts_by_symbol[sym].append(i)

        self._n = n

    def _counter_pos(self, automaton: Automaton, counter_id: int) -> int:
        for ci, c in enumerate(automaton.counters):
            if c.id == counter_id:
                return ci
        raise KeyError(counter_id)

    def new_state(self) -> SimState:
        return SimState(
            sim=self,
            prev_out=[],
            counts=[0] * self._n_counters,
            fired=[False] * self._n_counters,
            prev_ref_counts={ci: 0 for ci in self._referenced},
            _stamps=[0] * self._n,
        )

    def step(self, state: SimState, symbol: int) -> list[ReportEvent]:
        if not 0 <= symbol <= 255:
            raise ValueError(f"symbol {symbol} out of range")
        if state.sim is not self:
            raise ValueError("state belongs to a different simulator")

        state._stamp += 1
        stamp = state._stamp
        stamps = state._stamps
        masks = self._masks
        base_c = self._n_stes

        active: list[int] = []
        inc: dict[int, int] = {}
        rst: set[int] = set()
        for e in state.prev_out:
            for t in self._out_ste[e]:
                if stamps[t] != stamp:
                    stamps[t] = stamp
                    if (masks[t] >> symbol) & 1:
                        active.append(t)
            for ci in self._out_inc[e]:
                inc[ci] = inc.get(ci, 0) + 1
            for ci in self._out_rst[e]:
                rst.add(ci)
        for t in self._starts_by_symbol[symbol]:
            if stamps[t] != stamp:
                stamps[t] = stamp
                active.append(t)

        counts = state.counts
        fired = state.fired
        pulses: list[int] = []
        touched = set(inc)
        touched.update(rst)
        for ci in rst:
            counts[ci] = 0
            fired[ci] = False
        cap = self.config.increment_cap
        by_n = self.config.increment_by_n
        for ci, hits in inc.items():
            if ci in rst:
                continue
            counts[ci] += min(hits, cap) if by_n else 1
        check = touched.union(self._dynamic) if self._dynamic else touched
        for ci in check:
            if fired[ci]:
                continue
            src = self._thr_src[ci]
            if src < 0:
                crossed = counts[ci] >= self._thresholds[ci]
            else:
                crossed = counts[ci] > state.prev_ref_counts[src]
            if crossed:
                fired[ci] = True
                pulses.append(ci)
        for ci in self._referenced:
            state.prev_ref_counts[ci] = counts[ci]

        out_now = active + [base_c + ci for ci in pulses]
        if self._gates:
            truth = set(out_now)
            for gi, table, a, b in self._gates:
                bit = ((a in truth) << 1) | (b in truth)
                if (table >> bit) & 1:
                    truth.add(gi)
                    out_now.append(gi)

        events = []
        tags = self._tags
        for t in active:
            tag = tags[t]
            if tag is not None:
                events.append(ReportEvent(tag, state.offset))
        events.sort()

        state.prev_out = out_now
        state.offset += 1
        return events

    def run(self, state: SimState,
            stream: Iterable[int]) -> list[ReportEvent]:
        events: list[ReportEvent] = []
        empty = True
        for symbol in stream:
            empty = False
            events.extend(self.step(state, symbol))
        if empty and state.offset == 0:
            raise ValueError("symbol stream is empty")
        return events


def simulate(automaton: Automaton, stream: Sequence[int],
             config: FabricConfig | None = None) -> list[ReportEvent]:
    """Run ``stream`` from a fresh state and return all report events."""
    sim = Simulator(automaton, config)
    return sim.run(sim.new_state(), stream)


def reset(automaton: Automaton,
          config: FabricConfig | None = None) -> SimState:
    """Fresh stepping state for ``automaton``: nothing active, counters 0."""
    return Simulator(automaton, config).new_state()


new_state = reset


def step(state: SimState, symbol: int) -> tuple[SimState, list[ReportEvent]]:
    """Advance one symbol; returns the (mutated) state and its events."""
    return state, state.sim.step(state, symbol)
