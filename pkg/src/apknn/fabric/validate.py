"""Structural validation of automata against a fabric configuration.

``validate`` returns a list of diagnostics instead of raising so callers can
report every problem at once. An empty list means the automaton is legal to
place and simulate.
"""

from __future__ import annotations

from dataclasses import dataclass

from .elements import Automaton, BooleanGate, Counter, FabricConfig, Ste

__all__ = ["Diagnostic", "validate", "InvalidAutomatonError"]

_LEGAL_DECOMPOSITION = {1, 2, 4, 8, 16, 32}


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    element: int | None = None


class InvalidAutomatonError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        lines = "; ".join(d.message for d in diagnostics[:8])
        if len(diagnostics) > 8:
            lines += f"; and {len(diagnostics) - 8} more"
        super().__init__(f"invalid automaton: {lines}")


class _UnionFind:
    def __init__(self):
        self.parent: dict[int, int] = {}

    def find(self, x: int) -> int:
        p = self.parent.setdefault(x, x)
        while p != x:
            self.parent[x] = p = self.parent.setdefault(p, p)
            x, p = p, self.parent[p]
        return x

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb


def validate(automaton: Automaton, config: FabricConfig) -> list[Diagnostic]:
    diags: list[Diagnostic] = []

    if config.ste_decomposition_factor not in _LEGAL_DECOMPOSITION:
        diags.append(Diagnostic(
            "config-decomposition",
            f"decomposition factor {config.ste_decomposition_factor} "
            f"is not a power of two in [1, 32]"))
    if config.increment_cap < 1:
        diags.append(Diagnostic(
            "config-increment-cap", "increment cap must be at least 1"))

    by_id: dict[int, object] = {}
    for e in automaton.elements():
        if e.id in by_id:
            diags.append(Diagnostic(
                "duplicate-id", f"element id {e.id} used more than once", e.id))
        by_id[e.id] = e

    def exists(ref: int) -> bool:
        return ref in by_id

    fan_out: dict[int, int] = {}
    fan_in: dict[int, int] = {}
    uf = _UnionFind()

    for src, dst in automaton.edges:
        ok = True
        if not exists(src):
            diags.append(Diagnostic(
                "dangling-edge", f"edge source {src} does not exist", src))
            ok = False
        if not exists(dst):
            diags.append(Diagnostic(
                "dangling-edge", f"edge destination {dst} does not exist", dst))
            ok = False
        if not ok:
            continue
        if not isinstance(by_id[dst], Ste):
            # Counters and booleans take inputs through their own port
            # lists; plain activation edges only terminate at STEs.
            diags.append(Diagnostic(
                "edge-into-port",
                f"edge destination {dst} is not an STE", dst))
            continue
        fan_out[src] = fan_out.get(src, 0) + 1
        fan_in[dst] = fan_in.get(dst, 0) + 1
        uf.union(src, dst)

    for c in automaton.counters:
        has_static = c.threshold is not None
        has_dynamic = c.threshold_counter is not None
        if has_static == has_dynamic:
            diags.append(Diagnostic(
                "counter-threshold",
                f"counter {c.id} needs exactly one threshold source", c.id))
        if has_static and c.threshold < 1:
            diags.append(Diagnostic(
                "counter-threshold",
                f"counter {c.id} threshold must be at least 1", c.id))
        if has_dynamic:
            if not config.dynamic_threshold:
                diags.append(Diagnostic(
                    "counter-dynamic-disabled",
                    f"counter {c.id} uses a counter-valued threshold but the "
                    f"configuration does not enable it", c.id))
            if exists(c.threshold_counter):
                if not isinstance(by_id[c.threshold_counter], Counter):
                    diags.append(Diagnostic(
                        "counter-threshold",
                        f"counter {c.id} threshold reference "
                        f"{c.threshold_counter} is not a counter", c.id))
                else:
                    uf.union(c.id, c.threshold_counter)
            else:
                diags.append(Diagnostic(
                    "dangling-ref",
                    f"counter {c.id} threshold reference "
                    f"{c.threshold_counter} does not exist", c.id))
        for port in (c.increment_drivers, c.reset_drivers):
            for ref in port:
                if not exists(ref):
                    diags.append(Diagnostic(
                        "dangling-ref",
                        f"counter {c.id} driver {ref} does not exist", c.id))
                    continue
                fan_out[ref] = fan_out.get(ref, 0) + 1
                uf.union(ref, c.id)

    gate_inputs: dict[int, tuple[int, int]] = {}
    for g in automaton.gates:
        for ref in g.inputs:
            if not exists(ref):
                diags.append(Diagnostic(
                    "dangling-ref",
                    f"boolean {g.id} input {ref} does not exist", g.id))
                continue
            fan_out[ref] = fan_out.get(ref, 0) + 1
            uf.union(ref, g.id)
        gate_inputs[g.id] = g.inputs

    # Boolean elements settle combinationally within a cycle, so the
    # boolean-to-boolean input graph must be acyclic.
    state: dict[int, int] = {}

    def has_cycle(gid: int) -> bool:
        stack = [(gid, iter(gate_inputs.get(gid, ())))]
        state[gid] = 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for ref in it:
                if ref not in gate_inputs:
                    continue
                s = state.get(ref, 0)
                if s == 1:
                    return True
                if s == 0:
                    state[ref] = 1
                    stack.append((ref, iter(gate_inputs[ref])))
                    advanced = True
                    break
            if not advanced:
                state[node] = 2
                stack.pop()
        return False

    for g in automaton.gates:
        if state.get(g.id, 0) == 0 and has_cycle(g.id):
            diags.append(Diagnostic(
                "boolean-cycle",
                f"boolean {g.id} participates in a combinational cycle",
                g.id))
            break

    seen_tags: dict[int, int] = {}
    for s in automaton.stes:
        if s.report:
            if s.report_tag is None:
                diags.append(Diagnostic(
                    "report-tag",
                    f"reporting STE {s.id} has no report tag", s.id))
            elif s.report_tag in seen_tags:
                diags.append(Diagnostic(
                    "report-tag",
                    f"report tag {s.report_tag} used by STE "
                    f"{seen_tags[s.report_tag]} and STE {s.id}", s.id))
            else:
                seen_tags[s.report_tag] = s.id
        elif s.report_tag is not None:
            diags.append(Diagnostic(
                "report-tag",
                f"STE {s.id} carries a report tag but is not reporting",
                s.id))

    for eid, n in fan_in.items():
        if n > config.fan_in_limit:
            diags.append(Diagnostic(
                "fan-in",
                f"STE {eid} has fan-in {n} over the limit "
                f"{config.fan_in_limit}", eid))
    for eid, n in fan_out.items():
        if n > config.fan_out_limit:
            diags.append(Diagnostic(
                "fan-out",
                f"element {eid} has fan-out {n} over the limit "
                f"{config.fan_out_limit}", eid))

    # A connected component cannot be split across half-cores during
    # placement, so its STE population is capped by one half-core.
    limit = config.halfcore_ste_limit()
    comp_stes: dict[int, int] = {}
    for s in automaton.stes:
        root = uf.find(s.id)
        comp_stes[root] = comp_stes.get(root, 0) + 1
    for root, n in comp_stes.items():
        if n > limit:
            diags.append(Diagnostic(
                "component-too-large",
                f"connected component holds {n} STEs, over the half-core "
                f"limit {limit}", root))

    return diags
