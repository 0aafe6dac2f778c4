"""JSON persistence for automata.

The on-disk form is versioned and deterministic: elements and edges are
sorted, symbol classes are 64-digit hex masks, and key order is fixed, so
identical automata serialize to identical bytes.
"""

from __future__ import annotations

import json

from .elements import Automaton, BooleanGate, Counter, Ste, SymbolClass

__all__ = ["to_document", "from_document", "dumps", "loads", "save", "load"]

FORMAT = "apknn-automaton"
VERSION = 1


def to_document(automaton: Automaton) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "stes": [
            {
                "id": s.id,
                "class": s.symbol_class.to_hex(),
                "start": s.start,
                "report": s.report,
                "tag": s.report_tag,
            }
            for s in sorted(automaton.stes, key=lambda s: s.id)
        ],
        "counters": [
            {
                "id": c.id,
                "threshold": c.threshold,
                "threshold_counter": c.threshold_counter,
                "increment": list(c.increment_drivers),
                "reset": list(c.reset_drivers),
            }
            for c in sorted(automaton.counters, key=lambda c: c.id)
        ],
        "booleans": [
            {"id": g.id, "table": g.truth_table, "inputs": list(g.inputs)}
            for g in sorted(automaton.gates, key=lambda g: g.id)
        ],
        "edges": sorted([src, dst] for src, dst in automaton.edges),
        "metadata": automaton.metadata,
    }


def from_document(doc: dict) -> Automaton:
    if not isinstance(doc, dict):
        raise ValueError("automaton document must be an object")
    if doc.get("format") != FORMAT:
        raise ValueError(f"unrecognized document format {doc.get('format')!r}")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported document version {doc.get('version')!r}")
    try:
        stes = [
            Ste(
                id=int(r["id"]),
                symbol_class=SymbolClass.from_hex(r["class"]),
                start=bool(r["start"]),
                report=bool(r["report"]),
                report_tag=None if r["tag"] is None else int(r["tag"]),
            )
            for r in doc["stes"]
        ]
        counters = [
            Counter(
                id=int(r["id"]),
                threshold=None if r["threshold"] is None else int(r["threshold"]),
                threshold_counter=(
                    None if r["threshold_counter"] is None
                    else int(r["threshold_counter"])),
                increment_drivers=tuple(int(x) for x in r["increment"]),
                reset_drivers=tuple(int(x) for x in r["reset"]),
            )
            for r in doc["counters"]
        ]
        gates = [
            BooleanGate(
                id=int(r["id"]),
                truth_table=int(r["table"]),
                inputs=(int(r["inputs"][0]), int(r["inputs"][1])),
            )
            for r in doc["booleans"]
        ]
        edges = [(int(src), int(dst)) for src, dst in doc["edges"]]
        metadata = doc.get("metadata", {})
    except (KeyError, TypeError, IndexError) as exc:
        raise ValueError(f"malformed automaton document: {exc}") from exc
    return Automaton(stes=stes, counters=counters, gates=gates,
                     edges=edges, metadata=metadata)


def dumps(automaton: Automaton) -> str:
    return json.dumps(to_document(automaton), sort_keys=True, indent=2) + "\n"


def loads(text: str) -> Automaton:
    return from_document(json.loads(text))


def save(automaton: Automaton, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(automaton))


def load(path) -> Automaton:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())
