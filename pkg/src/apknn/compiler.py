"""Compiles bit-vector datasets into distance-scoring automata.

Each dataset vector becomes a pair of macros. The scoring macro walks the
frame's payload symbols behind a SOF guard and funnels per-dimension match
signals through a balanced collector tree into a counter, so the counter
ends the payload phase at d - HD. The ranking macro then lets a
self-looping hold STE increment the same counter once per fill cycle; the
counter crosses its threshold d after exactly HD extra cycles, which turns
report time into distance. A delay chain as deep as the collector tree
keeps the two increment phases from ever sharing a cycle, since the
single-step increment port would collapse simultaneous hits.

With SOF at frame offset 0 a distance-0 report lands at offset d + L + 2
(L = collector depth); that offset is the layout's calibration base.

Three structural rewrites are supported: vector packing (a shared
two-rails-per-position trellis replaces per-vector star chains),
stream multiplexing (seven query slices, one per payload bit), and
statistical reduction (per-group counters that reset a group's scoring
counters after k' distinct report cycles). The counter-increment variant
instead packs seven dimensions per symbol and drives the counter's
multi-driver increment port straight from the match STEs.
"""

from __future__ import annotations

import dataclasses
import functools
import itertools
import json
from dataclasses import dataclass

import numpy as np

from .codec import EOF, SOF, KnnResult, QueryBatch, StreamLayout, decode, encode
from .fabric import (
    Automaton,
    BooleanGate,
    Counter,
    FabricConfig,
    InvalidAutomatonError,
    Ste,
    SymbolClass,
    simulate,
    validate,
)
from .fabric import image as fabric_image

__all__ = [
    "DatasetPartition",
    "partition_dataset",
    "Reduction",
    "CompileOptions",
    "BoardImage",
    "build_hamming_macro",
    "build_sorting_macro",
    "apply_vector_packing",
    "apply_stream_multiplexing",
    "apply_statistical_reduction",
    "build_comparison_macro",
    "compile_partition",
    "collector_depth",
    "hamming_scan",
]

_STAR = SymbolClass.all_symbols()
_DATA = SymbolClass.from_predicate(lambda s: s < 128)
_SOF_CLASS = SymbolClass.from_symbols([SOF])
_EOF_CLASS = SymbolClass.from_symbols([EOF])
# Hold STE survives fill symbols and dies at EOF; bit 7 + bit 0 suffice.
_HOLD = SymbolClass.from_predicate(lambda s: s >= 128 and not s & 1)
_NEVER_FIRE = 1 << 30


@functools.lru_cache(maxsize=None)
def _payload_match(bit: int, value: int) -> SymbolClass:
    return SymbolClass.from_predicate(
        lambda s: s < 128 and (s >> bit) & 1 == value)


def collector_depth(d: int, fanin: int) -> int:
    """Levels of a balanced fan-in-limited reduction tree over d leaves."""
    if d < 2:
        return 0
    depth, width = 0, d
    while width > 1:
        width = -(-width // fanin)
        depth += 1
    return depth


@dataclass
class DatasetPartition:
    """A capacity-bounded slice of the dataset, vectors sorted by id."""

    ids: np.ndarray
    vectors: np.ndarray
    index: int = 0

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.vectors = np.asarray(self.vectors, dtype=np.uint8)
        if self.vectors.ndim != 2 or self.vectors.shape[0] == 0:
            raise ValueError("partition needs a nonempty 2D vector array")
        if self.vectors.shape[1] == 0:
            raise ValueError("dimensionality must be positive")
        if self.vectors.max(initial=0) > 1:
            raise ValueError("vector components must be 0 or 1")
        if self.ids.shape != (self.vectors.shape[0],):
            raise ValueError("one id per vector required")
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("vector ids must be unique")
        order = np.argsort(self.ids)
        self.ids = self.ids[order]
        self.vectors = self.vectors[order]

    @classmethod
    def from_rows(cls, rows, index: int = 0) -> "DatasetPartition":
        ids, vecs = zip(*rows)
        return cls(np.array(ids), np.array(vecs), index)

    @classmethod
    def from_vectors(cls, vectors, index: int = 0) -> "DatasetPartition":
        v = np.atleast_2d(np.asarray(vectors))
        return cls(np.arange(v.shape[0]), v, index)

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]


def partition_dataset(vectors, capacity: int,
                      ids=None) -> list[DatasetPartition]:
    """Split a dataset into id-ordered partitions of at most ``capacity``."""
    if capacity < 1:
        raise ValueError("capacity must be positive")
    v = np.atleast_2d(np.asarray(vectors))
    ids = np.arange(v.shape[0]) if ids is None else np.asarray(ids)
    order = np.argsort(ids)
    ids, v = ids[order], v[order]
    return [DatasetPartition(ids[lo: lo + capacity], v[lo: lo + capacity],
                             index=pi)
            for pi, lo in enumerate(range(0, v.shape[0], capacity))]


@dataclass(frozen=True)
class Reduction:
    """Group suppression parameters: group size p, report budget k'."""

    group_size: int
    budget: int

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("report budget must be at least 1")
        if self.group_size < self.budget:
            raise ValueError("group size must be at least the budget")


@dataclass(frozen=True)
class CompileOptions:
    packing_factor: int = 1
    multiplexing: bool = False
    reduction: Reduction | None = None
    counter_increment: bool = False
    dynamic_threshold: bool = False
    fan_in: int = 16

    def __post_init__(self):
        if self.packing_factor < 1:
            raise ValueError("packing factor must be at least 1")
        if self.fan_in < 2:
            raise ValueError("fan-in must be at least 2")
        if self.multiplexing and self.counter_increment:
            raise ValueError(
                "multiplexing and counter-increment both claim the payload "
                "bits; enable at most one")
        if self.counter_increment and self.packing_factor > 1:
            raise ValueError(
                "vector packing is not supported together with "
                "counter-increment scoring")

    def to_document(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["reduction"] = (dataclasses.asdict(self.reduction)
                            if self.reduction else None)
        return doc

    @classmethod
    def from_document(cls, doc: dict) -> "CompileOptions":
        doc = dict(doc)
        red = doc.get("reduction")
        if red is not None:
            doc["reduction"] = Reduction(**red)
        return cls(**doc)


class _Builder:
    """Accumulates elements; counters stay mutable until finalize."""

    def __init__(self):
        self._ids = itertools.count()
        self.stes: list[Ste] = []
        self.counters: list[dict] = []
        self.gates: list[BooleanGate] = []
        self.edges: list[tuple[int, int]] = []
        self.roles: list[list] = []

    def ste(self, symbol_class, *, start=False, report=False, tag=None,
            role="", vec=-1) -> int:
        eid = next(self._ids)
        self.stes.append(Ste(eid, symbol_class, start=start, report=report,
                             report_tag=tag))
        self.roles.append([eid, role, vec])
        return eid

    def counter(self, *, threshold=None, threshold_counter=None, inc=(),
                rst=(), role="", vec=-1) -> int:
        eid = next(self._ids)
        self.counters.append({
            "id": eid, "threshold": threshold,
            "threshold_counter": threshold_counter,
            "inc": list(inc), "rst": list(rst)})
        self.roles.append([eid, role, vec])
        return eid

    def add_reset_driver(self, counter_id: int, driver: int):
        for rec in self.counters:
            if rec["id"] == counter_id:
                rec["rst"].append(driver)
                return
        raise KeyError(counter_id)

    def edge(self, src: int, dst: int):
        self.edges.append((src, dst))

    def finalize(self, metadata: dict) -> Automaton:
        counters = [
            Counter(rec["id"], threshold=rec["threshold"],
                    threshold_counter=rec["threshold_counter"],
                    increment_drivers=tuple(rec["inc"]),
                    reset_drivers=tuple(rec["rst"]))
            for rec in self.counters]
        metadata = dict(metadata)
        metadata["roles"] = self.roles
        return Automaton(stes=list(self.stes), counters=counters,
                         gates=list(self.gates), edges=list(self.edges),
                         metadata=metadata)


@dataclass
class HammingFragment:
    guard: int
    stars: list[int]
    matches: list[int]
    chain_end: int
    collector_root: int | None
    depth: int


@dataclass
class SortingFragment:
    hold: int
    eof: int
    counter: int
    report: int


def build_hamming_macro(vector, d: int | None = None, fanin: int = 16,
                        builder: _Builder | None = None,
                        vec: int = -1) -> HammingFragment:
    """Emit the scoring half of one vector's macro into ``builder``.

    Guard + star chain + per-dimension match STEs + balanced collector
    tree. The returned fragment's collector root (or the lone match when
    d = 1) is what the vector's counter must take increments from.
    """
    vector = np.asarray(vector).ravel()
    if d is not None and len(vector) != d:
        raise ValueError(f"vector has {len(vector)} components, expected {d}")
    d = len(vector)
    if d == 0:
        raise ValueError("dimensionality must be positive")
    b = builder if builder is not None else _Builder()
    guard = b.ste(_SOF_CLASS, start=True, role="guard", vec=vec)
    prev = guard
    stars, matches = [], []
    for i in range(d):
        v = int(vector[i])
        m = b.ste(_payload_match(0, v), role=f"match{v}", vec=vec)
        b.edge(prev, m)
        matches.append(m)
        s = b.ste(_DATA, role="star", vec=vec)
        b.edge(prev, s)
        stars.append(s)
        prev = s
    root, depth = _collector_tree(b, matches, fanin, vec)
    return HammingFragment(guard=guard, stars=stars, matches=matches,
                           chain_end=stars[-1], collector_root=root,
                           depth=depth)


def _collector_tree(b: _Builder, leaves: list[int], fanin: int,
                    vec: int) -> tuple[int | None, int]:
    if len(leaves) < 2:
        return None, 0
    level, depth = leaves, 0
    while len(level) > 1:
        nxt = []
        for lo in range(0, len(level), fanin):
            node = b.ste(_STAR, role="collector", vec=vec)
            for leaf in level[lo: lo + fanin]:
                b.edge(leaf, node)
            nxt.append(node)
        level = nxt
        depth += 1
    return level[0], depth


def build_sorting_macro(d: int, delay_levels: int, *, builder: _Builder,
                        chain_end, increment_sources: list[int],
                        report_tag: int, vec: int = -1) -> SortingFragment:
    """Emit the ranking half: delay chain, hold STE, EOF reset, counter.

    ``increment_sources`` are the scoring-phase increment drivers (the
    collector root, or raw match STEs when no tree exists). ``chain_end``
    is the element (or elements) whose activity marks the last payload
    cycle; ``delay_levels`` star nodes are chained off it so the hold STE
    starts incrementing one cycle after the deepest scoring increment can
    land. Pass ``delay_levels=0`` with a pre-built shared chain's tail to
    reuse a delay chain across vectors.
    """
    if delay_levels < 0:
        raise ValueError("delay depth cannot be negative")
    b = builder
    tail = list(chain_end) if isinstance(chain_end, (list, tuple)) \
        else [chain_end]
    for _ in range(delay_levels):
        node = b.ste(_STAR, role="delay", vec=vec)
        for src in tail:
            b.edge(src, node)
        tail = [node]
    hold = b.ste(_HOLD, role="hold", vec=vec)
    for src in tail:
        b.edge(src, hold)
    b.edge(hold, hold)
    eof = b.ste(_EOF_CLASS, role="eof", vec=vec)
    b.edge(hold, eof)
    counter = b.counter(threshold=d,
                        inc=tuple(increment_sources) + (hold,),
                        rst=(eof,), role="distctr", vec=vec)
    report = b.ste(_STAR, report=True, tag=report_tag, role="report", vec=vec)
    b.edge(counter, report)
    return SortingFragment(hold=hold, eof=eof, counter=counter, report=report)


def apply_vector_packing(vectors, fanin: int = 16,
                         fan_out_limit: int = 64, *,
                         builder: _Builder | None = None,
                         tags: list[int] | None = None,
                         vec_base: int = 0) -> list[SortingFragment]:
    """Emit one packed macro holding all of ``vectors``.

    A single guard feeds a trellis with a value-0 and a value-1 STE per
    position, each position fully connected to the next. Every vector taps
    the trellis states matching its own bits through a private collector
    tree and keeps a private ranking macro; only the guard, trellis, and
    delay chain are shared. Reports are identical to the unpacked build.
    """
    vecs = np.atleast_2d(np.asarray(vectors))
    n, d = vecs.shape
    if d == 0:
        raise ValueError("dimensionality must be positive")
    trellis_fan_out = 2 + n
    if trellis_fan_out > fan_out_limit:
        raise ValueError(
            f"packing {n} vectors needs trellis fan-out {trellis_fan_out} "
            f"over the limit {fan_out_limit}; maximal legal packing factor "
            f"is {fan_out_limit - 2}")
    b = builder if builder is not None else _Builder()
    tags = tags if tags is not None else list(range(n))
    guard = b.ste(_SOF_CLASS, start=True, role="guard", vec=-1)
    rails: list[tuple[int, int]] = []
    prev: tuple[int, ...] = (guard,)
    for _ in range(d):
        zero = b.ste(_payload_match(0, 0), role="ladder0", vec=-1)
        one = b.ste(_payload_match(0, 1), role="ladder1", vec=-1)
        for src in prev:
            b.edge(src, zero)
            b.edge(src, one)
        rails.append((zero, one))
        prev = (zero, one)
    depth = collector_depth(d, fanin)
    shared_tail: list[int] = list(prev)
    for _ in range(depth):
        node = b.ste(_STAR, role="delay", vec=-1)
        for src in shared_tail:
            b.edge(src, node)
        shared_tail = [node]
    fragments = []
    for vi in range(n):
        taps = [rails[i][int(vecs[vi, i])] for i in range(d)]
        root, _ = _collector_tree(b, taps, fanin, vec_base + vi)
        inc = [root] if root is not None else taps
        frag = build_sorting_macro(
            d, 0, builder=b, chain_end=shared_tail,
            increment_sources=inc, report_tag=tags[vi], vec=vec_base + vi)
        fragments.append(frag)
    return fragments


def _build_counter_vector(b: _Builder, vector, tag: int,
                          vec: int) -> SortingFragment:
    """Seven-dimensions-per-symbol variant of one vector's macro.

    Payload symbol j carries dimensions 7j..7j+6 in its low bits. Match
    STEs drive the counter's multi-driver increment port directly, so up
    to seven matches land in one cycle; needs a fabric with the
    increment-by-n extension enabled.
    """
    vector = np.asarray(vector).ravel()
    d = len(vector)
    blocks = -(-d // 7)
    guard = b.ste(_SOF_CLASS, start=True, role="guard", vec=vec)
    enables = [guard]
    for _ in range(blocks):
        s = b.ste(_DATA, role="star", vec=vec)
        b.edge(enables[-1], s)
        enables.append(s)
    matches = []
    for i in range(d):
        block = i // 7
        m = b.ste(_payload_match(i % 7, int(vector[i])),
                  role=f"match{int(vector[i])}", vec=vec)
        b.edge(enables[block], m)
        matches.append(m)
    return build_sorting_macro(d, 0, builder=b, chain_end=enables[-1],
                               increment_sources=matches, report_tag=tag,
                               vec=vec)


def _base_layout(d: int, mode: str, fanin: int, ids) -> StreamLayout:
    tags = {t: (0, int(vid)) for t, vid in enumerate(ids)}
    if mode == "counter":
        data = -(-d // 7)
        fill = d + 1
        base = data + 2
    else:
        depth = collector_depth(d, fanin)
        data = d
        fill = d + depth + 1
        base = d + depth + 2
    return StreamLayout(d=d, data_symbols=data, fill_symbols=fill,
                        calibration_base=base, tags=tags, slices=1,
                        mode=mode)


def _validated(automaton: Automaton, config: FabricConfig) -> Automaton:
    diagnostics = validate(automaton, config)
    if diagnostics:
        raise InvalidAutomatonError(diagnostics)
    return automaton


@dataclass
class BoardImage:
    """A compiled partition: automaton plus the stream contract around it."""

    automaton: Automaton
    layout: StreamLayout
    options: CompileOptions
    config: FabricConfig

    @property
    def n(self) -> int:
        return int(self.automaton.metadata["n"])

    @property
    def d(self) -> int:
        return self.layout.d

    def run(self, queries, k: int | None = None) -> list[KnnResult]:
        """Encode queries, drive the fabric, decode reports to neighbors."""
        if not isinstance(queries, QueryBatch):
            queries = QueryBatch.from_vectors(queries)
        stream = encode(queries, self.layout)
        events = simulate(self.automaton, stream, self.config)
        return decode(events, self.layout, queries, k=k)

    def to_document(self) -> dict:
        return {
            "format": "apknn-board",
            "version": 1,
            "automaton": fabric_image.to_document(self.automaton),
            "layout": self.layout.to_document(),
            "options": self.options.to_document(),
            "config": dataclasses.asdict(self.config),
        }

    @classmethod
    def from_document(cls, doc: dict) -> "BoardImage":
        if doc.get("format") != "apknn-board":
            raise ValueError("not a board image document")
        if doc.get("version") != 1:
            raise ValueError(f"unsupported board image version "
                             f"{doc.get('version')!r}")
        return cls(
            automaton=fabric_image.from_document(doc["automaton"]),
            layout=StreamLayout.from_document(doc["layout"]),
            options=CompileOptions.from_document(doc["options"]),
            config=FabricConfig(**doc["config"]),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_document(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "BoardImage":
        with open(path) as fh:
            return cls.from_document(json.load(fh))


def _resolve_config(options: CompileOptions,
                    config: FabricConfig | None) -> FabricConfig:
    if config is None:
        return FabricConfig(increment_by_n=options.counter_increment,
                            dynamic_threshold=options.dynamic_threshold)
    if options.counter_increment and not config.increment_by_n:
        raise ValueError("counter-increment scoring needs a fabric with "
                         "increment_by_n enabled")
    if options.dynamic_threshold and not config.dynamic_threshold:
        raise ValueError("dynamic thresholds requested but disabled in the "
                         "fabric configuration")
    return config


def compile_partition(partition, options: CompileOptions | None = None,
                      config: FabricConfig | None = None,
                      capacity: int | None = None) -> BoardImage:
    """Compile one dataset partition into a runnable board image.

    Builds the per-vector macros first, then layers the requested
    rewrites: statistical reduction before stream multiplexing, since the
    multiplexer clones whatever suppression circuitry exists into every
    query slice.
    """
    if not isinstance(partition, DatasetPartition):
        partition = DatasetPartition.from_vectors(partition)
    options = options if options is not None else CompileOptions()
    config = _resolve_config(options, config)
    n, d = len(partition), partition.d
    if capacity is not None and n > capacity:
        raise ValueError(f"partition holds {n} vectors but the board "
                         f"capacity at d={d} is {capacity}")
    if options.counter_increment and config.increment_cap < 7:
        raise ValueError("counter-increment scoring lands up to seven "
                         "matches per cycle; increment cap is too low")

    b = _Builder()
    if options.counter_increment:
        mode = "counter"
        for vi in range(n):
            _build_counter_vector(b, partition.vectors[vi], tag=vi, vec=vi)
    elif options.packing_factor > 1:
        mode = "serial"
        P = options.packing_factor
        for lo in range(0, n, P):
            hi = min(lo + P, n)
            apply_vector_packing(
                partition.vectors[lo:hi], fanin=options.fan_in,
                fan_out_limit=config.fan_out_limit, builder=b,
                tags=list(range(lo, hi)), vec_base=lo)
    else:
        mode = "serial"
        depth = collector_depth(d, options.fan_in)
        for vi in range(n):
            frag = build_hamming_macro(partition.vectors[vi],
                                       fanin=options.fan_in, builder=b,
                                       vec=vi)
            inc = ([frag.collector_root] if frag.collector_root is not None
                   else frag.matches)
            build_sorting_macro(d, depth, builder=b,
                                chain_end=frag.chain_end,
                                increment_sources=inc, report_tag=vi,
                                vec=vi)

    base_options = dataclasses.replace(options, multiplexing=False,
                                       reduction=None)
    metadata = {"kind": "knn", "n": n, "d": d, "mode": mode,
                "partition": partition.index,
                "vector_ids": [int(x) for x in partition.ids]}
    automaton = _validated(b.finalize(metadata), config)
    layout = _base_layout(d, mode, options.fan_in, partition.ids)
    image = BoardImage(automaton, layout, base_options, config)
    if options.reduction is not None:
        image = apply_statistical_reduction(image,
                                            options.reduction.group_size,
                                            options.reduction.budget)
    if options.multiplexing:
        image = apply_stream_multiplexing(image)
    return image


def _roles_of(automaton: Automaton) -> list[list]:
    roles = automaton.metadata.get("roles")
    if roles is None:
        raise ValueError("automaton carries no role table; only compiler "
                         "output can be rewritten")
    return roles


def apply_statistical_reduction(image: BoardImage, group_size: int,
                                budget: int) -> BoardImage:
    """Attach per-group report suppression to a compiled image.

    Vectors are grouped by ``group_size`` consecutive macro positions. A
    group collector STE listens to the group's distance-counter pulses;
    a limit counter with threshold ``budget`` counts the cycles on which
    any group member reported and, on crossing, resets every distance
    counter in the group. Suppression therefore engages two cycles after
    the budget-filling report, so up to two later report cycles can leak
    through; the first ``budget`` distinct report cycles always get out.
    The limit counter rearms at the group's first EOF STE each frame.
    """
    Reduction(group_size, budget)
    if image.options.reduction is not None:
        raise ValueError("statistical reduction was already applied")
    if image.layout.slices != 1:
        raise ValueError("apply statistical reduction before stream "
                         "multiplexing")
    if group_size > image.config.fan_in_limit:
        raise ValueError(f"group size {group_size} exceeds the group "
                         f"collector fan-in limit "
                         f"{image.config.fan_in_limit}")
    a = image.automaton
    roles = _roles_of(a)
    ctr_of: dict[int, int] = {}
    eof_of: dict[int, int] = {}
    for eid, role, vec in roles:
        if role == "distctr":
            ctr_of[vec] = eid
        elif role == "eof":
            eof_of[vec] = eid
    order = sorted(ctr_of)
    next_id = 1 + max(e.id for e in a.elements())
    stes = list(a.stes)
    counters = {c.id: c for c in a.counters}
    edges = list(a.edges)
    new_roles = [list(r) for r in roles]
    for lo in range(0, len(order), group_size):
        group = order[lo: lo + group_size]
        collect = next_id
        next_id += 1
        stes.append(Ste(collect, _STAR))
        new_roles.append([collect, "groupcollect", -1])
        for vec in group:
            edges.append((ctr_of[vec], collect))
        limit = next_id
        next_id += 1
        counters[limit] = Counter(limit, threshold=budget,
                                  increment_drivers=(collect,),
                                  reset_drivers=(eof_of[group[0]],))
        new_roles.append([limit, "limit", -1])
        for vec in group:
            old = counters[ctr_of[vec]]
            counters[old.id] = dataclasses.replace(
                old, reset_drivers=old.reset_drivers + (limit,))
    metadata = dict(a.metadata)
    metadata["roles"] = new_roles
    rebuilt = _validated(
        Automaton(stes=stes, counters=list(counters.values()),
                  gates=list(a.gates), edges=edges, metadata=metadata),
        image.config)
    options = dataclasses.replace(image.options,
                                  reduction=Reduction(group_size, budget))
    return BoardImage(rebuilt, image.layout, options, image.config)


_MUX_SLICES = 7


def apply_stream_multiplexing(image: BoardImage) -> BoardImage:
    """Clone a serial image across the seven payload bit lanes.

    Slice b answers the query carried in payload bit b. The clone for
    slice b shifts every element id and report tag by a fixed stride and
    retargets only the match and trellis STEs from bit 0 to bit b;
    guards, stars, collectors, and counters are bit-agnostic. Frame
    geometry is unchanged, so per-slice reports decode exactly as in the
    serial image.
    """
    if image.layout.mode != "serial":
        raise ValueError("stream multiplexing applies to serial images "
                         f"only, not mode {image.layout.mode!r}")
    a = image.automaton
    roles = _roles_of(a)
    role_of = {eid: role for eid, role, _ in roles}
    id_stride = 1 + max(e.id for e in a.elements())
    tag_stride = 1 + max(image.layout.tags)
    stes = list(a.stes)
    counters = list(a.counters)
    gates = list(a.gates)
    edges = list(a.edges)
    new_roles = [list(r) for r in roles]
    tags = dict(image.layout.tags)
    retarget = {"match0": 0, "match1": 1, "ladder0": 0, "ladder1": 1}
    for s in range(1, _MUX_SLICES):
        off = s * id_stride
        for ste in a.stes:
            role = role_of[ste.id]
            cls = ste.symbol_class
            if role in retarget:
                cls = _payload_match(s, retarget[role])
            tag = ste.report_tag
            if ste.report:
                tag = ste.report_tag + s * tag_stride
            stes.append(Ste(ste.id + off, cls, start=ste.start,
                            report=ste.report, report_tag=tag))
        for c in a.counters:
            counters.append(dataclasses.replace(
                c, id=c.id + off,
                threshold_counter=(None if c.threshold_counter is None
                                   else c.threshold_counter + off),
                increment_drivers=tuple(x + off
                                        for x in c.increment_drivers),
                reset_drivers=tuple(x + off for x in c.reset_drivers)))
        for g in a.gates:
            gates.append(dataclasses.replace(
                g, id=g.id + off, inputs=tuple(x + off for x in g.inputs)))
        for src, dst in a.edges:
            edges.append((src + off, dst + off))
        for eid, role, vec in roles:
            new_roles.append([eid + off, role, vec])
        for t, (_, vid) in image.layout.tags.items():
            tags[t + s * tag_stride] = (s, vid)
    metadata = dict(a.metadata)
    metadata["roles"] = new_roles
    metadata["mode"] = "multiplexed"
    rebuilt = _validated(
        Automaton(stes=stes, counters=counters, gates=gates, edges=edges,
                  metadata=metadata),
        image.config)
    layout = StreamLayout(
        d=image.layout.d, data_symbols=image.layout.data_symbols,
        fill_symbols=image.layout.fill_symbols,
        calibration_base=image.layout.calibration_base, tags=tags,
        slices=_MUX_SLICES, mode="multiplexed")
    options = dataclasses.replace(image.options, multiplexing=True)
    return BoardImage(rebuilt, layout, options, image.config)


def build_comparison_macro(class_a: SymbolClass, class_b: SymbolClass,
                           report_tag: int = 0,
                           config: FabricConfig | None = None) -> Automaton:
    """Two racing counters: the report STE fires once A's tally passes B's.

    Each class gets a start STE that increments its own counter; counter
    A takes its threshold from counter B's running value, so the report
    marks the first cycle where A's count strictly exceeds B's count as
    of the previous cycle. Needs the dynamic-threshold extension.
    """
    if config is None:
        config = FabricConfig(dynamic_threshold=True)
    if not config.dynamic_threshold:
        raise ValueError("comparison macros need the dynamic-threshold "
                         "extension enabled")
    b = _Builder()
    watch_a = b.ste(class_a, start=True, role="cmp_a")
    watch_b = b.ste(class_b, start=True, role="cmp_b")
    ctr_b = b.counter(threshold=_NEVER_FIRE, inc=(watch_b,), role="cmp_ctr_b")
    ctr_a = b.counter(threshold_counter=ctr_b, inc=(watch_a,),
                      role="cmp_ctr_a")
    report = b.ste(_STAR, report=True, tag=report_tag, role="report")
    b.edge(ctr_a, report)
    return _validated(b.finalize({"kind": "comparison"}), config)


def hamming_scan(vectors, queries, options: CompileOptions | None = None,
                 config: FabricConfig | None = None,
                 k: int | None = None) -> list[KnnResult]:
    """Compile ``vectors`` as one partition and answer ``queries`` on it."""
    image = compile_partition(vectors, options=options, config=config)
    return image.run(queries, k=k)
