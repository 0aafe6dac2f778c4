"""Query stream encoding and report event decoding.

Queries travel to the fabric as framed symbol streams. Bit 7 marks control
symbols: SOF opens a frame, EOF closes it, FILL pads the scoring region in
between. Payload symbols keep bit 7 clear and carry query bits in bits 0-6.

A ``StreamLayout`` captures the frame geometry a compiled board expects:
how many payload symbols follow SOF, how much fill precedes EOF, the
calibration base (the in-frame offset at which a distance-0 report lands),
and the report tag map. Distances come straight out of report offsets:
``distance = in_frame_offset - calibration_base``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .oracle import Neighbor

__all__ = [
    "SOF",
    "EOF",
    "FILL",
    "StreamLayout",
    "QueryBatch",
    "KnnResult",
    "encode",
    "decode",
    "merge_partitions",
    "results_to_jsonl",
    "results_from_jsonl",
    "stream_to_hex",
    "stream_from_hex",
]

SOF = 0x80
EOF = 0x81
FILL = 0x82

_MODES = ("serial", "multiplexed", "counter")


@dataclass(frozen=True)
class StreamLayout:
    """Frame geometry plus the report-tag map of one compiled board.

    ``tags`` maps report tag -> (slice, vector id). Serial and counter
    streams use slice 0 only; a multiplexed stream carries one query per
    payload bit lane, so slices run 0-6.
    """

    d: int
    data_symbols: int
    fill_symbols: int
    calibration_base: int
    tags: dict[int, tuple[int, int]] = field(default_factory=dict)
    slices: int = 1
    mode: str = "serial"

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"unknown stream mode {self.mode!r}")
        if self.mode == "multiplexed":
            if self.slices != 7:
                raise ValueError("multiplexed streams carry 7 slices")
        elif self.slices != 1:
            raise ValueError(f"{self.mode} streams carry a single slice")
        if self.d < 1:
            raise ValueError("dimensionality must be positive")

    def frame_length(self) -> int:
        return 2 + self.data_symbols + self.fill_symbols

    def to_document(self) -> dict:
        return {
            "d": self.d,
            "data_symbols": self.data_symbols,
            "fill_symbols": self.fill_symbols,
            "calibration_base": self.calibration_base,
            "slices": self.slices,
            "mode": self.mode,
            "tags": [[t, s, v] for t, (s, v) in sorted(self.tags.items())],
        }

    @classmethod
    def from_document(cls, doc: dict) -> "StreamLayout":
        try:
            return cls(
                d=int(doc["d"]),
                data_symbols=int(doc["data_symbols"]),
                fill_symbols=int(doc["fill_symbols"]),
                calibration_base=int(doc["calibration_base"]),
                slices=int(doc["slices"]),
                mode=str(doc["mode"]),
                tags={int(t): (int(s), int(v))
                      for t, s, v in doc["tags"]},
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed stream layout: {exc}") from exc


@dataclass
class QueryBatch:
    """Identified query vectors sharing one dimensionality."""

    ids: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.vectors = np.asarray(self.vectors, dtype=np.uint8)
        if self.vectors.ndim != 2:
            raise ValueError("query vectors must be a 2D array")
        if self.ids.shape != (self.vectors.shape[0],):
            raise ValueError("one id per query required")
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("query ids must be unique")

    @classmethod
    def from_vectors(cls, vectors) -> "QueryBatch":
        v = np.atleast_2d(np.asarray(vectors))
        return cls(np.arange(v.shape[0]), v)

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass
class KnnResult:
    """Scored neighbors for one query, sorted by (distance, vector id)."""

    query_id: int
    neighbors: list[Neighbor]

    def top(self, k: int) -> list[Neighbor]:
        return self.neighbors[:k]


def _as_batch(queries, d: int) -> QueryBatch:
    if isinstance(queries, QueryBatch):
        batch = queries
    else:
        batch = QueryBatch.from_vectors(queries)
    if batch.vectors.shape[1] != d:
        raise ValueError(f"queries must have {d} components")
    if batch.vectors.size and batch.vectors.max() > 1:
        raise ValueError("query components must be 0 or 1")
    return batch


def encode(queries, layout: StreamLayout) -> bytes:
    """Frame ``queries`` into a symbol stream for ``layout``.

    A serial or counter frame carries one query; a multiplexed frame
    carries up to seven, packed one per payload bit. The last multiplexed
    frame of a short batch pads its idle slices with zero bits; decode
    drops their reports.
    """
    batch = _as_batch(queries, layout.d)
    q = batch.vectors
    if q.shape[0] == 0:
        raise ValueError("no queries to encode")
    frames = []
    if layout.mode == "multiplexed":
        for lo in range(0, q.shape[0], 7):
            chunk = q[lo: lo + 7]
            symbols = np.zeros(layout.d, dtype=np.uint8)
            for b in range(chunk.shape[0]):
                symbols |= chunk[b] << b
            frames.append(symbols)
    elif layout.mode == "counter":
        for row in q:
            padded = np.zeros(7 * layout.data_symbols, dtype=np.uint8)
            padded[: layout.d] = row
            lanes = padded.reshape(layout.data_symbols, 7)
            symbols = (lanes << np.arange(7, dtype=np.uint8)).sum(
                axis=1).astype(np.uint8)
            frames.append(symbols)
    else:
        frames.extend(q)
    out = bytearray()
    fill = bytes([FILL]) * layout.fill_symbols
    for symbols in frames:
        out.append(SOF)
        out.extend(symbols.tobytes())
        out.extend(fill)
        out.append(EOF)
    return bytes(out)


def decode(events, layout: StreamLayout, queries,
           k: int | None = None) -> list[KnnResult]:
    """Turn report events back into per-query scored neighbor lists.

    ``queries`` is the encoded batch (or its query count; ids then default
    to 0..n-1). Each result keeps at most ``k`` neighbors (all of them when
    ``k`` is None). Reports from idle slices of a final short multiplexed
    frame are discarded. Any other event that does not line up with the
    layout (an unknown tag, or an offset outside a frame's distance
    window) is a hard error: it means the stream and the board disagree.
    """
    if isinstance(queries, int):
        ids = list(range(queries))
    elif isinstance(queries, QueryBatch):
        ids = queries.ids.tolist()
    else:
        ids = [int(x) for x in queries]
    if not ids:
        raise ValueError("queries must be nonempty")
    if k is not None and k < 1:
        raise ValueError("k must be positive")
    n_queries = len(ids)
    frame_len = layout.frame_length()
    n_frames = -(-n_queries // layout.slices)
    results = [KnnResult(qid, []) for qid in ids]
    for tag, offset in events:
        frame, in_frame = divmod(offset, frame_len)
        if frame >= n_frames:
            raise ValueError(
                f"report at offset {offset} lies beyond frame {n_frames - 1}")
        distance = in_frame - layout.calibration_base
        if not 0 <= distance <= layout.d:
            raise ValueError(
                f"report at offset {offset} falls outside the distance "
                f"window of frame {frame}")
        if tag not in layout.tags:
            raise ValueError(f"unknown report tag {tag}")
        slice_, vector_id = layout.tags[tag]
        query_index = frame * layout.slices + slice_
        if query_index >= n_queries:
            # Idle slice of a final short multiplexed frame; its lanes
            # carry zero bits, so matches there are expected and dropped.
            continue
        results[query_index].neighbors.append(Neighbor(vector_id, distance))
    for r in results:
        r.neighbors.sort(key=lambda nb: (nb.distance, nb.vector_id))
        if k is not None:
            del r.neighbors[k:]
    return results


def merge_partitions(partition_results: list[list[KnnResult]],
                     k: int | None = None) -> list[KnnResult]:
    """Merge per-partition results of the same query batch.

    Partitions hold disjoint shares of the dataset, so a vector id showing
    up in more than one partition's answer is an error. Truncation to ``k``
    happens after combining, which makes the merge associative.
    """
    if not partition_results:
        raise ValueError("nothing to merge")
    n = len(partition_results[0])
    if any(len(p) != n for p in partition_results):
        raise ValueError("partitions answered different query counts")
    merged = []
    for qi in range(n):
        qid = partition_results[0][qi].query_id
        seen: dict[int, int] = {}
        combined: list[Neighbor] = []
        for pi, part in enumerate(partition_results):
            if part[qi].query_id != qid:
                raise ValueError("partition results are misordered")
            for nb in part[qi].neighbors:
                if nb.vector_id in seen:
                    raise ValueError(
                        f"vector id {nb.vector_id} reported by partitions "
                        f"{seen[nb.vector_id]} and {pi}")
                seen[nb.vector_id] = pi
                combined.append(nb)
        combined.sort(key=lambda nb: (nb.distance, nb.vector_id))
        if k is not None:
            del combined[k:]
        merged.append(KnnResult(qid, combined))
    return merged


def results_to_jsonl(results: list[KnnResult]) -> str:
    """Line-delimited records, one query per line."""
    lines = []
    for r in results:
        lines.append(json.dumps({
            "query_id": int(r.query_id),
            "neighbors": [{"id": int(nb.vector_id),
                           "distance": int(nb.distance)}
                          for nb in r.neighbors],
        }, sort_keys=True))
    return "\n".join(lines) + "\n"


def results_from_jsonl(text: str) -> list[KnnResult]:
    results = []
    for line in text.splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        results.append(KnnResult(
            doc["query_id"],
            [Neighbor(nb["id"], nb["distance"])
             for nb in doc["neighbors"]]))
    return results


def stream_to_hex(stream: bytes) -> str:
    return bytes(stream).hex()


def stream_from_hex(text: str) -> bytes:
    return bytes.fromhex(text.strip())
