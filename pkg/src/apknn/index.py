"""Host-side approximate-neighbor indexes over bit-vector datasets.

Three classic pruning structures, each with leaves sized to fit one
board load: randomized kd-trees splitting on high-variance bits,
hierarchical k-means with per-bit majority centers (Hamming space has
no means, so centers are coordinate-wise votes), and LSH tables keyed
on random bit samples. A query visits one leaf per tree, or the full
chain behind its hash key per table; visits are batched per bucket so
each board image is loaded once per query batch.
"""

import dataclasses
import json

import numpy as np

from .codec import KnnResult, Neighbor
from .compiler import CompileOptions, DatasetPartition, compile_partition
from .fabric import FabricConfig
from .oracle import distance_matrix, knn_exact_many
from .resources import CapacityProfile

__all__ = [
    "BucketPlan",
    "IndexStructure",
    "build_kdtree",
    "build_kmeans",
    "build_lsh",
    "plan_and_search",
]

INDEX_FORMAT = "apknn-index"

# kd splits sample from this many top-variance dimensions
_SPLIT_POOL = 5
_KMEANS_ITERS = 25


def _prepare(vectors, ids):
    rows = np.atleast_2d(np.asarray(vectors, dtype=np.uint8))
    if rows.shape[0] == 0:
        raise ValueError("dataset must be nonempty")
    if rows.shape[1] == 0:
        raise ValueError("dimensionality must be positive")
    if rows.max(initial=0) > 1:
        raise ValueError("vector components must be 0 or 1")
    if ids is None:
        ids = np.arange(rows.shape[0], dtype=np.int64)
    else:
        ids = np.asarray(ids, dtype=np.int64)
    if ids.shape != (rows.shape[0],):
        raise ValueError("one id per vector required")
    if len(np.unique(ids)) != len(ids):
        raise ValueError("vector ids must be unique")
    return rows, ids


def _resolve_capacity(d: int, capacity) -> int:
    if capacity is None:
        return CapacityProfile().capacity_for(d)
    capacity = int(capacity)
    if capacity < 1:
        raise ValueError("capacity must be positive")
    return capacity


def _bits_to_string(row) -> str:
    return "".join("1" if b else "0" for b in row)


def _string_to_bits(s: str) -> np.ndarray:
    return np.frombuffer(s.encode(), dtype=np.uint8) - ord("0")


def _new_bucket(buckets: list, ids, rows) -> int:
    bid = len(buckets)
    buckets.append(DatasetPartition(ids, rows, index=bid))
    return bid


def _chain_leaves(buckets, ids, rows, sel, capacity) -> int:
    """Chunk ``sel`` into capacity-sized buckets; return the first id."""
    first = -1
    for lo in range(0, sel.size, capacity):
        chunk = sel[lo: lo + capacity]
        bid = _new_bucket(buckets, ids[chunk], rows[chunk])
        if first < 0:
            first = bid
    return first


@dataclasses.dataclass(frozen=True)
class BucketPlan:
    """Which buckets a query batch visits, each bucket exactly once.

    ``entries`` pairs a bucket id with the ids of the queries routed to
    it, in batch order. ``scan_counts`` feeds the indexed-runtime model
    directly: one reconfiguration per entry, one scan per listed query.
    """

    entries: tuple

    def __post_init__(self):
        seen = set()
        for bid, qids in self.entries:
            if bid in seen:
                raise ValueError(f"bucket {bid} planned twice")
            seen.add(bid)
            if not qids:
                raise ValueError(f"bucket {bid} planned with no queries")

    @property
    def reconfigurations(self) -> int:
        return len(self.entries)

    @property
    def scan_counts(self) -> tuple:
        return tuple(len(qids) for _, qids in self.entries)


@dataclasses.dataclass
class IndexStructure:
    """A built index: board-sized buckets plus a routing structure.

    ``routing`` is kept JSON-ready so persistence is a direct dump:
    kd stores one nested dim/zero/one tree per parallel tree, k-means
    one tree of center strings, LSH per-table bit positions and
    key-to-chain maps. Bucket ids are positions in ``buckets``.
    """

    kind: str
    capacity: int
    seed: int
    params: dict
    buckets: list
    routing: dict

    @property
    def d(self) -> int:
        return self.buckets[0].d

    def route(self, query) -> tuple:
        """Distinct bucket ids this query visits, ascending."""
        q = np.asarray(query, dtype=np.uint8).ravel()
        if q.shape != (self.d,):
            raise ValueError(
                f"query dimensionality {q.shape[0]} does not match "
                f"index dimensionality {self.d}")
        if q.max(initial=0) > 1:
            raise ValueError("query components must be 0 or 1")
        hit = set()
        if self.kind == "kd":
            for tree in self.routing["trees"]:
                node = tree
                while "bucket" not in node:
                    node = node["one"] if q[node["dim"]] else node["zero"]
                hit.add(node["bucket"])
        elif self.kind == "kmeans":
            node = self.routing["tree"]
            while "bucket" not in node:
                centers = np.stack(
                    [_string_to_bits(c) for c in node["centers"]])
                child = int(distance_matrix([q], centers)[0].argmin())
                node = node["children"][child]
            hit.add(node["bucket"])
        elif self.kind == "lsh":
            for table in self.routing["tables"]:
                key = "".join("1" if q[p] else "0"
                              for p in table["positions"])
                hit.update(table["chains"].get(key, ()))
        else:
            raise ValueError(f"unknown index kind {self.kind!r}")
        return tuple(sorted(hit))

    def to_document(self) -> dict:
        return {
            "format": INDEX_FORMAT,
            "version": 1,
            "kind": self.kind,
            "capacity": self.capacity,
            "seed": self.seed,
            "params": dict(self.params),
            "buckets": [
                {"ids": [int(i) for i in b.ids],
                 "vectors": [_bits_to_string(row) for row in b.vectors]}
                for b in self.buckets],
            "routing": self.routing,
        }

    @classmethod
    def from_document(cls, doc: dict) -> "IndexStructure":
        if doc.get("format") != INDEX_FORMAT:
            raise ValueError("not an index document")
        if doc.get("version") != 1:
            raise ValueError(
                f"unsupported index version {doc.get('version')!r}")
        buckets = []
        for i, b in enumerate(doc["buckets"]):
            rows = np.stack([_string_to_bits(s) for s in b["vectors"]])
            buckets.append(DatasetPartition(np.array(b["ids"]), rows, i))
        return cls(kind=doc["kind"], capacity=int(doc["capacity"]),
                   seed=int(doc["seed"]), params=dict(doc["params"]),
                   buckets=buckets, routing=doc["routing"])

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_document(), fh, sort_keys=True, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "IndexStructure":
        with open(path) as fh:
            return cls.from_document(json.load(fh))


def _kd_node(rows, ids, sel, capacity, rng, buckets) -> dict:
    if sel.size <= capacity:
        return {"bucket": _new_bucket(buckets, ids[sel], rows[sel])}
    sub = rows[sel]
    p = sub.mean(axis=0)
    var = p * (1.0 - p)
    order = np.argsort(-var, kind="stable")
    dim = int(rng.choice(order[:_SPLIT_POOL]))
    ones = sub[:, dim] == 1
    if ones.all() or not ones.any():
        # sampled a constant dimension; retry on the most varied one
        dim = int(order[0])
        ones = sub[:, dim] == 1
    if ones.all() or not ones.any():
        # every dimension is constant, so the vectors are all identical:
        # chain into capacity-sized leaves and route to the first
        return {"bucket": _chain_leaves(buckets, ids, rows, sel, capacity)}
    return {
        "dim": dim,
        "zero": _kd_node(rows, ids, sel[~ones], capacity, rng, buckets),
        "one": _kd_node(rows, ids, sel[ones], capacity, rng, buckets),
    }


def build_kdtree(vectors, capacity=None, *, trees: int = 4, seed: int = 0,
                 ids=None) -> IndexStructure:
    """Parallel randomized kd-trees over bit vectors.

    Each tree splits recursively on a dimension drawn from the top few
    by variance (a coordinate's variance in bit space is p(1-p)), until
    nodes fit the bucket capacity.
    """
    if trees < 1:
        raise ValueError("trees must be at least 1")
    rows, ids = _prepare(vectors, ids)
    capacity = _resolve_capacity(rows.shape[1], capacity)
    buckets: list = []
    sel = np.arange(rows.shape[0])
    forest = [
        _kd_node(rows, ids, sel, capacity,
                 np.random.default_rng([seed, t]), buckets)
        for t in range(trees)]
    return IndexStructure(kind="kd", capacity=capacity, seed=seed,
                          params={"trees": trees}, buckets=buckets,
                          routing={"trees": forest})


def _majority(cluster) -> np.ndarray:
    # strict majority sets a bit; ties fall to zero
    return (2 * cluster.sum(axis=0) > cluster.shape[0]).astype(np.uint8)


def _kmeans_node(rows, ids, sel, capacity, branching, rng, buckets) -> dict:
    if sel.size <= capacity:
        return {"bucket": _new_bucket(buckets, ids[sel], rows[sel])}
    sub = rows[sel]
    distinct = np.unique(sub, axis=0)
    if distinct.shape[0] == 1:
        return {"bucket": _chain_leaves(buckets, ids, rows, sel, capacity)}
    kk = min(branching, distinct.shape[0])
    centers = distinct[rng.choice(distinct.shape[0], size=kk, replace=False)]
    for _ in range(_KMEANS_ITERS):
        assign = distance_matrix(sub, centers).argmin(axis=1)
        new = np.stack([
            _majority(sub[assign == c]) if (assign == c).any() else centers[c]
            for c in range(kk)])
        if np.array_equal(new, centers):
            break
        centers = new
    # final assignment against the stored centers, so traversal with the
    # same argmin tie-break lands every vector in its own bucket
    assign = distance_matrix(sub, centers).argmin(axis=1)
    keep = [c for c in range(kk) if (assign == c).any()]
    if len(keep) < 2:
        # collapsed clustering; force a two-way split that must separate
        centers = distinct[:2]
        assign = distance_matrix(sub, centers).argmin(axis=1)
        keep = [0, 1]
    node_centers = []
    children = []
    for c in keep:
        node_centers.append(_bits_to_string(centers[c]))
        children.append(_kmeans_node(rows, ids, sel[assign == c], capacity,
                                     branching, rng, buckets))
    return {"centers": node_centers, "children": children}


def build_kmeans(vectors, capacity=None, *, branching: int = 8,
                 seed: int = 0, ids=None) -> IndexStructure:
    """Hierarchical k-means with per-bit majority centers."""
    if branching < 2:
        raise ValueError("branching must be at least 2")
    rows, ids = _prepare(vectors, ids)
    capacity = _resolve_capacity(rows.shape[1], capacity)
    buckets: list = []
    rng = np.random.default_rng([seed, 0])
    tree = _kmeans_node(rows, ids, np.arange(rows.shape[0]), capacity,
                        branching, rng, buckets)
    return IndexStructure(kind="kmeans", capacity=capacity, seed=seed,
                          params={"branching": branching}, buckets=buckets,
                          routing={"tree": tree})


def build_lsh(vectors, capacity=None, *, tables: int = 4,
              bits_per_key: int | None = None, seed: int = 0,
              ids=None) -> IndexStructure:
    """Hash tables keyed on random bit samples.

    Vectors sharing a key land in the same hash bucket; oversized hash
    buckets are chained into capacity-sized partitions and a query
    visits the whole chain behind its key.
    """
    if tables < 1:
        raise ValueError("tables must be at least 1")
    rows, ids = _prepare(vectors, ids)
    d = rows.shape[1]
    capacity = _resolve_capacity(d, capacity)
    if bits_per_key is None:
        bits_per_key = min(16, d)
    if bits_per_key < 1:
        raise ValueError("bits_per_key must be at least 1")
    if bits_per_key > d:
        raise ValueError(f"bits_per_key cannot exceed d={d}")
    buckets: list = []
    table_docs = []
    for t in range(tables):
        rng = np.random.default_rng([seed, t])
        positions = np.sort(rng.choice(d, size=bits_per_key, replace=False))
        grouped: dict = {}
        for i in range(rows.shape[0]):
            grouped.setdefault(
                _bits_to_string(rows[i, positions]), []).append(i)
        chains = {}
        for key in sorted(grouped):
            members = np.array(grouped[key])
            chains[key] = [
                _new_bucket(buckets, ids[members[lo: lo + capacity]],
                            rows[members[lo: lo + capacity]])
                for lo in range(0, members.size, capacity)]
        table_docs.append({"positions": [int(p) for p in positions],
                           "chains": chains})
    return IndexStructure(
        kind="lsh", capacity=capacity, seed=seed,
        params={"tables": tables, "bits_per_key": bits_per_key},
        buckets=buckets, routing={"tables": table_docs})


def plan_and_search(index: IndexStructure, queries, k: int, *,
                    mode: str = "fabric",
                    options: CompileOptions | None = None,
                    config: FabricConfig | None = None,
                    query_ids=None):
    """Route queries through the index and scan the visited buckets.

    Returns the bucket plan and per-query approximate neighbor lists.
    Fabric mode compiles and simulates each visited bucket; oracle mode
    scores it directly, which is what large sweeps use. Modes agree by
    construction and a test holds them to it. Results merge by vector
    id, since trees and tables overlap, and may hold fewer than ``k``
    neighbors when routing never reaches enough of the dataset.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if mode not in ("fabric", "oracle"):
        raise ValueError(f"unknown scan mode {mode!r}")
    q = np.atleast_2d(np.asarray(queries, dtype=np.uint8))
    if q.shape[1] != index.d:
        raise ValueError(
            f"query dimensionality {q.shape[1]} does not match "
            f"index dimensionality {index.d}")
    if query_ids is None:
        qids = list(range(q.shape[0]))
    else:
        qids = [int(x) for x in query_ids]
        if len(qids) != q.shape[0]:
            raise ValueError("one id per query required")
    visits: dict = {}
    for pos in range(q.shape[0]):
        for bid in index.route(q[pos]):
            visits.setdefault(bid, []).append(pos)
    plan = BucketPlan(tuple(
        (bid, tuple(qids[p] for p in visits[bid]))
        for bid in sorted(visits)))
    pools: list = [{} for _ in range(q.shape[0])]
    for bid in sorted(visits):
        part = index.buckets[bid]
        sub = q[visits[bid]]
        if mode == "oracle":
            lists = knn_exact_many(part.vectors, sub, k, ids=part.ids)
        else:
            image = compile_partition(part, options, config)
            lists = [r.neighbors for r in image.run(sub, k)]
        for pos, neighbors in zip(visits[bid], lists):
            pools[pos].update(neighbors)
    results = []
    for pos in range(q.shape[0]):
        neighbors = sorted(
            (Neighbor(v, dist) for v, dist in pools[pos].items()),
            key=lambda nb: (nb.distance, nb.vector_id))
        results.append(KnnResult(qids[pos], neighbors[:k]))
    return plan, results
