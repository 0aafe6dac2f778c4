"""Spatial index tests: builders, routing, and bucket-plan search."""

import numpy as np
import pytest

from apknn.compiler import partition_dataset
from apknn.index import (
    BucketPlan,
    IndexStructure,
    build_kdtree,
    build_kmeans,
    build_lsh,
    plan_and_search,
)
from apknn.oracle import knn_exact_many
from apknn.perf import WorkloadSpec, indexed_runtime


RNG = np.random.default_rng(42)
D, N, M, K = 32, 600, 40, 5
DATA = RNG.integers(0, 2, size=(N, D), dtype=np.uint8)
QUERIES = RNG.integers(0, 2, size=(M, D), dtype=np.uint8)
EXACT = knn_exact_many(DATA, QUERIES, K)


def builders(capacity=64):
    return {
        "kd": lambda **kw: build_kdtree(DATA, capacity, trees=4, **kw),
        "kmeans": lambda **kw: build_kmeans(DATA, capacity, branching=4,
                                            **kw),
        "lsh": lambda **kw: build_lsh(DATA, capacity, tables=4,
                                      bits_per_key=8, **kw),
    }


def recall(results, exact=EXACT):
    hits = total = 0
    for r, ex in zip(results, exact):
        truth = {nb.vector_id for nb in ex}
        hits += len(truth & {nb.vector_id for nb in r.neighbors})
        total += len(truth)
    return hits / total


class TestBuildInvariants:
    @pytest.mark.parametrize("kind", ["kd", "kmeans", "lsh"])
    def test_coverage_and_capacity(self, kind):
        idx = builders()[kind](seed=7)
        seen = set()
        for b in idx.buckets:
            assert len(b) <= 64
            seen.update(int(i) for i in b.ids)
        assert seen == set(range(N))

    @pytest.mark.parametrize("kind", ["kd", "kmeans", "lsh"])
    def test_deterministic_under_seed(self, kind):
        a = builders()[kind](seed=7).to_document()
        b = builders()[kind](seed=7).to_document()
        assert a == b
        c = builders()[kind](seed=8).to_document()
        assert c != a

    @pytest.mark.parametrize("kind", ["kd", "kmeans", "lsh"])
    def test_rejects_empty_dataset(self, kind):
        empty = np.zeros((0, 4), dtype=np.uint8)
        with pytest.raises(ValueError):
            {"kd": build_kdtree, "kmeans": build_kmeans,
             "lsh": build_lsh}[kind](empty, 8)


class TestKdTree:
    def test_small_dataset_is_one_leaf_per_tree(self):
        idx = build_kdtree(DATA, 1024, trees=4, seed=0)
        assert len(idx.buckets) == 4
        assert all(len(b) == N for b in idx.buckets)

    def test_leaf_count_scales_with_capacity(self):
        big = np.random.default_rng(1).integers(
            0, 2, size=(4096, 24), dtype=np.uint8)
        idx = build_kdtree(big, 512, trees=2, seed=1)
        # capacity-bounded leaves force at least ceil(4096/512) per tree
        assert len(idx.buckets) / 2 >= 8

    def test_constant_dataset_terminates_and_chains(self):
        const = np.tile(np.array([1, 0, 1, 0], dtype=np.uint8), (25, 1))
        idx = build_kdtree(const, 10, trees=2, seed=0)
        assert all(len(b) <= 10 for b in idx.buckets)
        _, res = plan_and_search(idx, const[[0]], 1, mode="oracle")
        assert res[0].neighbors[0].distance == 0

    def test_zero_dimensional_data_rejected(self):
        with pytest.raises(ValueError):
            build_kdtree(np.zeros((3, 0), dtype=np.uint8), 8)

    def test_recall_regression(self):
        idx = build_kdtree(DATA, 64, trees=4, seed=7)
        _, res = plan_and_search(idx, QUERIES, K, mode="oracle")
        assert recall(res) == pytest.approx(0.7050, abs=1e-9)


class TestKMeans:
    def test_separates_planted_clusters(self):
        rng = np.random.default_rng(9)
        rows = []
        for i in range(20):
            row = (np.zeros if i < 10 else np.ones)(16).astype(np.uint8)
            row[rng.integers(0, 16)] ^= 1
            rows.append(row)
        idx = build_kmeans(np.stack(rows), 15, branching=2, seed=0)
        assert len(idx.buckets) == 2
        groups = sorted(sorted(int(i) for i in b.ids) for b in idx.buckets)
        assert groups == [list(range(10)), list(range(10, 20))]

    def test_single_point_single_bucket(self):
        idx = build_kmeans(np.array([[1, 0, 1]], dtype=np.uint8), 4)
        assert len(idx.buckets) == 1 and len(idx.buckets[0]) == 1

    def test_every_vector_reachable_by_its_duplicate(self):
        # traversal uses the same nearest-center rule as assignment, so
        # a duplicate query must land in the bucket holding its original
        idx = build_kmeans(DATA, 64, branching=4, seed=7)
        _, res = plan_and_search(idx, DATA, 1, mode="oracle")
        for vid, r in enumerate(res):
            assert r.neighbors[0] == (vid, 0)

    def test_branching_validation(self):
        with pytest.raises(ValueError):
            build_kmeans(DATA, 64, branching=1)

    def test_recall_regression(self):
        idx = build_kmeans(DATA, 64, branching=4, seed=7)
        _, res = plan_and_search(idx, QUERIES, K, mode="oracle")
        assert recall(res) == pytest.approx(0.2100, abs=1e-9)


class TestLsh:
    def test_duplicate_query_shares_every_key(self):
        idx = build_lsh(DATA, 64, tables=4, bits_per_key=8, seed=7)
        for vid in (0, 17, N - 1):
            _, res = plan_and_search(idx, DATA[[vid]], 1, mode="oracle")
            assert res[0].neighbors[0] == (vid, 0)

    def test_oversized_key_group_chains_fully(self):
        # identical vectors share one key; the query walks the whole
        # chain, so every copy is reachable
        const = np.tile(np.array([1, 0, 1, 1], dtype=np.uint8), (30, 1))
        idx = build_lsh(const, 8, tables=1, bits_per_key=4, seed=0)
        assert len(idx.buckets) == 4
        _, res = plan_and_search(idx, const[[0]], 30, mode="oracle")
        assert len(res[0].neighbors) == 30

    def test_unseen_key_returns_nothing(self):
        idx = build_lsh(np.zeros((8, 6), dtype=np.uint8), 4,
                        tables=1, bits_per_key=6, seed=0)
        _, res = plan_and_search(idx, np.ones((1, 6), dtype=np.uint8), 2,
                                 mode="oracle")
        assert res[0].neighbors == []

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            build_lsh(DATA, 64, bits_per_key=0)
        with pytest.raises(ValueError):
            build_lsh(DATA, 64, bits_per_key=D + 1)
        with pytest.raises(ValueError):
            build_lsh(DATA, 64, tables=0)

    def test_recall_rises_with_tables(self):
        scores = []
        for tables in (1, 4):
            idx = build_lsh(DATA, 64, tables=tables, bits_per_key=8, seed=7)
            _, res = plan_and_search(idx, QUERIES, K, mode="oracle")
            scores.append(recall(res))
        assert scores[0] == pytest.approx(0.0400, abs=1e-9)
        assert scores[1] == pytest.approx(0.2050, abs=1e-9)
        assert scores[1] > scores[0]


class TestPlanAndSearch:
    @pytest.mark.parametrize("kind", ["kd", "kmeans", "lsh"])
    def test_fabric_matches_oracle_mode(self, kind):
        rng = np.random.default_rng(9)
        data = rng.integers(0, 2, size=(120, 16), dtype=np.uint8)
        queries = rng.integers(0, 2, size=(12, 16), dtype=np.uint8)
        idx = {"kd": lambda: build_kdtree(data, 40, trees=2, seed=3),
               "kmeans": lambda: build_kmeans(data, 40, branching=3, seed=3),
               "lsh": lambda: build_lsh(data, 40, tables=2, bits_per_key=5,
                                        seed=3)}[kind]()
        pf, rf = plan_and_search(idx, queries, 3, mode="fabric")
        po, ro = plan_and_search(idx, queries, 3, mode="oracle")
        assert pf == po
        for a, b in zip(rf, ro):
            assert (a.query_id, a.neighbors) == (b.query_id, b.neighbors)

    @pytest.mark.parametrize("kind", ["kd", "kmeans", "lsh"])
    def test_never_beats_exact_at_any_rank(self, kind):
        idx = builders()[kind](seed=7)
        _, res = plan_and_search(idx, QUERIES, K, mode="oracle")
        for r, ex in zip(res, EXACT):
            for rank, nb in enumerate(r.neighbors):
                assert nb.distance >= ex[rank].distance

    def test_plan_visits_each_bucket_once(self):
        idx = build_lsh(DATA, 64, tables=4, bits_per_key=8, seed=7)
        plan, _ = plan_and_search(idx, QUERIES, K, mode="oracle")
        bids = [bid for bid, _ in plan.entries]
        assert len(bids) == len(set(bids))
        assert bids == sorted(bids)
        assert plan.reconfigurations == len(bids)
        assert plan.scan_counts == tuple(
            len(qs) for _, qs in plan.entries)

    def test_plan_feeds_runtime_model(self):
        idx = build_kdtree(DATA, 64, trees=4, seed=7)
        plan, _ = plan_and_search(idx, QUERIES, K, mode="oracle")
        w = WorkloadSpec("indexed", D, K, 64, N, q=M)
        t = indexed_runtime(w, plan.scan_counts, 2)
        full = indexed_runtime(w, [M] * len(idx.buckets), 2)
        assert 0 < t < full

    def test_linear_chain_equals_exact(self):
        parts = partition_dataset(DATA, 50)
        linear = IndexStructure(
            kind="lsh", capacity=50, seed=0,
            params={"tables": 1, "bits_per_key": 0},
            buckets=parts,
            routing={"tables": [{
                "positions": [],
                "chains": {"": list(range(len(parts)))}}]})
        _, res = plan_and_search(linear, QUERIES, K, mode="oracle")
        for r, ex in zip(res, EXACT):
            assert r.neighbors == ex

    @pytest.mark.parametrize("kind", ["kd", "kmeans", "lsh"])
    def test_duplicate_query_found_at_distance_zero(self, kind):
        idx = builders()[kind](seed=7)
        _, res = plan_and_search(idx, DATA[[5]], 1, mode="oracle")
        assert res[0].neighbors[0] == (5, 0)

    def test_query_ids_carried(self):
        idx = build_kdtree(DATA, 64, trees=2, seed=0)
        plan, res = plan_and_search(idx, QUERIES[:3], 2, mode="oracle",
                                    query_ids=[30, 10, 20])
        assert [r.query_id for r in res] == [30, 10, 20]
        planned = {qid for _, qids in plan.entries for qid in qids}
        assert planned <= {30, 10, 20}

    def test_argument_validation(self):
        idx = build_kdtree(DATA, 64, trees=2, seed=0)
        with pytest.raises(ValueError):
            plan_and_search(idx, np.zeros((1, 8), dtype=np.uint8), 1)
        with pytest.raises(ValueError):
            plan_and_search(idx, QUERIES, 0)
        with pytest.raises(ValueError):
            plan_and_search(idx, QUERIES, 1, mode="psychic")
        with pytest.raises(ValueError):
            plan_and_search(idx, QUERIES, 1, query_ids=[1])


class TestBucketPlan:
    def test_rejects_repeated_bucket(self):
        with pytest.raises(ValueError):
            BucketPlan(((0, (1,)), (0, (2,))))

    def test_rejects_empty_query_list(self):
        with pytest.raises(ValueError):
            BucketPlan(((0, ()),))


class TestPersistence:
    @pytest.mark.parametrize("kind", ["kd", "kmeans", "lsh"])
    def test_document_roundtrip(self, kind):
        idx = builders()[kind](seed=7)
        doc = idx.to_document()
        again = IndexStructure.from_document(doc)
        assert again.to_document() == doc
        _, a = plan_and_search(idx, QUERIES[:5], K, mode="oracle")
        _, b = plan_and_search(again, QUERIES[:5], K, mode="oracle")
        for x, y in zip(a, b):
            assert x.neighbors == y.neighbors

    def test_save_load_bytes_stable(self, tmp_path):
        idx = build_lsh(DATA, 64, tables=2, bits_per_key=6, seed=1)
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        idx.save(p1)
        IndexStructure.load(p1).save(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_foreign_documents(self):
        with pytest.raises(ValueError):
            IndexStructure.from_document({"format": "something-else"})
        doc = build_kdtree(DATA, 64, trees=1, seed=0).to_document()
        doc["version"] = 99
        with pytest.raises(ValueError):
            IndexStructure.from_document(doc)
