"""Stream codec tests: framing, decoding, and partition merging."""

import numpy as np
import pytest

from apknn.codec import (
    EOF,
    FILL,
    SOF,
    KnnResult,
    QueryBatch,
    StreamLayout,
    decode,
    encode,
    merge_partitions,
    results_from_jsonl,
    results_to_jsonl,
    stream_from_hex,
    stream_to_hex,
)
from apknn.oracle import Neighbor


def serial_layout(d, delay_levels, tags=None):
    return StreamLayout(
        d=d, data_symbols=d, fill_symbols=d + delay_levels + 1,
        calibration_base=d + delay_levels + 2, tags=tags or {})


class TestEncode:
    def test_serial_frame_shape(self):
        lay = serial_layout(4, 0)
        stream = encode([1, 0, 1, 1], lay)
        assert len(stream) == lay.frame_length() == 11
        assert list(stream) == [SOF, 1, 0, 1, 1] + [FILL] * 5 + [EOF]

    def test_batch_concatenates_frames(self):
        lay = serial_layout(3, 1)
        stream = encode([[1, 0, 0], [0, 1, 1]], lay)
        assert len(stream) == 2 * lay.frame_length()
        assert stream[lay.frame_length()] == SOF
        assert stream[-1] == EOF

    def test_multiplexed_packs_seven(self):
        lay = StreamLayout(d=2, data_symbols=2, fill_symbols=4,
                           calibration_base=4, slices=7, mode="multiplexed")
        queries = [[(q >> i) & 1 for i in range(2)] for q in range(9)]
        stream = encode(queries, lay)
        assert len(stream) == 2 * lay.frame_length()
        # First frame symbol i packs bit i of queries 0..6 into bits 0..6.
        sym0 = stream[1]
        assert sym0 == sum(((q >> 0) & 1) << q_slice
                           for q_slice, q in enumerate(range(7)))
        assert sym0 < 128  # payload keeps bit 7 clear

    def test_counter_mode_packs_dims(self):
        lay = StreamLayout(d=10, data_symbols=2, fill_symbols=11,
                           calibration_base=4, mode="counter")
        q = [1, 0, 1, 0, 0, 0, 1, 1, 0, 1]
        stream = encode(q, lay)
        assert len(stream) == lay.frame_length()
        assert stream[1] == 0b1000101
        assert stream[2] == 0b0000101  # dims 7..9, top lanes padded with 0

    def test_rejects_bad_values(self):
        lay = serial_layout(3, 0)
        with pytest.raises(ValueError):
            encode([1, 2, 0], lay)
        with pytest.raises(ValueError):
            encode([[1, 0]], lay)
        with pytest.raises(ValueError):
            encode(np.zeros((0, 3), dtype=int), lay)

    def test_batch_ids_must_be_unique(self):
        with pytest.raises(ValueError):
            QueryBatch(ids=[1, 1], vectors=[[0, 1], [1, 0]])

    def test_hex_roundtrip(self):
        lay = serial_layout(4, 0)
        stream = encode([1, 0, 1, 1], lay)
        assert stream_from_hex(stream_to_hex(stream)) == stream


class TestDecode:
    def layout(self):
        return serial_layout(4, 1, tags={0: (0, 10), 1: (0, 11)})

    def test_distance_from_offset(self):
        lay = self.layout()
        base = lay.calibration_base
        events = [(0, base), (1, base + 3),
                  (0, lay.frame_length() + base + 4)]
        got = decode(events, lay, 2)
        assert got[0].query_id == 0
        assert got[0].neighbors == [Neighbor(10, 0), Neighbor(11, 3)]
        assert got[1].neighbors == [Neighbor(10, 4)]

    def test_sorted_by_distance_then_id(self):
        lay = self.layout()
        base = lay.calibration_base
        got = decode([(1, base + 2), (0, base + 2), (1, base)], lay, 1)
        assert got[0].neighbors == \
            [Neighbor(11, 0), Neighbor(10, 2), Neighbor(11, 2)]

    def test_truncates_to_k(self):
        lay = self.layout()
        base = lay.calibration_base
        got = decode([(1, base + 2), (0, base + 1)], lay, 1, k=1)
        assert got[0].neighbors == [Neighbor(10, 1)]
        huge = decode([(1, base + 2), (0, base + 1)], lay, 1, k=99)
        assert len(huge[0].neighbors) == 2

    def test_query_ids_carried_through(self):
        lay = self.layout()
        batch = QueryBatch(ids=[7, 3],
                           vectors=[[0, 1, 1, 0], [1, 1, 0, 0]])
        got = decode([(0, lay.calibration_base)], lay, batch)
        assert [r.query_id for r in got] == [7, 3]

    def test_unknown_tag_is_error(self):
        lay = self.layout()
        with pytest.raises(ValueError, match="unknown report tag"):
            decode([(9, lay.calibration_base)], lay, 1)

    def test_offset_outside_window_is_error(self):
        lay = self.layout()
        with pytest.raises(ValueError, match="distance window"):
            decode([(0, lay.calibration_base - 1)], lay, 1)
        # A frame with slack past the window catches late reports too.
        slack = StreamLayout(d=4, data_symbols=4, fill_symbols=9,
                             calibration_base=7, tags={0: (0, 10)})
        with pytest.raises(ValueError, match="distance window"):
            decode([(0, slack.calibration_base + slack.d + 1)], slack, 1)

    def test_offset_beyond_frames_is_error(self):
        lay = self.layout()
        with pytest.raises(ValueError, match="beyond"):
            decode([(0, lay.frame_length() + lay.calibration_base)], lay, 1)

    def test_ghost_slice_reports_dropped(self):
        lay = StreamLayout(
            d=4, data_symbols=4, fill_symbols=6, calibration_base=7,
            slices=7, mode="multiplexed",
            tags={t: (t % 7, 100 + t // 7) for t in range(14)})
        base = lay.calibration_base
        # 3 live queries; slices 3..6 are idle padding.
        got = decode([(2, base + 1), (5, base + 2)], lay, 3)
        assert got[2].neighbors == [Neighbor(100, 1)]
        assert all(not r.neighbors for i, r in enumerate(got) if i != 2)


class TestMergePartitions:
    def res(self, qid, *pairs):
        return KnnResult(qid, [Neighbor(v, d) for v, d in pairs])

    def test_merges_and_sorts(self):
        a = [self.res(0, (1, 5), (2, 1))]
        b = [self.res(0, (7, 1), (9, 0))]
        merged = merge_partitions([a, b])
        assert merged[0].neighbors == \
            [Neighbor(9, 0), Neighbor(2, 1), Neighbor(7, 1), Neighbor(1, 5)]
        assert merged[0].top(2) == [Neighbor(9, 0), Neighbor(2, 1)]

    def test_truncates_after_combining(self):
        a = [self.res(0, (1, 5))]
        b = [self.res(0, (9, 0))]
        merged = merge_partitions([a, b], k=1)
        assert merged[0].neighbors == [Neighbor(9, 0)]

    def test_associative_with_k(self):
        rng = np.random.default_rng(8)
        parts = []
        vid = 0
        for _ in range(3):
            neighbors = []
            for _ in range(6):
                neighbors.append((vid, int(rng.integers(0, 5))))
                vid += 1
            parts.append([self.res(0, *neighbors)])
        k = 4
        left = merge_partitions(
            [merge_partitions([parts[0], parts[1]], k), parts[2]], k)
        right = merge_partitions(
            [parts[0], merge_partitions([parts[1], parts[2]], k)], k)
        flat = merge_partitions(parts, k)
        assert left[0].neighbors == right[0].neighbors == flat[0].neighbors

    def test_single_partition_identity(self):
        a = [self.res(0, (2, 1), (3, 4))]
        assert merge_partitions([a])[0].neighbors == a[0].neighbors

    def test_duplicate_vector_id_is_error(self):
        a = [self.res(0, (3, 1))]
        b = [self.res(0, (3, 2))]
        with pytest.raises(ValueError, match="vector id 3"):
            merge_partitions([a, b])

    def test_mismatched_query_counts_is_error(self):
        with pytest.raises(ValueError):
            merge_partitions([[self.res(0)], [self.res(0), self.res(1)]])


class TestSerialization:
    def test_layout_document_roundtrip(self):
        lay = StreamLayout(d=4, data_symbols=4, fill_symbols=6,
                           calibration_base=7, slices=7, mode="multiplexed",
                           tags={3: (1, 42), 0: (0, 41)})
        assert StreamLayout.from_document(lay.to_document()) == lay

    def test_layout_validation(self):
        with pytest.raises(ValueError):
            StreamLayout(d=4, data_symbols=4, fill_symbols=1,
                         calibration_base=2, slices=3, mode="multiplexed")
        with pytest.raises(ValueError):
            StreamLayout(d=4, data_symbols=4, fill_symbols=1,
                         calibration_base=2, mode="parallel")

    def test_results_jsonl_roundtrip(self):
        results = [
            KnnResult(3, [Neighbor(9, 0), Neighbor(2, 4)]),
            KnnResult(5, []),
        ]
        text = results_to_jsonl(results)
        assert text.count("\n") == 2
        back = results_from_jsonl(text)
        assert back == results
