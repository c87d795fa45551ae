"""Tests for segment maps and the cliques they induce."""

import numpy as np
import pytest

from colabelcrf.core.errors import DimensionError, ValueRangeError
from colabelcrf.core.hoc import CliqueSet, PnPottsParams
from colabelcrf.core.segments import (
    SegmentMap,
    SegmentScope,
    cliques_from_map,
    grid_segments,
    kmeans_color_segments,
    supervoxel_grid_segments,
)


def _clique_sizes(cliques: CliqueSet) -> list[int]:
    return sorted(int(s) for s in np.diff(cliques.offsets))


class TestGridSegments:
    """Regular tilings."""

    def test_four_by_four_cell_two(self):
        segments = grid_segments(4, 4, 2)
        ids, counts = np.unique(segments.ids, return_counts=True)
        np.testing.assert_array_equal(ids, [0, 1, 2, 3])
        np.testing.assert_array_equal(counts, [4, 4, 4, 4])

    def test_large_cell_is_single_segment(self):
        segments = grid_segments(5, 3, 8)
        assert np.unique(segments.ids).size == 1

    def test_partial_border_cells(self):
        segments = grid_segments(5, 4, 2)
        ids, counts = np.unique(segments.ids, return_counts=True)
        assert ids.size == 6
        # The last column of cells is one pixel wide.
        assert sorted(counts.tolist()) == [2, 2, 4, 4, 4, 4]

    def test_invalid_cell(self):
        with pytest.raises(ValueRangeError):
            grid_segments(4, 4, 0)

    def test_supervoxel_grid_repeats_tiling(self):
        segments = supervoxel_grid_segments(3, 4, 4, 2)
        assert segments.scope is SegmentScope.CROSS_FRAME
        assert segments.frames == 3
        np.testing.assert_array_equal(segments.ids[0], segments.ids[2])


class TestSegmentMap:
    """Validation and helpers."""

    def test_two_dimensional_ids_become_one_frame(self):
        segments = SegmentMap(np.zeros((2, 3), dtype=np.int32))
        assert (segments.frames, segments.height, segments.width) == (1, 2, 3)

    def test_negative_ids(self):
        with pytest.raises(ValueRangeError):
            SegmentMap(np.array([[0, -1]]))

    def test_float_ids(self):
        with pytest.raises(ValueRangeError):
            SegmentMap(np.zeros((1, 2, 2)))

    def test_empty(self):
        with pytest.raises(DimensionError):
            SegmentMap(np.zeros((1, 0, 3), dtype=np.int64))

    def test_compact_keeps_order(self):
        segments = SegmentMap(np.array([[9, 3], [3, 40]])).compact()
        np.testing.assert_array_equal(segments.ids[0], [[1, 0], [0, 2]])

    def test_stack_rejects_cross_frame(self):
        with pytest.raises(ValueRangeError):
            SegmentMap.stack([supervoxel_grid_segments(2, 2, 2, 1)])


class TestCliquesFromMap:
    """Clique construction."""

    def test_grid_cliques(self):
        cliques = cliques_from_map(grid_segments(4, 4, 2), PnPottsParams(alpha=0.05))
        assert len(cliques) == 4
        assert _clique_sizes(cliques) == [4, 4, 4, 4]
        np.testing.assert_array_equal(cliques.clique(0), [0, 1, 4, 5])

    def test_cross_frame_segment_spans_frames(self):
        ids = np.zeros((3, 3, 3), dtype=np.int64)
        ids[:, :, :2] = 7
        ids[:, 2, 1] = 0
        segments = SegmentMap(ids, SegmentScope.CROSS_FRAME)
        cliques = cliques_from_map(segments)
        assert _clique_sizes(cliques) == [12, 15]
        big = cliques.clique(1)
        assert big.size == 15
        assert set((big // 9).tolist()) == {0, 1, 2}

    def test_split_frames_slices_supervoxels(self):
        segments = supervoxel_grid_segments(3, 4, 4, 2)
        assert len(cliques_from_map(segments)) == 4
        split = cliques_from_map(segments, split_frames=True)
        assert len(split) == 12
        assert _clique_sizes(split) == [4] * 12

    def test_per_frame_ids_do_not_merge_across_frames(self):
        segments = SegmentMap(np.zeros((2, 2, 2), dtype=np.int64))
        cliques = cliques_from_map(segments)
        assert len(cliques) == 2

    def test_singletons_are_kept(self):
        segments = SegmentMap(np.arange(6).reshape(1, 2, 3))
        cliques = cliques_from_map(segments)
        assert _clique_sizes(cliques) == [1] * 6

    def test_partition(self, rng):
        ids = rng.integers(0, 9, size=(2, 5, 6))
        for scope in SegmentScope:
            cliques = cliques_from_map(SegmentMap(ids, scope))
            np.testing.assert_array_equal(np.sort(cliques.members), np.arange(60))
            assert cliques.layers == ("segments",)

    def test_members_sorted(self, rng):
        ids = rng.integers(0, 4, size=(3, 4, 4))
        cliques = cliques_from_map(SegmentMap(ids, SegmentScope.CROSS_FRAME))
        for index in range(len(cliques)):
            members = cliques.clique(index)
            assert (np.diff(members) > 0).all()

    def test_layers_concatenate_with_overlap(self):
        params = PnPottsParams(alpha=0.05)
        layers = [
            cliques_from_map(grid_segments(4, 4, 2), params, "grid"),
            cliques_from_map(grid_segments(4, 4, 4), params, "coarse"),
            cliques_from_map(SegmentMap(np.arange(16).reshape(1, 4, 4) % 2), params, "stripes"),
        ]
        joined = CliqueSet.concat(layers, params)
        assert len(joined) == 4 + 1 + 2
        assert joined.layers == ("grid", "coarse", "stripes")
        assert joined.cliques_of(5).size == 3


class TestKMeansSegments:
    """Color clustering of single frames."""

    @staticmethod
    def _two_color_frame():
        frame = np.zeros((6, 8, 3))
        frame[:, 4:] = 255.0
        return frame

    def test_single_cluster(self):
        segments = kmeans_color_segments(self._two_color_frame(), 1)
        assert not segments.ids.any()

    def test_split_follows_color_boundary(self):
        segments = kmeans_color_segments(self._two_color_frame(), 2, seed=3)
        left = np.unique(segments.ids[0, :, :4])
        right = np.unique(segments.ids[0, :, 4:])
        assert left.size == 1 and right.size == 1
        assert left[0] != right[0]

    def test_deterministic(self, rng):
        frame = rng.integers(0, 256, size=(10, 12, 3)).astype(np.float64)
        a = kmeans_color_segments(frame, 5, seed=11)
        b = kmeans_color_segments(frame, 5, seed=11)
        np.testing.assert_array_equal(a.ids, b.ids)

    def test_too_many_clusters(self):
        with pytest.raises(ValueRangeError):
            kmeans_color_segments(np.zeros((2, 2, 3)), 5)

    def test_frame_shape(self):
        with pytest.raises(DimensionError):
            kmeans_color_segments(np.zeros((4, 4)), 2)
