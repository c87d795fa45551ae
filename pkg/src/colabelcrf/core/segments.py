"""Superpixel and supervoxel maps and the cliques they induce."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from sklearn.cluster import KMeans

from colabelcrf.core.errors import DimensionError, ErrorCodes, ValueRangeError
from colabelcrf.core.hoc import CliqueSet, PnPottsParams

logger = logging.getLogger(__name__)

KMEANS_MAX_ITER = 20


class SegmentScope(IntEnum):
    """How ids relate across frames; values match the SEG1 scope byte."""

    PER_FRAME = 0
    CROSS_FRAME = 1


@dataclass(frozen=True)
class SegmentMap:
    """Per-pixel segment ids, shape (F, H, W)."""

    ids: np.ndarray
    scope: SegmentScope = SegmentScope.PER_FRAME

    def __post_init__(self) -> None:
        ids = np.asarray(self.ids)
        if ids.ndim == 2:
            ids = ids[None]
        if ids.ndim != 3:
            raise DimensionError(f"Segment ids must be (F, H, W), got {ids.shape}", shape=ids.shape)
        if ids.size == 0:
            raise DimensionError("Segment map is empty", code=ErrorCodes.DIMENSION_EMPTY)
        if not np.issubdtype(ids.dtype, np.integer):
            raise ValueRangeError("Segment ids must be integers")
        if ids.min() < 0:
            raise ValueRangeError("Segment ids must be non-negative")
        ids = ids.astype(np.int64)
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "scope", SegmentScope(self.scope))

    @property
    def frames(self) -> int:
        return int(self.ids.shape[0])

    @property
    def height(self) -> int:
        return int(self.ids.shape[1])

    @property
    def width(self) -> int:
        return int(self.ids.shape[2])

    def frames_slice(self, start: int, stop: int) -> SegmentMap:
        return SegmentMap(self.ids[start:stop], self.scope)

    def compact(self) -> SegmentMap:
        """Renumber ids to 0..k-1 in increasing order of the original id."""
        _, inverse = np.unique(self.ids, return_inverse=True)
        return SegmentMap(inverse.reshape(self.ids.shape), self.scope)

    @classmethod
    def stack(cls, maps: Sequence[SegmentMap]) -> SegmentMap:
        """Concatenate per-frame maps along the frame axis."""
        if not maps:
            raise DimensionError("No segment maps to stack", code=ErrorCodes.DIMENSION_EMPTY)
        if any(m.scope is not SegmentScope.PER_FRAME for m in maps):
            raise ValueRangeError("Only per-frame maps can be stacked")
        return cls(np.concatenate([m.ids for m in maps]), SegmentScope.PER_FRAME)


def cliques_from_map(
    segment_map: SegmentMap,
    params: PnPottsParams | None = None,
    tag: str = "segments",
    split_frames: bool = False,
) -> CliqueSet:
    """One clique per (frame, id), or per id for cross-frame maps.

    ``split_frames`` turns every cross-frame segment into its per-frame slices.
    Members of each clique are in increasing variable-id order.
    """
    params = params or PnPottsParams()
    ids = segment_map.ids.reshape(segment_map.frames, -1)
    per_frame = segment_map.scope is SegmentScope.PER_FRAME or split_frames
    if per_frame:
        span = int(ids.max()) + 1
        key = (np.arange(segment_map.frames)[:, None] * span + ids).reshape(-1)
    else:
        key = ids.reshape(-1)
    _, compact = np.unique(key, return_inverse=True)
    compact = compact.reshape(-1)
    order = np.argsort(compact, kind="stable")
    counts = np.bincount(compact)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    logger.debug(
        "%s: %d cliques over %d variables (sizes %d..%d)",
        tag, counts.size, key.size, counts.min(), counts.max(),
    )
    return CliqueSet(
        members=order.astype(np.int64),
        offsets=offsets,
        layer=np.zeros(counts.size, dtype=np.int64),
        tags=(tag,),
        params=params,
    )


def _grid_ids(width: int, height: int, cell: int) -> np.ndarray:
    if cell < 1:
        raise ValueRangeError(f"cell must be >= 1, got {cell}", parameter="cell")
    columns = -(-width // cell)
    y, x = np.mgrid[0:height, 0:width]
    return (y // cell) * columns + (x // cell)


def grid_segments(width: int, height: int, cell: int) -> SegmentMap:
    """Regular tiling of one frame; border cells may be partial."""
    return SegmentMap(_grid_ids(width, height, cell)[None], SegmentScope.PER_FRAME)


def supervoxel_grid_segments(frames: int, width: int, height: int, cell: int) -> SegmentMap:
    """The same tiling in every frame, each tile one cross-frame segment."""
    ids = np.broadcast_to(_grid_ids(width, height, cell), (frames, height, width))
    return SegmentMap(np.array(ids), SegmentScope.CROSS_FRAME)


def kmeans_color_segments(frame: np.ndarray, k: int, seed: int = 0) -> SegmentMap:
    """K-means over (x, y, r, g, b) of one frame; segments need not be connected."""
    rgb = np.asarray(frame, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DimensionError(f"Frame must be (H, W, 3), got {rgb.shape}", shape=rgb.shape)
    height, width = rgb.shape[:2]
    if k < 1:
        raise ValueRangeError(f"k must be >= 1, got {k}", parameter="k")
    if k > height * width:
        raise ValueRangeError(
            f"k={k} exceeds the pixel count {height * width}", parameter="k"
        )
    if k == 1:
        return SegmentMap(np.zeros((1, height, width), dtype=np.int64))
    y, x = np.mgrid[0:height, 0:width]
    points = np.column_stack([x.ravel(), y.ravel(), rgb.reshape(-1, 3)])
    model = KMeans(n_clusters=k, n_init=1, max_iter=KMEANS_MAX_ITER, random_state=seed)
    labels = model.fit_predict(points)
    return SegmentMap(labels.reshape(1, height, width)).compact()


__all__ = [
    "SegmentScope",
    "SegmentMap",
    "cliques_from_map",
    "grid_segments",
    "supervoxel_grid_segments",
    "kmeans_color_segments",
]
