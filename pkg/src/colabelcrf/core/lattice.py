"""Permutohedral-lattice Gaussian filtering.

The lattice approximates

    out_a = sum_b exp(-0.5 * |f_a - f_b|^2) * v_b

for every point ``a``. Features must already be scaled so that the implied
kernel is ``exp(-0.5 * |df|^2)``; the model layer does that scaling.

Construction follows the splat / blur / slice scheme: every point is elevated
onto the hyperplane of a (d+1)-dimensional lattice, its enclosing simplex is
found and barycentric weights are computed. Values are splatted onto the
simplex vertices, blurred with a [1 2 1] kernel along each of the d+1 lattice
axes in one fixed order, and sliced back.

The blur is applied as half steps, ``B = C^T C`` with ``C = H_d ... H_0`` and
``H_j = (I + T_j) / sqrt(2)``, so the implied kernel matrix ``(C S)^T (C S)``
is symmetric on any table of vertices. The vertices the half steps reach from
the splatted ones are inserted into the table up to a size limit; below the
limit the result equals the blur on the unbounded lattice. Both sides of the
kernel are finally divided by the square root of each point's own lattice
response, which puts exactly 1 on the diagonal, and the features are
pre-multiplied by a per-dimension scale calibrated against the exact kernel.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Protocol, Union

import numpy as np
from scipy import optimize, sparse
from scipy.spatial import distance

from colabelcrf.core.errors import DimensionError, NumericError
from colabelcrf.core.performance import cached

logger = logging.getLogger(__name__)

BRUTE_FORCE_ADVISORY_MAX = 100_000
_BRUTE_FORCE_CHUNK = 1024

# Blur vertices are inserted while the table stays within
# max(_TABLE_FLOOR, _TABLE_GROWTH * splatted vertices).
_TABLE_FLOOR = 1 << 21
_TABLE_GROWTH = 4

_SQRT_HALF = float(np.sqrt(0.5))

# Pair samples for the per-dimension scale fit. Each side stands for a cloud
# of _CALIBRATION_CLOUD points, whose diagonal enters the error denominator.
_CALIBRATION_PAIRS = 1500
_CALIBRATION_SIDES = (1.0, 2.5, 5.0)
_CALIBRATION_CLOUD = 1000
_CALIBRATION_SEED = 20150
_SCALE_BOUNDS = (0.75, 1.35)


@dataclass(frozen=True)
class FeatureMatrix:
    """``count`` points in ``dim`` dimensions, pre-scaled for a unit kernel."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(
                f"Feature matrix must be (n >= 1, d >= 1), got shape {arr.shape}",
                shape=arr.shape,
            )
        bad = ~np.isfinite(arr).all(axis=1)
        if bad.any():
            point = int(np.argmax(bad))
            raise NumericError(f"Non-finite feature at point {point}", point=point)
        object.__setattr__(self, "data", np.ascontiguousarray(arr))

    @property
    def dim(self) -> int:
        return int(self.data.shape[1])

    @property
    def count(self) -> int:
        return int(self.data.shape[0])


@dataclass(frozen=True)
class ValueMatrix:
    """``count`` value vectors with ``channels`` entries each."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[1] < 1:
            raise DimensionError(
                f"Value matrix must be (n, c >= 1), got shape {arr.shape}", shape=arr.shape
            )
        bad = ~np.isfinite(arr).all(axis=1)
        if bad.any():
            point = int(np.argmax(bad))
            raise NumericError(f"Non-finite value at point {point}", point=point)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return int(self.data.shape[1])

    @property
    def count(self) -> int:
        return int(self.data.shape[0])


ValuesLike = Union[ValueMatrix, np.ndarray]


class GaussianFilter(Protocol):
    """Anything that filters per-point values with a fixed Gaussian kernel."""

    count: int

    def filter_array(self, values: np.ndarray, normalize: bool = False) -> np.ndarray: ...


class _KeyIndex:
    """Deterministic index over integer lattice keys.

    Ids follow insertion order: the distinct construction rows come first,
    sorted by code, and rows added with :meth:`extend` are appended. Rows are
    packed into a single int64 code when their coordinate ranges allow it;
    otherwise they are compared as raw bytes. The packing range is fixed at
    construction, ``margin`` beyond the construction rows.
    """

    def __init__(self, rows: np.ndarray, margin: int = 0):
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        self._lo = rows.min(axis=0) - margin
        self._hi = rows.max(axis=0) + margin
        span = (self._hi - self._lo + 1).astype(np.float64)
        self._packed = bool(np.prod(span) < 2.0**62)
        if self._packed:
            strides = np.ones(rows.shape[1], dtype=np.int64)
            strides[1:] = np.cumprod((self._hi - self._lo + 1)[:-1])
            self._strides = strides
        codes, first, inverse = np.unique(self._encode(rows), return_index=True, return_inverse=True)
        self.rows = rows[first]
        self.inverse = inverse.reshape(-1)
        self._codes = codes
        self._sorted = codes
        self._order = np.arange(codes.shape[0])

    def __len__(self) -> int:
        return int(self._codes.shape[0])

    def _encode(self, rows: np.ndarray) -> np.ndarray:
        if self._packed:
            return ((rows - self._lo) * self._strides).sum(axis=-1)
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        return rows.view(np.dtype((np.void, rows.dtype.itemsize * rows.shape[1]))).reshape(-1)

    def covers(self, rows: np.ndarray) -> np.ndarray:
        """Rows inside the packing range."""
        return np.all((rows >= self._lo) & (rows <= self._hi), axis=1)

    def lookup(self, rows: np.ndarray) -> np.ndarray:
        """Id of every row, or -1 when the row is not present."""
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        result = np.full(rows.shape[0], -1, dtype=np.int64)
        inside = self.covers(rows)
        if not inside.any():
            return result
        codes = self._encode(rows[inside])
        pos = np.minimum(np.searchsorted(self._sorted, codes), len(self) - 1)
        hit = self._sorted[pos] == codes
        result[inside] = np.where(hit, self._order[pos], -1)
        return result

    def extend(self, rows: np.ndarray) -> np.ndarray:
        """Append covered rows that are absent and distinct; returns their ids."""
        rows = np.ascontiguousarray(rows, dtype=np.int64)
        start = len(self)
        self.rows = np.concatenate([self.rows, rows])
        self._codes = np.concatenate([self._codes, self._encode(rows)])
        self._order = np.argsort(self._codes, kind="stable")
        self._sorted = self._codes[self._order]
        return np.arange(start, start + rows.shape[0])


def _elevate(positions: np.ndarray) -> np.ndarray:
    """Embed d-dimensional positions onto the d+1 lattice hyperplane."""
    n, d = positions.shape
    inv_std_dev = np.sqrt(2.0 / 3.0) * (d + 1)
    i = np.arange(d, dtype=np.float64)
    scale = inv_std_dev / np.sqrt((i + 1.0) * (i + 2.0))
    cf = positions * scale
    suffix = np.zeros((n, d + 1))
    suffix[:, :d] = np.cumsum(cf[:, ::-1], axis=1)[:, ::-1]
    elevated = np.empty((n, d + 1))
    elevated[:, 0] = suffix[:, 0]
    elevated[:, 1:] = suffix[:, 1:] - np.arange(1, d + 1) * cf
    return elevated


def _enclosing_simplex(elevated: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Remainder-zero vertex and per-coordinate rank of every elevated point."""
    n, d1 = elevated.shape
    v = elevated / d1
    up = np.ceil(v) * d1
    down = np.floor(v) * d1
    rem0 = np.where(up - elevated < elevated - down, up, down)
    total = np.rint(rem0.sum(axis=1) / d1).astype(np.int64)
    rem0 = np.rint(rem0).astype(np.int64)

    # Descending order of the fractional offsets, ties to the lower coordinate.
    order = np.argsort(-(elevated - rem0), axis=1, kind="stable")
    rank = np.empty((n, d1), dtype=np.int64)
    np.put_along_axis(rank, order, np.broadcast_to(np.arange(d1), (n, d1)), axis=1)

    rank += total[:, None]
    high = rank >= d1
    low = rank < 0
    rem0[high] -= d1
    rank[high] -= d1
    rem0[low] += d1
    rank[low] += d1
    return rem0, rank


def _barycentric(elevated: np.ndarray, rem0: np.ndarray, rank: np.ndarray) -> np.ndarray:
    n, d1 = elevated.shape
    d = d1 - 1
    delta = (elevated - rem0) / d1
    bary = np.zeros((n, d + 2))
    rows = np.arange(n)
    for i in range(d1):
        bary[rows, d - rank[:, i]] += delta[:, i]
        bary[rows, d + 1 - rank[:, i]] -= delta[:, i]
    bary[:, 0] += 1.0 + bary[:, d + 1]
    weights = np.clip(bary[:, :d1], 0.0, None)
    return weights / weights.sum(axis=1, keepdims=True)


def _vertex_keys(rem0: np.ndarray, rank: np.ndarray) -> np.ndarray:
    """Lattice keys (first d coordinates) of the d+1 simplex vertices.

    Vertex k+1 is vertex k moved one step down a lattice axis, and the d
    steps use distinct axes.
    """
    n, d1 = rem0.shape
    d = d1 - 1
    keys = np.empty((n, d1, d), dtype=np.int64)
    for k in range(d1):
        shift = np.where(rank[:, :d] <= d - k, k, k - d1)
        keys[:, k, :] = rem0[:, :d] + shift
    return keys


def _embed(positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric weights and simplex-vertex keys of every position."""
    elevated = _elevate(positions)
    rem0, rank = _enclosing_simplex(elevated)
    return _barycentric(elevated, rem0, rank), _vertex_keys(rem0, rank)


def _shift(keys: np.ndarray, axis: int, sign: int) -> np.ndarray:
    """Keys moved one step up (``sign`` 1) or down (-1) lattice ``axis``."""
    d = keys.shape[1]
    moved = keys - sign
    if axis < d:
        moved[:, axis] = keys[:, axis] + sign * d
    return moved


def _blur_profile(d: int) -> np.ndarray:
    """Unbounded-lattice blur weight between simplex vertices ``s`` steps apart.

    Two vertices s steps apart are joined by stepping the s axes between them
    (weight 0.5**s) or the other d+1-s axes the opposite way; a vertex reaches
    itself without steps or by stepping every axis in the same direction.
    """
    s = np.arange(d + 1, dtype=np.float64)
    profile = 0.5**s + 0.5 ** (d + 1 - s)
    profile[0] = 1.0 + 2.0 * 0.5 ** (d + 1)
    return profile


def _self_response(weights: np.ndarray) -> np.ndarray:
    """Response of each point to itself through the unbounded-lattice blur."""
    d1 = weights.shape[1]
    profile = _blur_profile(d1 - 1)
    out = profile[0] * (weights * weights).sum(axis=1)
    for s in range(1, d1):
        out += 2.0 * profile[s] * (weights[:, :-s] * weights[:, s:]).sum(axis=1)
    return out


def _blur_weight(delta: np.ndarray) -> np.ndarray:
    """Unbounded-lattice blur weight for rows of full (d+1)-coordinate displacements.

    Each axis contributes 1 for no step and 0.5 for a step either way. A
    displacement is a combination of axis steps up to adding the same count
    to every axis, so at most three step patterns need checking.
    """
    d1 = delta.shape[1]
    steps = (delta + np.mod(-delta[:, :1], d1)) // d1
    lo = steps.min(axis=1)
    hi = steps.max(axis=1)
    weight = np.zeros(delta.shape[0])
    for i in range(3):
        shift = i - 1 - lo
        moved = steps + shift[:, None]
        counts = np.count_nonzero(moved, axis=1)
        weight += np.where(shift <= 1 - hi, 0.5**counts, 0.0)
    return weight


def _full_keys(keys: np.ndarray) -> np.ndarray:
    return np.concatenate([keys, -keys.sum(axis=-1, keepdims=True)], axis=-1)


def _pair_kernel(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    w1, k1 = _embed(first)
    w2, k2 = _embed(second)
    d1 = w1.shape[1]
    v1 = _full_keys(k1)
    v2 = _full_keys(k2)
    delta = v2[:, None, :, :] - v1[:, :, None, :]
    blur = _blur_weight(delta.reshape(-1, d1)).reshape(-1, d1, d1)
    raw = np.einsum("pk,pl,pkl->p", w1, w2, blur)
    return raw / np.sqrt(_self_response(w1) * _self_response(w2))


class PermutohedralLattice:
    """Immutable Gaussian filter over a fixed point set.

    Build with :func:`build_lattice`; afterwards :meth:`filter` may be called
    concurrently from several threads. ``num_vertices`` counts the vertices
    that receive splatted values, ``table_size`` adds the blur-only ones, and
    ``complete`` tells whether every vertex the blur reaches was inserted.
    """

    def __init__(
        self,
        features: FeatureMatrix,
        scale: float | None = None,
        max_vertices: int | None = None,
    ):
        positions = features.data
        n, d = positions.shape
        self.dim = d
        self.count = n
        self.scale = lattice_scale(d) if scale is None else float(scale)

        self._weights, keys = _embed(positions * self.scale)
        index = _KeyIndex(keys.reshape(-1, d), margin=2 * (d + 1))
        self.num_vertices = len(index)
        self._offsets = index.inverse.reshape(n, d + 1)

        if max_vertices is None:
            max_vertices = max(_TABLE_FLOOR, _TABLE_GROWTH * self.num_vertices)
        up_links, self.complete = _insert_blur_vertices(index, max_vertices)
        size = len(index)
        self.table_size = size

        # Row ``size`` is a sink for missing neighbours.
        dtype = np.int32 if size < np.iinfo(np.int32).max else np.int64
        self._up = np.full((d + 1, size + 1), size, dtype=dtype)
        self._down = np.full((d + 1, size + 1), size, dtype=dtype)
        for j, links in enumerate(up_links):
            if links.shape[0] < size:
                later = index.lookup(_shift(index.rows[links.shape[0] :], j, 1))
                links = np.concatenate([links, later])
            has = np.flatnonzero(links >= 0)
            self._up[j, has] = links[has]
            self._down[j, links[has]] = has

        point_ids = np.repeat(np.arange(n), d + 1)
        self._splat = sparse.csr_matrix(
            (self._weights.reshape(-1), (self._offsets.reshape(-1), point_ids)), shape=(size, n)
        )
        self._slice = self._splat.T.tocsr()
        self._inv_root = 1.0 / np.sqrt(_self_response(self._weights))
        self._norm = self._apply(np.ones((n, 1)))[:, 0]
        logger.debug(
            "lattice built: n=%d d=%d vertices=%d table=%d complete=%s scale=%.4f",
            n,
            d,
            self.num_vertices,
            size,
            self.complete,
            self.scale,
        )

    # ------------------------------------------------------------------ #
    @property
    def weights(self) -> np.ndarray:
        """Barycentric weights, one row of d+1 entries per point."""
        return self._weights

    @property
    def offsets(self) -> np.ndarray:
        """Lattice vertex index of every simplex vertex, one row per point."""
        return self._offsets

    @property
    def normalization(self) -> np.ndarray:
        """Filtered all-ones vector."""
        return self._norm

    def neighbors(self, axis: int) -> tuple[np.ndarray, np.ndarray]:
        """Blur neighbours of every table vertex along ``axis`` (-1 = missing)."""
        size = self.table_size
        down = self._down[axis, :size].astype(np.int64)
        up = self._up[axis, :size].astype(np.int64)
        return np.where(down == size, -1, down), np.where(up == size, -1, up)

    # ------------------------------------------------------------------ #
    def _blur(self, vertex_values: np.ndarray) -> np.ndarray:
        size = self.table_size
        padded = np.zeros((size + 1, vertex_values.shape[1]))
        current = vertex_values
        for j in range(self.dim + 1):
            padded[:size] = current
            current = _SQRT_HALF * (current + padded[self._down[j, :size]])
        for j in reversed(range(self.dim + 1)):
            padded[:size] = current
            current = _SQRT_HALF * (current + padded[self._up[j, :size]])
        return current

    def _apply(self, values: np.ndarray) -> np.ndarray:
        scaled = values * self._inv_root[:, None]
        blurred = self._blur(np.asarray(self._splat @ scaled))
        return np.asarray(self._slice @ blurred) * self._inv_root[:, None]

    # ------------------------------------------------------------------ #
    def filter_array(self, values: np.ndarray, normalize: bool = False) -> np.ndarray:
        """Filter an (n, c) array without wrapping; see :func:`filter`."""
        values = np.asarray(values, dtype=np.float64)
        squeeze = values.ndim == 1
        if squeeze:
            values = values[:, None]
        if values.shape[0] != self.count:
            raise DimensionError(
                f"Value count {values.shape[0]} does not match lattice count {self.count}",
                expected=self.count,
                actual=values.shape[0],
            )
        out = self._apply(values)
        if normalize:
            out = out / self._norm[:, None]
        return out[:, 0] if squeeze else out

    def filter(self, values: ValuesLike, normalize: bool = False) -> ValueMatrix:
        matrix = values if isinstance(values, ValueMatrix) else ValueMatrix(values)
        return ValueMatrix(self.filter_array(matrix.data, normalize=normalize))


def _insert_blur_vertices(index: _KeyIndex, limit: int) -> tuple[list[np.ndarray], bool]:
    """Insert the vertices the forward half steps reach, one axis at a time.

    Returns, per axis, the up-neighbour ids of the rows present when that
    axis was processed, and whether every reachable vertex fit under
    ``limit``.
    """
    d = index.rows.shape[1]
    links: list[np.ndarray] = []
    complete = True
    for j in range(d + 1):
        target = _shift(index.rows, j, 1)
        ids = index.lookup(target)
        missing = np.flatnonzero((ids < 0) & index.covers(target))
        if missing.size:
            if complete and len(index) + missing.size <= limit:
                ids[missing] = index.extend(target[missing])
            else:
                complete = False
        links.append(ids)
    return links, complete


class BlockLattice:
    """Independent lattices over disjoint consecutive row ranges.

    Used when a kernel does not couple frames: every block is filtered on its
    own, which makes a decoupled joint run identical to per-frame runs.
    """

    def __init__(self, blocks: Sequence[tuple[int, int]], lattices: Sequence[GaussianFilter]):
        if len(blocks) != len(lattices) or not blocks:
            raise DimensionError("Block lattice needs one lattice per non-empty block")
        self.blocks = list(blocks)
        self.lattices = list(lattices)
        self.count = self.blocks[-1][1]
        for (start, stop), lattice in zip(self.blocks, self.lattices):
            if lattice.count != stop - start:
                raise DimensionError(
                    f"Block [{start}, {stop}) has a lattice of {lattice.count} points",
                    block=(start, stop),
                )

    @property
    def num_vertices(self) -> int:
        return int(sum(getattr(lat, "num_vertices", 0) for lat in self.lattices))

    def filter_array(self, values: np.ndarray, normalize: bool = False) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] != self.count:
            raise DimensionError(
                f"Value count {values.shape[0]} does not match lattice count {self.count}",
                expected=self.count,
                actual=values.shape[0],
            )
        out = np.empty_like(values)
        for (start, stop), lattice in zip(self.blocks, self.lattices):
            out[start:stop] = lattice.filter_array(values[start:stop], normalize=normalize)
        return out

    def filter(self, values: ValuesLike, normalize: bool = False) -> ValueMatrix:
        matrix = values if isinstance(values, ValueMatrix) else ValueMatrix(values)
        return ValueMatrix(self.filter_array(matrix.data, normalize=normalize))


# ---------------------------------------------------------------------- #
def build_lattice(features: FeatureMatrix) -> PermutohedralLattice:
    """Build the filtering structure for ``features``; deterministic."""
    return PermutohedralLattice(features)


def filter(  # noqa: A001 - domain name
    lattice: GaussianFilter, values: ValuesLike, normalize: bool = False
) -> ValueMatrix:
    """Gaussian-filter ``values`` over ``lattice`` (self term included).

    With ``normalize`` each output row is divided by the filtered all-ones
    vector.
    """
    matrix = values if isinstance(values, ValueMatrix) else ValueMatrix(values)
    return ValueMatrix(lattice.filter_array(matrix.data, normalize=normalize))


def lattice_kernel(
    first: FeatureMatrix, second: FeatureMatrix, scale: float | None = None
) -> np.ndarray:
    """Kernel value the lattice implies between paired points.

    Row ``p`` of ``first`` is paired with row ``p`` of ``second``. The value is
    the one a complete :class:`PermutohedralLattice` built with the same
    ``scale`` applies between the two points.
    """
    if first.count != second.count or first.dim != second.dim:
        raise DimensionError(
            "Paired feature matrices must have the same shape",
            expected=(first.count, first.dim),
            actual=(second.count, second.dim),
        )
    scale = lattice_scale(first.dim) if scale is None else float(scale)
    return _pair_kernel(first.data * scale, second.data * scale)


def brute_force_gaussian(features: FeatureMatrix, values: ValuesLike) -> ValueMatrix:
    """Exact O(n^2) Gaussian sum, self term included."""
    matrix = values if isinstance(values, ValueMatrix) else ValueMatrix(values)
    if matrix.count != features.count:
        raise DimensionError(
            f"Value count {matrix.count} does not match feature count {features.count}",
            expected=features.count,
            actual=matrix.count,
        )
    if features.count > BRUTE_FORCE_ADVISORY_MAX:
        logger.warning(
            "brute_force_gaussian on %d points exceeds the advisory limit %d",
            features.count,
            BRUTE_FORCE_ADVISORY_MAX,
        )
    return ValueMatrix(_brute_force(features.data, matrix.data))


def _brute_force(points: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = np.empty((points.shape[0], values.shape[1]))
    for start in range(0, points.shape[0], _BRUTE_FORCE_CHUNK):
        stop = min(start + _BRUTE_FORCE_CHUNK, points.shape[0])
        d2 = distance.cdist(points[start:stop], points, "sqeuclidean")
        out[start:stop] = np.exp(-0.5 * d2) @ values
    return out


@cached
def lattice_scale(dim: int) -> float:
    """Feature scale that best matches the lattice kernel to the exact one.

    Fitted once per dimension by bounded scalar minimisation of the relative
    squared kernel error over fixed-seed point pairs drawn from uniform clouds
    of several densities.
    """
    rng = np.random.default_rng(_CALIBRATION_SEED + dim)
    samples = []
    for side in _CALIBRATION_SIDES:
        first = rng.uniform(0.0, side, size=(_CALIBRATION_PAIRS, dim))
        second = rng.uniform(0.0, side, size=(_CALIBRATION_PAIRS, dim))
        exact = np.exp(-0.5 * ((first - second) ** 2).sum(axis=1))
        diagonal = _CALIBRATION_PAIRS / (_CALIBRATION_CLOUD - 1)
        samples.append((first, second, exact, float((exact * exact).sum()) + diagonal))

    def mismatch(scale: float) -> float:
        total = 0.0
        for first, second, exact, energy in samples:
            approx = _pair_kernel(first * scale, second * scale)
            total += float(((approx - exact) ** 2).sum()) / energy
        return total

    result = optimize.minimize_scalar(
        mismatch, bounds=_SCALE_BOUNDS, method="bounded", options={"xatol": 1e-3}
    )
    scale = float(result.x)
    logger.debug("lattice scale for d=%d: %.4f (mismatch %.3e)", dim, scale, float(result.fun))
    return scale


def relative_rms(approx: np.ndarray, exact: np.ndarray) -> float:
    """sqrt(sum (a - e)^2 / sum e^2)."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    denom = float((exact * exact).sum())
    if denom == 0.0:
        return float(np.sqrt(((approx - exact) ** 2).sum()))
    return float(np.sqrt(((approx - exact) ** 2).sum() / denom))


__all__ = [
    "FeatureMatrix",
    "ValueMatrix",
    "GaussianFilter",
    "PermutohedralLattice",
    "BlockLattice",
    "build_lattice",
    "filter",
    "lattice_kernel",
    "brute_force_gaussian",
    "lattice_scale",
    "relative_rms",
]
