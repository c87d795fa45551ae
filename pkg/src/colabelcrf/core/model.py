"""The joint random field over a batch of video frames.

A :class:`CrfProblem` bundles the per-pixel unary costs, the Gaussian pairwise
kernels with their feature embeddings, the label compatibility and the
higher-order segment cliques. Exact energies over small instances are
evaluated here for verification; inference lives in :mod:`colabelcrf.core.solver`.

Variable ids follow ``id = t * (W * H) + y * W + x``.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.spatial import distance

from colabelcrf.core.errors import (
    DimensionError,
    ErrorCodes,
    SizeGuardError,
    ValueRangeError,
    require_finite,
)
from colabelcrf.core.hoc import CliqueSet, total_clique_energy
from colabelcrf.core.lattice import FeatureMatrix

logger = logging.getLogger(__name__)

ORACLE_MAX_VARIABLES = 5000
DECOUPLING_THRESHOLD = 1e-12
PROBABILITY_FLOOR = 1e-12


class KernelKind(str, Enum):
    SMOOTHNESS = "smoothness"
    APPEARANCE = "appearance"


@dataclass(frozen=True)
class VideoVolume:
    """F frames of H x W RGB pixels, colors in [0, 255]."""

    rgb: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.rgb, dtype=np.float64)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.ndim != 4 or arr.shape[-1] != 3 or min(arr.shape[:3]) < 1:
            raise DimensionError(
                f"Video volume must be (F, H, W, 3) with F, H, W >= 1, got {arr.shape}",
                shape=arr.shape,
            )
        require_finite(arr, "video volume")
        if arr.min() < 0.0 or arr.max() > 255.0:
            raise ValueRangeError("Color values must lie in [0, 255]")
        arr.setflags(write=False)
        object.__setattr__(self, "rgb", arr)

    @classmethod
    def from_frames(cls, frames: Sequence[np.ndarray]) -> VideoVolume:
        if not frames:
            raise DimensionError("No frames given", code=ErrorCodes.DIMENSION_EMPTY)
        shapes = {np.shape(f) for f in frames}
        if len(shapes) != 1:
            raise DimensionError(f"Frames differ in size: {sorted(shapes)}")
        return cls(np.stack([np.asarray(f) for f in frames]))

    @property
    def frames(self) -> int:
        return int(self.rgb.shape[0])

    @property
    def height(self) -> int:
        return int(self.rgb.shape[1])

    @property
    def width(self) -> int:
        return int(self.rgb.shape[2])

    @property
    def pixels(self) -> int:
        return self.width * self.height

    @property
    def num_variables(self) -> int:
        return self.frames * self.pixels

    def frames_slice(self, start: int, stop: int) -> VideoVolume:
        return VideoVolume(self.rgb[start:stop])

    def coordinates(self) -> np.ndarray:
        """(n, 3) array of (x, y, t) per variable id."""
        ids = np.arange(self.num_variables)
        t, rest = np.divmod(ids, self.pixels)
        y, x = np.divmod(rest, self.width)
        return np.column_stack([x, y, t]).astype(np.float64)

    def colors(self) -> np.ndarray:
        return self.rgb.reshape(-1, 3)


@dataclass(frozen=True)
class UnaryField:
    """Per-pixel label costs (negative log scores), shape (F, W*H, L)."""

    costs: np.ndarray
    width: int
    height: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.costs, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[0] < 1 or arr.shape[2] < 1:
            raise DimensionError(f"Unary costs must be (F, N, L), got {arr.shape}", shape=arr.shape)
        if arr.shape[1] != self.width * self.height:
            raise DimensionError(
                f"Unary has {arr.shape[1]} pixels per frame, expected "
                f"{self.width}x{self.height}={self.width * self.height}",
                expected=self.width * self.height,
                actual=arr.shape[1],
            )
        require_finite(arr, "unary costs")
        arr.setflags(write=False)
        object.__setattr__(self, "costs", arr)

    @classmethod
    def from_probabilities(cls, probs: np.ndarray, width: int, height: int) -> UnaryField:
        """Costs ``-ln(max(p, 1e-12))`` from per-label probabilities."""
        p = np.asarray(probs, dtype=np.float64)
        require_finite(p, "unary probabilities")
        return cls(-np.log(np.maximum(p, PROBABILITY_FLOOR)), width, height)

    @classmethod
    def concat(cls, fields: Sequence[UnaryField]) -> UnaryField:
        if not fields:
            raise DimensionError("No unary fields given", code=ErrorCodes.DIMENSION_EMPTY)
        first = fields[0]
        for other in fields[1:]:
            if (other.width, other.height, other.labels) != (first.width, first.height, first.labels):
                raise DimensionError(
                    "Unary fields differ in size or label count",
                    expected=(first.width, first.height, first.labels),
                    actual=(other.width, other.height, other.labels),
                )
        return cls(np.concatenate([f.costs for f in fields]), first.width, first.height)

    @property
    def frames(self) -> int:
        return int(self.costs.shape[0])

    @property
    def labels(self) -> int:
        return int(self.costs.shape[2])

    def frames_slice(self, start: int, stop: int) -> UnaryField:
        return UnaryField(self.costs[start:stop], self.width, self.height)

    def flat(self) -> np.ndarray:
        """(F*N, L) view in variable-id order."""
        return self.costs.reshape(-1, self.labels)


@dataclass(frozen=True)
class KernelSpec:
    """One Gaussian pairwise kernel with its weight and bandwidths."""

    kind: KernelKind
    weight: float
    sigma_xy: float
    sigma_time: float
    sigma_rgb: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if not math.isfinite(self.weight) or self.weight < 0:
            raise ValueRangeError(f"Kernel weight must be finite and >= 0, got {self.weight}")
        for name in ("sigma_xy", "sigma_time"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueRangeError(f"{name} must be > 0, got {value}", parameter=name)
        if self.kind is KernelKind.APPEARANCE:
            if self.sigma_rgb is None or not self.sigma_rgb > 0:
                raise ValueRangeError(
                    f"Appearance kernel needs sigma_rgb > 0, got {self.sigma_rgb}",
                    parameter="sigma_rgb",
                )

    @property
    def dim(self) -> int:
        return 6 if self.kind is KernelKind.APPEARANCE else 3

    def cross_frame_value(self) -> float:
        """Kernel value between equal pixels in adjacent frames."""
        return math.exp(-1.0 / (self.sigma_time * self.sigma_time))

    def couples_frames(self) -> bool:
        return self.cross_frame_value() >= DECOUPLING_THRESHOLD

    def scales(self) -> np.ndarray:
        """Per-coordinate multipliers turning (x, y, t[, r, g, b]) into features."""
        root2 = math.sqrt(2.0)
        spatial = [root2 / self.sigma_xy] * 2 + [root2 / self.sigma_time]
        if self.kind is KernelKind.APPEARANCE:
            assert self.sigma_rgb is not None
            spatial += [root2 / self.sigma_rgb] * 3
        return np.asarray(spatial)


@dataclass(frozen=True)
class Compatibility:
    """Symmetric L x L label compatibility; Potts when ``potts`` is set."""

    matrix: np.ndarray
    potts: bool = False

    def __post_init__(self) -> None:
        mu = np.asarray(self.matrix, dtype=np.float64)
        if mu.ndim != 2 or mu.shape[0] != mu.shape[1] or mu.shape[0] < 1:
            raise DimensionError(f"Compatibility must be square, got {mu.shape}", shape=mu.shape)
        require_finite(mu, "compatibility")
        if not np.array_equal(mu, mu.T):
            raise ValueRangeError("Compatibility matrix must be symmetric")
        if self.potts and not np.array_equal(mu, 1.0 - np.eye(mu.shape[0])):
            raise ValueRangeError("Potts compatibility must be 0 on the diagonal and 1 elsewhere")
        mu.setflags(write=False)
        object.__setattr__(self, "matrix", mu)

    @classmethod
    def potts_model(cls, labels: int) -> Compatibility:
        return cls(1.0 - np.eye(labels), potts=True)

    @property
    def labels(self) -> int:
        return int(self.matrix.shape[0])


@dataclass(frozen=True)
class CrfProblem:
    """Unaries, kernels, compatibility and cliques over one frame batch."""

    volume: VideoVolume
    unary: UnaryField
    kernels: tuple[KernelSpec, ...]
    compatibility: Compatibility
    cliques: CliqueSet = field(default_factory=CliqueSet.empty)
    iterations: int = 5
    batch: int = 50

    def __post_init__(self) -> None:
        object.__setattr__(self, "kernels", tuple(self.kernels))
        vol, un = self.volume, self.unary
        if (vol.frames, vol.width, vol.height) != (un.frames, un.width, un.height):
            raise DimensionError(
                "Unary field does not match the video volume",
                expected=(vol.frames, vol.width, vol.height),
                actual=(un.frames, un.width, un.height),
            )
        if self.compatibility.labels != un.labels:
            raise DimensionError(
                f"Compatibility has {self.compatibility.labels} labels, unary has {un.labels}",
                expected=un.labels,
                actual=self.compatibility.labels,
            )
        if self.iterations < 1:
            raise ValueRangeError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch < 1:
            raise ValueRangeError(f"batch must be >= 1, got {self.batch}")
        if len(self.cliques) and self.cliques.max_member() >= vol.num_variables:
            raise ValueRangeError(
                f"Clique member {self.cliques.max_member()} outside "
                f"{vol.num_variables} variables",
                code=ErrorCodes.VALUE_MEMBERSHIP,
            )

    @property
    def num_variables(self) -> int:
        return self.volume.num_variables

    @property
    def labels(self) -> int:
        return self.unary.labels

    def frames_slice(self, start: int, stop: int) -> CrfProblem:
        pixels = self.volume.pixels
        return CrfProblem(
            volume=self.volume.frames_slice(start, stop),
            unary=self.unary.frames_slice(start, stop),
            kernels=self.kernels,
            compatibility=self.compatibility,
            cliques=self.cliques.restrict(start * pixels, stop * pixels),
            iterations=self.iterations,
            batch=self.batch,
        )


def default_kernels() -> tuple[KernelSpec, KernelSpec]:
    return (
        KernelSpec(KernelKind.SMOOTHNESS, weight=3.0, sigma_xy=3.0, sigma_time=1.0),
        KernelSpec(KernelKind.APPEARANCE, weight=5.0, sigma_xy=50.0, sigma_time=3.0, sigma_rgb=10.0),
    )


def embed_volume(volume: VideoVolume, kernel: KernelSpec) -> np.ndarray:
    """(n, d) scaled features of every variable for ``kernel``."""
    coords = volume.coordinates()
    if kernel.kind is KernelKind.APPEARANCE:
        coords = np.column_stack([coords, volume.colors()])
    return coords * kernel.scales()


def embed_features(problem: CrfProblem, kernel: KernelSpec) -> FeatureMatrix:
    return FeatureMatrix(embed_volume(problem.volume, kernel))


def _check_variable(problem: CrfProblem, var: int) -> None:
    if not 0 <= var < problem.num_variables:
        raise ValueRangeError(
            f"Variable id {var} outside [0, {problem.num_variables})", variable=var
        )


def pairwise_kernel_value(problem: CrfProblem, kernel: KernelSpec, a: int, b: int) -> float:
    """Exact kernel value between variables ``a`` and ``b``."""
    _check_variable(problem, a)
    _check_variable(problem, b)
    vol = problem.volume
    ta, ra = divmod(a, vol.pixels)
    tb, rb = divmod(b, vol.pixels)
    ya, xa = divmod(ra, vol.width)
    yb, xb = divmod(rb, vol.width)
    exponent = ((xa - xb) ** 2 + (ya - yb) ** 2) / kernel.sigma_xy**2
    exponent += (ta - tb) ** 2 / kernel.sigma_time**2
    if kernel.kind is KernelKind.APPEARANCE:
        assert kernel.sigma_rgb is not None
        ca = vol.rgb[ta, ya, xa]
        cb = vol.rgb[tb, yb, xb]
        exponent += float(((ca - cb) ** 2).sum()) / kernel.sigma_rgb**2
    return math.exp(-exponent)


def _guard(problem: CrfProblem, what: str) -> None:
    n = problem.num_variables
    if n > ORACLE_MAX_VARIABLES:
        raise SizeGuardError(
            f"{what} is O(n^2) and limited to {ORACLE_MAX_VARIABLES} variables, got {n}",
            variables=n,
            limit=ORACLE_MAX_VARIABLES,
        ).add_fix("Use the lattice-based solver for large instances")


def kernel_matrix(problem: CrfProblem, kernel: KernelSpec) -> np.ndarray:
    """Exact dense kernel matrix with a zero diagonal."""
    _guard(problem, "kernel_matrix")
    feats = embed_volume(problem.volume, kernel)
    k = np.exp(-0.5 * distance.squareform(distance.pdist(feats, "sqeuclidean")))
    np.fill_diagonal(k, 0.0)
    return k


def pairwise_matrix(problem: CrfProblem) -> np.ndarray:
    """sum_m w_m k_m over distinct pairs (zero diagonal)."""
    _guard(problem, "pairwise_matrix")
    n = problem.num_variables
    total = np.zeros((n, n))
    for kernel in problem.kernels:
        if kernel.weight > 0:
            total += kernel.weight * kernel_matrix(problem, kernel)
    return total


def validate_labeling(labeling: np.ndarray, n: int, labels: int) -> np.ndarray:
    lab = np.asarray(labeling)
    if lab.shape != (n,):
        raise DimensionError(
            f"Labeling has shape {lab.shape}, expected ({n},)", expected=n, actual=lab.shape
        )
    bad = (lab < 0) | (lab >= labels)
    if bad.any():
        index = int(np.argmax(bad))
        raise ValueRangeError(
            f"Label {int(lab[index])} at variable {index} outside [0, {labels})",
            code=ErrorCodes.VALUE_LABEL_RANGE,
            variable=index,
        )
    return lab.astype(np.int64)


def energy(problem: CrfProblem, labeling: np.ndarray) -> float:
    """Exact energy: unaries, distinct pairs and clique costs."""
    n = problem.num_variables
    lab = validate_labeling(labeling, n, problem.labels)
    unary = float(problem.unary.flat()[np.arange(n), lab].sum())

    pair = 0.0
    if any(k.weight > 0 for k in problem.kernels):
        k = pairwise_matrix(problem)
        mu = problem.compatibility.matrix
        pair = 0.5 * float((k * mu[lab][:, lab]).sum())

    cliques = total_clique_energy(problem.cliques, lab)
    return unary + pair + cliques


__all__ = [
    "ORACLE_MAX_VARIABLES",
    "KernelKind",
    "VideoVolume",
    "UnaryField",
    "KernelSpec",
    "Compatibility",
    "CrfProblem",
    "default_kernels",
    "embed_volume",
    "embed_features",
    "pairwise_kernel_value",
    "kernel_matrix",
    "pairwise_matrix",
    "validate_labeling",
    "energy",
]
