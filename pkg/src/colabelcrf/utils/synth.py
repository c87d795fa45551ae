"""Deterministic synthetic videos with ground truth, noisy unaries and segment layers.

A scene is a textured background (label 0) with one moving shape per
foreground label. Shapes alternate between rectangles and discs, move at a
constant velocity and bounce off the frame border; later labels are drawn on
top. Unary probabilities blend the ground-truth one-hot with a random
distribution:

    p = (1 - rate) * onehot + rate * r
    r = share * r_object + (1 - share) * r_block,   r_* ~ Dirichlet(1, ..., 1)

where r_object is drawn once per ground-truth region and frame and r_block
once per 8x8 block and frame. Object-level draws mislabel whole objects in
single frames, which smoothing inside the frame cannot undo.

With the draws fixed, unary-argmax accuracy decreases monotonically in
``rate``, so the rate that gives a target accuracy is found by bisection.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from colabelcrf.core.errors import ValueRangeError
from colabelcrf.core.model import UnaryField, VideoVolume
from colabelcrf.core.segments import (
    SegmentMap,
    SegmentScope,
    grid_segments,
    kmeans_color_segments,
    supervoxel_grid_segments,
)
from colabelcrf.utils.formats import (
    Palette,
    PaletteEntry,
    save_image,
    save_labelmap,
    save_palette,
    save_segments,
    save_unary,
)
from colabelcrf.utils.metrics import average_per_class_accuracy, confusion

logger = logging.getLogger(__name__)

TARGET_UNARY_ACCURACY = 0.75
CALIBRATION_STEPS = 40

_CLASS_COLORS = (
    (90, 110, 80),
    (200, 40, 40),
    (40, 60, 200),
    (230, 200, 40),
    (40, 190, 190),
    (190, 40, 190),
    (240, 130, 30),
    (250, 250, 250),
)


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of one synthetic video; ``noise=None`` calibrates the rate."""

    seed: int = 0
    frames: int = 10
    width: int = 128
    height: int = 128
    labels: int = 4
    noise: float | None = None
    noise_block: int = 8
    object_share: float = 0.8
    grid_cell: int = 8
    supervoxel_cell: int = 16
    kmeans_clusters: int = 64
    target_accuracy: float = TARGET_UNARY_ACCURACY

    def __post_init__(self) -> None:
        for name in ("frames", "width", "height", "noise_block", "grid_cell",
                     "supervoxel_cell", "kmeans_clusters"):
            if getattr(self, name) < 1:
                raise ValueRangeError(f"{name} must be >= 1", parameter=name)
        if self.labels < 2:
            raise ValueRangeError("labels must be >= 2", parameter="labels")
        if self.labels > 255:
            raise ValueRangeError("labels must be <= 255", parameter="labels")
        if self.noise is not None and not 0.0 <= self.noise <= 1.0:
            raise ValueRangeError(f"noise must lie in [0, 1], got {self.noise}", parameter="noise")
        if not 0.0 <= self.object_share <= 1.0:
            raise ValueRangeError(
                f"object_share must lie in [0, 1], got {self.object_share}", parameter="object_share"
            )
        if not 0.0 < self.target_accuracy <= 1.0:
            raise ValueRangeError("target_accuracy must lie in (0, 1]", parameter="target_accuracy")


@dataclass
class SyntheticVideo:
    config: SynthConfig
    rgb: np.ndarray
    gt: np.ndarray
    noise_draws: np.ndarray
    rate: float
    unary: UnaryField
    unary_accuracy: float
    layers: dict[str, SegmentMap] = field(default_factory=dict)

    @property
    def volume(self) -> VideoVolume:
        return VideoVolume(self.rgb)

    def frame_names(self) -> list[str]:
        return [f"frame_{t:05d}" for t in range(self.config.frames)]


def class_color(label: int) -> tuple[int, int, int]:
    if label < len(_CLASS_COLORS):
        return _CLASS_COLORS[label]
    # Blue 255 is unused by the fixed colors; green keeps labels apart.
    return ((label * 67) % 256, label, 255)


def synth_palette(labels: int) -> Palette:
    names = ["background"] + [f"object_{i}" for i in range(1, labels)]
    return Palette(tuple(PaletteEntry(i, class_color(i), names[i]) for i in range(labels)))


def render_scene(config: SynthConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(rgb, gt) arrays of shape (F, H, W, 3) uint8 and (F, H, W) uint8."""
    f, h, w = config.frames, config.height, config.width
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)

    texture = rng.normal(0.0, 8.0, size=(h, w))
    texture += 10.0 * np.sin(x / 5.0) * np.cos(y / 7.0)
    background = np.clip(np.array(class_color(0))[None, None, :] + texture[..., None], 0, 255)

    side = min(w, h)
    shapes = []
    for label in range(1, config.labels):
        radius = rng.uniform(0.12, 0.22) * side
        center = rng.uniform([radius, radius], [max(w - radius, radius + 1), max(h - radius, radius + 1)])
        velocity = rng.uniform(-2.0, 2.0, size=2)
        shapes.append((label, label % 2 == 1, radius, center, velocity))

    rgb = np.empty((f, h, w, 3), dtype=np.uint8)
    gt = np.zeros((f, h, w), dtype=np.uint8)
    for t in range(f):
        frame = background.copy()
        labels = np.zeros((h, w), dtype=np.uint8)
        for label, is_rect, radius, center, velocity in shapes:
            cx, cy = _bounce(center[0] + velocity[0] * t, radius, w), _bounce(center[1] + velocity[1] * t, radius, h)
            if is_rect:
                mask = (np.abs(x - cx) <= radius) & (np.abs(y - cy) <= 0.7 * radius)
            else:
                mask = (x - cx) ** 2 + (y - cy) ** 2 <= radius**2
            labels[mask] = label
            frame[mask] = class_color(label)
        frame += rng.normal(0.0, 4.0, size=frame.shape)
        rgb[t] = np.clip(np.rint(frame), 0, 255).astype(np.uint8)
        gt[t] = labels
    return rgb, gt


def _bounce(position: float, radius: float, extent: int) -> float:
    """Reflect ``position`` into [radius, extent - radius]."""
    low, high = radius, extent - radius
    if high <= low:
        return extent / 2.0
    span = high - low
    phase = (position - low) % (2.0 * span)
    return low + (phase if phase <= span else 2.0 * span - phase)


def draw_block_noise(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """(F, H*W, L) distributions, constant over each noise block."""
    block = config.noise_block
    rows = -(-config.height // block)
    cols = -(-config.width // block)
    draws = rng.dirichlet(np.ones(config.labels), size=(config.frames, rows, cols))
    expanded = draws.repeat(block, axis=1).repeat(block, axis=2)
    expanded = expanded[:, : config.height, : config.width]
    return expanded.reshape(config.frames, -1, config.labels)


def draw_object_noise(config: SynthConfig, gt: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """(F, H*W, L) distributions, constant over each ground-truth label of each frame."""
    draws = rng.dirichlet(np.ones(config.labels), size=(config.frames, config.labels))
    flat = gt.reshape(config.frames, -1)
    return draws[np.arange(config.frames)[:, None], flat]


def draw_noise(config: SynthConfig, gt: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Object-level and block-level draws mixed by ``config.object_share``."""
    share = config.object_share
    objects = draw_object_noise(config, gt, rng)
    blocks = draw_block_noise(config, rng)
    return share * objects + (1.0 - share) * blocks


def blend(gt: np.ndarray, draws: np.ndarray, rate: float) -> np.ndarray:
    labels = draws.shape[-1]
    onehot = np.eye(labels)[gt.reshape(gt.shape[0], -1)]
    return (1.0 - rate) * onehot + rate * draws


def argmax_accuracy(gt: np.ndarray, probs: np.ndarray) -> float:
    """Average per-class accuracy of the per-pixel argmax."""
    labels = probs.shape[-1]
    pred = np.argmax(probs, axis=-1)
    return average_per_class_accuracy(confusion(pred, gt, labels)).average


def calibrate_noise(
    gt: np.ndarray,
    draws: np.ndarray,
    target: float = TARGET_UNARY_ACCURACY,
    steps: int = CALIBRATION_STEPS,
) -> float:
    """Smallest rate (to bisection precision) whose argmax accuracy is <= ``target``."""
    low, high = 0.0, 1.0
    if argmax_accuracy(gt, blend(gt, draws, high)) > target:
        logger.warning("Even pure noise keeps unary accuracy above %.3f", target)
        return high
    for _ in range(steps):
        mid = 0.5 * (low + high)
        if argmax_accuracy(gt, blend(gt, draws, mid)) > target:
            low = mid
        else:
            high = mid
    logger.info("calibrated noise rate %.6f for target accuracy %.3f", high, target)
    return high


def build_layers(config: SynthConfig, rgb: np.ndarray, kmeans: bool = True) -> dict[str, SegmentMap]:
    """Grid, supervoxel-grid and k-means layers, each covering every frame."""
    grid = grid_segments(config.width, config.height, config.grid_cell)
    layers = {
        "grid": SegmentMap(np.repeat(grid.ids, config.frames, axis=0), SegmentScope.PER_FRAME),
        "supervoxels": supervoxel_grid_segments(
            config.frames, config.width, config.height, config.supervoxel_cell
        ),
    }
    if kmeans:
        clusters = min(config.kmeans_clusters, config.width * config.height)
        layers["kmeans"] = SegmentMap.stack([
            kmeans_color_segments(rgb[t], clusters, seed=config.seed + t)
            for t in range(config.frames)
        ])
    return layers


def generate(config: SynthConfig, with_layers: bool = True) -> SyntheticVideo:
    """Render, corrupt and segment one video; identical output for identical config."""
    scene_seq, noise_seq = np.random.SeedSequence(config.seed).spawn(2)
    rgb, gt = render_scene(config, np.random.default_rng(scene_seq))
    draws = draw_noise(config, gt, np.random.default_rng(noise_seq))
    if config.noise is None:
        rate = calibrate_noise(gt, draws, config.target_accuracy)
    else:
        rate = float(config.noise)
    probs = blend(gt, draws, rate)
    accuracy = argmax_accuracy(gt, probs)
    logger.info("synthetic video %dx%dx%d, rate %.4f, unary accuracy %.4f",
                config.frames, config.width, config.height, rate, accuracy)
    unary = UnaryField.from_probabilities(probs, config.width, config.height)
    layers = build_layers(config, rgb) if with_layers else {}
    return SyntheticVideo(config, rgb, gt, draws, rate, unary, accuracy, layers)


def write_dataset(video: SyntheticVideo, out_dir: str | Path) -> dict[str, Any]:
    """Write images/, gt/, unaries/, segments/, palette.txt and manifest.yaml."""
    out = Path(out_dir)
    config = video.config
    names = video.frame_names()
    for t, stem in enumerate(names):
        save_image(out / "images" / f"{stem}.ppm", video.rgb[t])
        save_labelmap(out / "gt" / f"{stem}.pgm", video.gt[t])
        save_unary(out / "unaries" / f"{stem}.unr", video.unary.costs[t], config.width, config.height)
    for name, layer in video.layers.items():
        save_segments(out / "segments" / f"{name}.seg", layer)
    save_palette(out / "palette.txt", synth_palette(config.labels))

    manifest: dict[str, Any] = {
        "parameters": {k: v for k, v in asdict(config).items()},
        "noise_rate": float(video.rate),
        "noise_calibrated": config.noise is None,
        "unary_argmax_accuracy": float(video.unary_accuracy),
        "frames": names,
        "layers": {
            name: {"file": f"segments/{name}.seg", "scope": layer.scope.name.lower()}
            for name, layer in video.layers.items()
        },
    }
    (out / "manifest.yaml").write_text(yaml.safe_dump(manifest, sort_keys=True), encoding="utf-8")
    return manifest


__all__ = [
    "TARGET_UNARY_ACCURACY",
    "SynthConfig",
    "SyntheticVideo",
    "class_color",
    "synth_palette",
    "render_scene",
    "draw_block_noise",
    "draw_object_noise",
    "draw_noise",
    "blend",
    "argmax_accuracy",
    "calibrate_noise",
    "build_layers",
    "generate",
    "write_dataset",
]
