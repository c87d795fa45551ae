"""colabelcrf public API.

A small, stable layer over the core modules for programs that want to run
the pipeline without going through the command line.

Example:
    >>> from colabelcrf.core.api import load_video, infer
    >>> names, volume, unary = load_video("data/images", "data/unaries")
    >>> result = infer(volume, unary, batch=50)
    >>> result.labels.shape
    (10, 128, 128)
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from colabelcrf.core.errors import DimensionError, ErrorCodes, InputFileError
from colabelcrf.core.hoc import CliqueSet, PnPottsParams
from colabelcrf.core.model import (
    Compatibility,
    KernelSpec,
    UnaryField,
    VideoVolume,
    default_kernels,
)
from colabelcrf.core.performance import get_monitor
from colabelcrf.core.segments import SegmentMap, cliques_from_map, kmeans_color_segments
from colabelcrf.core.solver import MarginalField, SolverOptions, SolverReport, run_video
from colabelcrf.utils.formats import (
    check_frame_names,
    list_frames,
    load_image,
    load_labelmap,
    load_segments,
    load_unary,
)
from colabelcrf.utils.metrics import (
    AccuracyReport,
    ConfusionMatrix,
    average_per_class_accuracy,
    confusion,
)

logger = logging.getLogger(__name__)

IMAGE_SUFFIX = ".ppm"
UNARY_SUFFIX = ".unr"
LABEL_SUFFIX = ".pgm"
SEGMENT_SUFFIX = ".seg"


@dataclass
class InferenceResult:
    labels: np.ndarray
    marginals: MarginalField
    reports: list[SolverReport]

    @property
    def summary(self) -> SolverReport:
        total = SolverReport()
        for report in self.reports:
            total = total.merge(report)
        return total


def load_video(
    images_dir: str | Path,
    unaries_dir: str | Path,
    unary_is_prob: bool = False,
) -> tuple[list[str], VideoVolume, UnaryField]:
    """Frames and unaries matched by file stem, in name order."""
    with get_monitor().time_operation("api_load_video"):
        images = list_frames(images_dir, IMAGE_SUFFIX)
        unaries = list_frames(unaries_dir, UNARY_SUFFIX)
        if not images:
            raise InputFileError(
                f"No {IMAGE_SUFFIX} frames in {images_dir}", path=images_dir
            ).add_fix("Point --images at a directory of binary PPM frames")
        check_frame_names(images, unaries, "images vs unaries")

        frames = []
        fields = []
        for image_path, unary_path in zip(images, unaries):
            rgb = load_image(image_path)
            field = load_unary(unary_path, is_probability=unary_is_prob)
            if (field.width, field.height) != (rgb.shape[1], rgb.shape[0]):
                raise DimensionError(
                    f"Unary is {field.width}x{field.height}, frame is {rgb.shape[1]}x{rgb.shape[0]}",
                    path=unary_path,
                )
            if frames and rgb.shape != frames[0].shape:
                raise DimensionError(
                    f"Frame size {rgb.shape[1]}x{rgb.shape[0]} differs from the first frame",
                    path=image_path,
                )
            if fields and field.labels != fields[0].labels:
                raise DimensionError(
                    f"Unary has {field.labels} labels, first frame has {fields[0].labels}",
                    path=unary_path,
                )
            frames.append(rgb)
            fields.append(field)
        logger.info("loaded %d frames of %dx%d", len(frames), frames[0].shape[1], frames[0].shape[0])
        return [p.stem for p in images], VideoVolume.from_frames(frames), UnaryField.concat(fields)


def segment_files(paths: Sequence[str | Path]) -> list[Path]:
    """Expand directories to their ``.seg`` files."""
    result: list[Path] = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            result.extend(list_frames(path, SEGMENT_SUFFIX))
        elif path.is_file():
            result.append(path)
        else:
            raise InputFileError(f"Segment file not found: {path}", path=path)
    return result


def load_layers(
    paths: Sequence[str | Path],
    volume: VideoVolume,
    params: PnPottsParams | None = None,
    split_frames: bool = False,
) -> CliqueSet:
    """One clique layer per SEG1 file; each file must cover the whole video."""
    params = params or PnPottsParams()
    layers = []
    for path in segment_files(paths):
        segment_map = load_segments(path)
        if (segment_map.frames, segment_map.height, segment_map.width) != (
            volume.frames,
            volume.height,
            volume.width,
        ):
            raise DimensionError(
                f"Segment map is {segment_map.frames}x{segment_map.width}x{segment_map.height}, "
                f"video is {volume.frames}x{volume.width}x{volume.height}",
                path=path,
            )
        layers.append(layer_cliques(segment_map, params, path.stem, split_frames))
    return CliqueSet.concat(layers, params) if layers else CliqueSet.empty(params)


def layer_cliques(
    segment_map: SegmentMap,
    params: PnPottsParams,
    tag: str,
    split_frames: bool = False,
) -> CliqueSet:
    cliques = cliques_from_map(segment_map, params, tag=tag, split_frames=split_frames)
    logger.debug("layer %s: %d cliques", tag, len(cliques))
    return cliques


def kmeans_layer(
    volume: VideoVolume,
    clusters: int,
    params: PnPottsParams | None = None,
    seed: int = 0,
    tag: str = "kmeans",
) -> CliqueSet:
    """Per-frame k-means color segments of ``volume``; frame t uses ``seed + t``."""
    params = params or PnPottsParams()
    clusters = min(clusters, volume.pixels)
    segment_map = SegmentMap.stack(
        [kmeans_color_segments(volume.rgb[t], clusters, seed=seed + t) for t in range(volume.frames)]
    )
    return layer_cliques(segment_map, params, tag)


def infer(
    volume: VideoVolume,
    unary: UnaryField,
    kernels: Sequence[KernelSpec] | None = None,
    compatibility: Compatibility | None = None,
    cliques: CliqueSet | None = None,
    *,
    batch: int = 50,
    iterations: int = 5,
    options: SolverOptions | None = None,
) -> InferenceResult:
    """Mean-field labeling of a whole video in consecutive windows of ``batch`` frames."""
    with get_monitor().time_operation("api_infer"):
        labels, marginals, reports = run_video(
            volume,
            unary,
            kernels if kernels is not None else default_kernels(),
            compatibility,
            cliques,
            batch=batch,
            iterations=iterations,
            options=options,
        )
    shaped = labels.reshape(volume.frames, volume.height, volume.width)
    return InferenceResult(shaped, marginals, reports)


def evaluate_dirs(
    pred_dir: str | Path,
    gt_dir: str | Path,
    labels: int,
    absent_as_zero: bool = False,
) -> tuple[AccuracyReport, ConfusionMatrix, list[str]]:
    """Average per-class accuracy over matching PGM label maps."""
    with get_monitor().time_operation("api_evaluate"):
        preds = list_frames(pred_dir, LABEL_SUFFIX)
        gts = list_frames(gt_dir, LABEL_SUFFIX)
        common = sorted({p.stem for p in preds} & {g.stem for g in gts})
        if not common:
            raise DimensionError(
                f"No common frames between {pred_dir} and {gt_dir}",
                code=ErrorCodes.IO_FRAME_SET,
            )
        check_frame_names(preds, gts, "predictions vs ground truth")

        total = ConfusionMatrix.zeros(labels)
        for pred_path, gt_path in zip(preds, gts):
            pred = load_labelmap(pred_path, labels)
            gt = load_labelmap(gt_path, labels)
            if pred.shape != gt.shape:
                raise DimensionError(
                    f"Prediction {pred.shape} and ground truth {gt.shape} differ in size",
                    path=pred_path,
                )
            total = total + confusion(pred, gt, labels)
        return average_per_class_accuracy(total, absent_as_zero), total, common


__all__ = [
    "InferenceResult",
    "load_video",
    "segment_files",
    "load_layers",
    "layer_cliques",
    "kmeans_layer",
    "infer",
    "evaluate_dirs",
]
