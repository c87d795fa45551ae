"""Bodies of the ``infer``, ``eval``, ``synth`` and ``bench`` subcommands.

Each function takes validated settings, does the work and returns plain data
for the caller to display; nothing here prints.
"""

from __future__ import annotations

import argparse
import logging
import math
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from colabelcrf.cli.config import RunConfig
from colabelcrf.cli.utils import (
    BENCH_COLUMNS,
    REPORT_COLUMNS,
    fit_exponent,
    geometric_sizes,
    report_rows,
    write_csv,
)
from colabelcrf.core.api import evaluate_dirs, infer, kmeans_layer, load_layers, load_video
from colabelcrf.core.errors import DimensionError
from colabelcrf.core.hoc import CliqueSet, PnPottsParams
from colabelcrf.core.model import Compatibility, default_kernels
from colabelcrf.core.segments import cliques_from_map
from colabelcrf.core.solver import PHASES, SolverOptions, SolverReport, run_video
from colabelcrf.utils.formats import load_palette, save_colorized, save_labelmap
from colabelcrf.utils.metrics import AccuracyReport, write_metrics_csv
from colabelcrf.utils.synth import SynthConfig, build_layers, generate, write_dataset

logger = logging.getLogger(__name__)

REPORT_NAME = "report.csv"


def run_infer(config: RunConfig) -> list[dict[str, Any]]:
    """Label every frame and write label maps, colorizations and the timing report."""
    names, volume, unary = load_video(config.images, config.unaries, config.unary_is_prob)
    if config.labels is not None and config.labels != unary.labels:
        raise DimensionError(
            f"--labels {config.labels} does not match the {unary.labels} labels in the unaries",
            flag="--labels",
        )

    params = config.hoc_params()
    layers = []
    if config.hoc == "on":
        if config.segments:
            layers.append(load_layers(config.segments, volume, params, config.split_supervoxels))
        if config.kmeans:
            layers.append(kmeans_layer(volume, config.kmeans, params, seed=config.seed))
        if not layers:
            logger.warning("--hoc on without --segments or --kmeans: running without clique terms")
    cliques = CliqueSet.concat(layers, params)

    result = infer(
        volume,
        unary,
        config.kernels(),
        Compatibility.potts_model(unary.labels),
        cliques,
        batch=config.effective_batch,
        iterations=config.iters,
        options=config.solver_options(),
    )

    palette = load_palette(config.palette, unary.labels) if config.palette else None
    for t, stem in enumerate(names):
        save_labelmap(config.out / "labels" / f"{stem}.pgm", result.labels[t])
        if palette is not None:
            save_colorized(config.out / "color" / f"{stem}.ppm", result.labels[t], palette)

    rows = report_rows(result.reports, config.effective_batch, volume.frames, volume.pixels)
    write_csv(config.out / REPORT_NAME, REPORT_COLUMNS, rows)
    logger.info("wrote %d label maps to %s", len(names), config.out)
    return rows


def run_eval(args: argparse.Namespace) -> tuple[AccuracyReport, list[str]]:
    report, _, names = evaluate_dirs(args.pred, args.gt, args.labels, args.absent_as_zero)
    if args.csv:
        palette = load_palette(args.palette, args.labels) if args.palette else None
        write_metrics_csv(args.csv, report, palette)
    return report, names


def run_synth(args: argparse.Namespace) -> dict[str, Any]:
    config = SynthConfig(
        seed=args.seed,
        frames=args.frames,
        width=args.width,
        height=args.height,
        labels=args.labels,
        noise=args.noise,
        object_share=args.object_share,
        grid_cell=args.grid_cell,
        supervoxel_cell=args.supervoxel_cell,
        kmeans_clusters=args.kmeans_clusters,
    )
    video = generate(config)
    return write_dataset(video, args.out)


@dataclass
class BenchResult:
    rows: list[dict[str, Any]] = field(default_factory=list)
    exponent: float = math.nan

    def ratios(self) -> list[float]:
        """time(2n) / time(n) for consecutive sizes."""
        seconds = [float(r["seconds"]) for r in self.rows]
        return [b / a for a, b in zip(seconds, seconds[1:]) if a > 0]


def bench_shape(n: int, width: int, height: int) -> tuple[int, int]:
    """(frames, height) giving about ``n`` variables at the given width."""
    per_frame = width * height
    if n <= per_frame:
        return 1, max(1, math.ceil(n / width))
    return math.ceil(n / per_frame), height


def run_bench(args: argparse.Namespace) -> BenchResult:
    """Time whole-video inference at doubling sizes."""
    result = BenchResult()
    sizes = []
    medians = []
    options = SolverOptions(iterations=args.iters, threads=args.threads)
    for n in geometric_sizes(args.min_n, args.max_n):
        frames, height = bench_shape(n, args.width, args.height)
        config = SynthConfig(
            seed=args.seed, frames=frames, width=args.width, height=height,
            labels=args.labels, noise=0.5,
        )
        video = generate(config, with_layers=False)
        cliques = _bench_cliques(config, video.rgb)
        variables = frames * args.width * height

        timings: list[tuple[float, SolverReport]] = []
        for _ in range(args.repeats):
            start = time.perf_counter()
            _, _, reports = run_video(
                video.volume, video.unary, default_kernels(), None, cliques,
                batch=frames, iterations=args.iters, options=options,
            )
            elapsed = time.perf_counter() - start
            total = SolverReport()
            for report in reports:
                total = total.merge(report)
            timings.append((elapsed, total))
        timings.sort(key=lambda item: item[0])
        seconds, phases = timings[len(timings) // 2]
        logger.info("n=%d: %.3fs (spread %.1f%%)", variables, seconds, _spread(timings) * 100)

        row: dict[str, Any] = {"n": variables, "seconds": f"{seconds:.6f}"}
        for phase in PHASES:
            row[phase] = f"{phases.timings.get(phase, 0.0):.6f}"
        result.rows.append(row)
        sizes.append(variables)
        medians.append(seconds)

    result.exponent = fit_exponent(sizes, medians)
    if args.csv:
        write_csv(Path(args.csv), BENCH_COLUMNS, result.rows)
    return result


def _bench_cliques(config: SynthConfig, rgb: np.ndarray) -> CliqueSet:
    """Grid and supervoxel layers; the k-means layer is left out to keep setup cheap."""
    params = PnPottsParams()
    layers = build_layers(config, rgb, kmeans=False)
    return CliqueSet.concat(
        [cliques_from_map(layer, params, tag=name) for name, layer in layers.items()], params
    )


def _spread(timings: list[tuple[float, SolverReport]]) -> float:
    values = [t for t, _ in timings]
    if len(values) < 2:
        return 0.0
    return (max(values) - min(values)) / statistics.median(values)


__all__ = ["run_infer", "run_eval", "run_synth", "run_bench", "BenchResult", "bench_shape"]
