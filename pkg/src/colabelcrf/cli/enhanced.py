"""Command-line interface for colabelcrf.

Subcommands:
- infer: joint dense-CRF labeling of a video in frame batches
- eval:  average per-class accuracy of predicted label maps
- synth: deterministic synthetic videos with ground truth and unaries
- bench: inference time at doubling problem sizes
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path
from typing import Any

# Rich output formatting (optional dependency)
try:
    from rich.console import Console
    from rich.table import Table

    HAS_RICH = True
except ImportError:
    HAS_RICH = False
    Console = None

from colabelcrf import __version__
from colabelcrf.cli import commands
from colabelcrf.cli.config import RunConfig, load_config_file
from colabelcrf.cli.utils import noise_value
from colabelcrf.core.errors import CoLabelError, ConfigError
from colabelcrf.core.performance import get_monitor

logging.basicConfig(
    level=logging.WARNING, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)

# Doubling the size should at most double the time, plus slack.
LINEAR_RATIO_LIMIT = 2.6


class OutputFormatter:
    """Handles output formatting with optional rich formatting."""

    def __init__(self, use_rich: bool = True):
        self.use_rich = use_rich and HAS_RICH
        self.console = Console() if self.use_rich else None

    def print(self, *args: Any, **kwargs: Any) -> None:
        if self.use_rich:
            self.console.print(*args, **kwargs)
        else:
            print(*args, **kwargs)

    def print_table(self, data: list[dict[str, Any]], headers: list[str], title: str | None = None) -> None:
        """Print data as a table."""
        if self.use_rich:
            table = Table(title=title)
            for header in headers:
                table.add_column(header)
            for row in data:
                table.add_row(*[str(row.get(header, "")) for header in headers])
            self.console.print(table)
            return

        if title:
            print(f"=== {title} ===")
        if not data:
            print("No data")
            return
        widths = [len(h) for h in headers]
        for row in data:
            for i, header in enumerate(headers):
                widths[i] = max(widths[i], len(str(row.get(header, ""))))
        print(" | ".join(h.ljust(w) for h, w in zip(headers, widths)))
        print("-|-".join("-" * w for w in widths))
        for row in data:
            print(" | ".join(str(row.get(h, "")).ljust(w) for h, w in zip(headers, widths)))

    def print_error(self, message: str, error: Exception | None = None) -> None:
        if self.use_rich:
            self.console.print(f"[red]Error:[/red] {message}")
            if error and logger.isEnabledFor(logging.DEBUG):
                self.console.print(f"[dim]{traceback.format_exc()}[/dim]")
        else:
            print(f"Error: {message}", file=sys.stderr)
            if error and logger.isEnabledFor(logging.DEBUG):
                print(traceback.format_exc(), file=sys.stderr)

    def print_success(self, message: str) -> None:
        if self.use_rich:
            self.console.print(f"[green]✓[/green] {message}")
        else:
            print(f"✓ {message}")

    def print_warning(self, message: str) -> None:
        if self.use_rich:
            self.console.print(f"[yellow]⚠[/yellow] {message}")
        else:
            print(f"⚠ {message}")


class EnhancedCLI:
    """CLI controller: builds the parser and dispatches subcommands."""

    def __init__(self) -> None:
        self.formatter = OutputFormatter(use_rich=HAS_RICH)
        self._subparsers: dict[str, argparse.ArgumentParser] = {}

    def create_parser(self) -> argparse.ArgumentParser:
        """Create the main argument parser."""
        parser = argparse.ArgumentParser(
            prog="colabelcrf",
            description="Joint dense-CRF labeling of video frames",
            formatter_class=argparse.RawDescriptionHelpFormatter,
            epilog="""
Examples:
  colabelcrf synth --out data --frames 10 --labels 4 --noise auto
  colabelcrf infer --images data/images --unaries data/unaries --segments data/segments --out run
  colabelcrf eval --pred run/labels --gt data/gt --labels 4 --csv run/metrics.csv
  colabelcrf bench --min-n 100000 --max-n 1600000 --csv bench.csv
            """,
        )

        parser.add_argument("--version", action="version", version=f"colabelcrf {__version__}")
        parser.add_argument(
            "--verbose",
            "-v",
            action="count",
            default=0,
            help="Increase verbosity (use multiple times)",
        )
        parser.add_argument(
            "--quiet", "-q", action="store_true", help="Suppress non-essential output"
        )
        parser.add_argument("--config", type=Path, help="key=value file of flag defaults")
        parser.add_argument("--no-color", action="store_true", help="Disable colored output")

        subparsers = parser.add_subparsers(dest="command", help="Available commands")
        self._add_infer_command(subparsers)
        self._add_eval_command(subparsers)
        self._add_synth_command(subparsers)
        self._add_bench_command(subparsers)
        return parser

    def _subparser(self, subparsers: Any, name: str, help_text: str) -> argparse.ArgumentParser:
        parser = subparsers.add_parser(name, help=help_text)
        parser.add_argument(
            "--config", type=Path, default=argparse.SUPPRESS, help="key=value file of flag defaults"
        )
        self._subparsers[name] = parser
        return parser

    def _add_infer_command(self, subparsers: Any) -> None:
        parser = self._subparser(subparsers, "infer", "Label a video")
        parser.add_argument("--images", type=Path, help="Directory of P6 frames")
        parser.add_argument("--unaries", type=Path, help="Directory of UNR1 unaries, same stems")
        parser.add_argument("--segments", nargs="+", type=Path, default=[],
                            help="SEG1 layer files or directories of them")
        parser.add_argument("--out", type=Path, help="Output directory")
        parser.add_argument("--palette", type=Path, help="Palette for colorized output")
        parser.add_argument("--labels", type=int, help="Expected label count")
        parser.add_argument("--batch", type=int, default=50, help="Frames per joint batch")
        parser.add_argument("--iters", type=int, default=5, help="Mean-field iterations")
        parser.add_argument("--mode", choices=["joint", "perframe"], default="joint")
        parser.add_argument("--hoc", choices=["on", "off"], default="on")
        parser.add_argument("--alpha", type=float, default=0.05, help="Clique cost per member")
        parser.add_argument("--split-supervoxels", action="store_true",
                            help="Cut cross-frame segments into per-frame cliques")
        parser.add_argument("--w1", type=float, default=3.0, help="Smoothness kernel weight")
        parser.add_argument("--sxy1", type=float, default=3.0)
        parser.add_argument("--st1", type=float, default=1.0)
        parser.add_argument("--w2", type=float, default=5.0, help="Appearance kernel weight")
        parser.add_argument("--sxy2", type=float, default=50.0)
        parser.add_argument("--st2", type=float, default=3.0)
        parser.add_argument("--srgb", type=float, default=10.0)
        parser.add_argument("--damping", type=float, default=1.0)
        parser.add_argument("--unary-is-prob", action="store_true",
                            help="Unaries hold probabilities, not costs")
        parser.add_argument("--kmeans", type=int, default=0,
                            help="Add a per-frame k-means clique layer with this many clusters")
        parser.add_argument("--threads", type=int, default=1,
                            help="Worker threads for kernel filtering (BLAS threads are not limited)")
        parser.add_argument("--seed", type=int, default=0, help="Seed of the --kmeans layer")
        parser.set_defaults(func=self.cmd_infer)

    def _add_eval_command(self, subparsers: Any) -> None:
        parser = self._subparser(subparsers, "eval", "Score label maps against ground truth")
        parser.add_argument("--pred", type=Path, help="Directory of predicted P5 label maps")
        parser.add_argument("--gt", type=Path, help="Directory of ground-truth P5 label maps")
        parser.add_argument("--labels", type=int, help="Number of labels")
        parser.add_argument("--palette", type=Path, help="Palette supplying class names")
        parser.add_argument("--csv", type=Path, help="Metrics CSV path")
        parser.add_argument("--absent-as-zero", action="store_true",
                            help="Count classes absent from ground truth as 0 accuracy")
        parser.set_defaults(func=self.cmd_eval)

    def _add_synth_command(self, subparsers: Any) -> None:
        parser = self._subparser(subparsers, "synth", "Generate a synthetic video")
        parser.add_argument("--out", type=Path, help="Output directory")
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--frames", type=int, default=10)
        parser.add_argument("--width", type=int, default=128)
        parser.add_argument("--height", type=int, default=128)
        parser.add_argument("--labels", type=int, default=4)
        parser.add_argument("--noise", type=noise_value, default="auto",
                            help="Blend rate in [0, 1] or 'auto' to calibrate")
        parser.add_argument("--object-share", type=float, default=0.8,
                            help="Share of the unary noise drawn once per object and frame")
        parser.add_argument("--grid-cell", type=int, default=8)
        parser.add_argument("--supervoxel-cell", type=int, default=16)
        parser.add_argument("--kmeans-clusters", type=int, default=64)
        parser.set_defaults(func=self.cmd_synth)

    def _add_bench_command(self, subparsers: Any) -> None:
        parser = self._subparser(subparsers, "bench", "Time inference at doubling sizes")
        parser.add_argument("--min-n", type=int, default=100_000, help="Smallest variable count")
        parser.add_argument("--max-n", type=int, default=1_600_000, help="Largest variable count")
        parser.add_argument("--repeats", type=int, default=3)
        parser.add_argument("--width", type=int, default=160)
        parser.add_argument("--height", type=int, default=120)
        parser.add_argument("--labels", type=int, default=4)
        parser.add_argument("--iters", type=int, default=5)
        parser.add_argument("--threads", type=int, default=1)
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--csv", type=Path, help="Timing CSV path")
        parser.set_defaults(func=self.cmd_bench)

    def _apply_config(self, parser: argparse.ArgumentParser, parsed: argparse.Namespace,
                      args: list[str] | None) -> argparse.Namespace:
        """Re-parse with ``--config`` values as subcommand defaults."""
        sub = self._subparsers[parsed.command]
        known = {
            action.dest
            for action in sub._actions
            if action.option_strings and action.dest not in ("help", "config")
        }
        sub.set_defaults(**load_config_file(parsed.config, known))
        return parser.parse_args(args)

    def run(self, args: list[str] | None = None) -> int:
        """Run the CLI with the given arguments."""
        try:
            parser = self.create_parser()
            parsed_args = parser.parse_args(args)

            if parsed_args.verbose >= 2:
                logging.getLogger().setLevel(logging.DEBUG)
            elif parsed_args.verbose == 1:
                logging.getLogger().setLevel(logging.INFO)
            elif parsed_args.quiet:
                logging.getLogger().setLevel(logging.ERROR)

            if parsed_args.no_color:
                self.formatter = OutputFormatter(use_rich=False)

            if not hasattr(parsed_args, "func"):
                parser.print_help()
                return 0

            if getattr(parsed_args, "config", None):
                parsed_args = self._apply_config(parser, parsed_args, args)

            get_monitor().clear_metrics()
            code = parsed_args.func(parsed_args)
            for name, stats in get_monitor().get_all_stats().items():
                logger.info("%s: %d call(s), %.3fs", name, stats["count"], stats["total"])
            return code

        except SystemExit as e:
            # argparse exits on --help, --version and usage errors
            return e.code if isinstance(e.code, int) else (0 if e.code is None else 2)
        except KeyboardInterrupt:
            self.formatter.print_error("Operation cancelled by user")
            return 130
        except CoLabelError as e:
            self.formatter.print_error(str(e), e)
            return 1
        except Exception as e:
            logger.debug("unexpected failure", exc_info=True)
            self.formatter.print_error(f"{type(e).__name__}: {e}", e)
            return 1

    # Command implementations

    @staticmethod
    def _require(args: argparse.Namespace, *names: str) -> None:
        for name in names:
            if getattr(args, name, None) is None:
                flag = "--" + name.replace("_", "-")
                raise ConfigError(f"{flag} is required", flag=flag).add_fix(
                    f"Pass {flag} or set '{name}' in the --config file"
                )

    def cmd_infer(self, args: argparse.Namespace) -> int:
        self._require(args, "images", "unaries", "out")
        config = RunConfig.from_namespace(args)
        rows = commands.run_infer(config)
        if not args.quiet:
            self.formatter.print_table(
                rows,
                ["batch", "frames", "iterations", "lattice_build", "filtering", "hoc",
                 "normalization", "total", "energy"],
                title="Inference",
            )
        self.formatter.print_success(f"Label maps written to {config.out / 'labels'}")
        return 0

    def cmd_eval(self, args: argparse.Namespace) -> int:
        self._require(args, "pred", "gt", "labels")
        report, names = commands.run_eval(args)
        if not args.quiet:
            rows = [
                {
                    "class": label,
                    "pixels": int(report.pixels[label]),
                    "accuracy": "absent" if label in report.absent else f"{report.per_class[label]:.4f}",
                }
                for label in range(len(report.per_class))
            ]
            self.formatter.print_table(rows, ["class", "pixels", "accuracy"],
                                       title=f"{len(names)} frames")
        if report.absent and not args.absent_as_zero:
            self.formatter.print_warning(
                f"classes absent from ground truth, left out of the average: {report.absent}"
            )
        self.formatter.print(f"average per-class accuracy: {report.average:.4f}")
        self.formatter.print(f"global pixel accuracy: {report.global_accuracy:.4f}")
        return 0

    def cmd_synth(self, args: argparse.Namespace) -> int:
        self._require(args, "out")
        manifest = commands.run_synth(args)
        self.formatter.print_success(
            f"{len(manifest['frames'])} frames written to {args.out} "
            f"(noise rate {manifest['noise_rate']:.4f}, "
            f"unary accuracy {manifest['unary_argmax_accuracy']:.4f})"
        )
        return 0

    def cmd_bench(self, args: argparse.Namespace) -> int:
        result = commands.run_bench(args)
        self.formatter.print_table(
            result.rows,
            ["n", "seconds", "lattice_build", "filtering", "hoc", "normalization"],
            title="Scaling",
        )
        self.formatter.print(f"fitted exponent: {result.exponent:.3f}")
        ratios = result.ratios()
        if ratios:
            self.formatter.print(f"largest doubling ratio: {max(ratios):.3f}")
            if max(ratios) > LINEAR_RATIO_LIMIT:
                self.formatter.print_warning("time grew faster than linearly between sizes")
        return 0
