"""Readers and writers for frames, unaries, segment maps, label maps and palettes.

Binary layouts (all little-endian):

* images: binary PPM ``P6`` with maxval 255;
* label maps: binary PGM ``P5`` with maxval 255, 255 marks void pixels;
* unaries: ``UNR1`` + width, height, labels (u32) + W*H*L float32 costs,
  pixel-major in row-major order, label-minor;
* segments: ``SEG1`` + width, height, frames (u32) + scope byte
  (0 per-frame, 1 cross-frame) + F*W*H u32 ids.

Readers reject any size mismatch instead of truncating or padding.
"""

from __future__ import annotations

import logging
import struct
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from colabelcrf.core.errors import (
    DimensionError,
    ErrorCodes,
    FormatError,
    InputFileError,
    NumericError,
    ValueRangeError,
)
from colabelcrf.core.model import UnaryField
from colabelcrf.core.segments import SegmentMap, SegmentScope

logger = logging.getLogger(__name__)

VOID_LABEL = 255
UNARY_MAGIC = b"UNR1"
SEGMENT_MAGIC = b"SEG1"
_UNARY_HEADER = struct.Struct("<4sIII")
_SEGMENT_HEADER = struct.Struct("<4sIIIB")


def _read_bytes(path: str | Path) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise InputFileError(f"File not found: {path}", path=path)
    return path.read_bytes()


def _write_bytes(path: str | Path, payload: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)
    return path


# ---------------------------------------------------------------------- #
# Netpbm


def _parse_netpbm_header(data: bytes, path: str | Path) -> tuple[bytes, int, int, int, int]:
    """(magic, width, height, maxval, payload offset); '#' comments allowed."""
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError(
                "Truncated Netpbm header", code=ErrorCodes.FORMAT_TRUNCATED, path=path
            )
        tokens.append(data[start:pos])
        if len(tokens) == 1 and tokens[0] not in (b"P5", b"P6"):
            raise FormatError(
                f"Unsupported magic {tokens[0][:8]!r}; only binary P5/P6 are read",
                code=ErrorCodes.FORMAT_BAD_MAGIC,
                path=path,
            )
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise FormatError("Missing whitespace after Netpbm header", path=path)
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"Non-numeric Netpbm header field: {exc}", path=path) from exc
    if width < 1 or height < 1:
        raise FormatError(f"Invalid image size {width}x{height}", path=path)
    if maxval != 255:
        raise FormatError(
            f"maxval must be 255, got {maxval}", code=ErrorCodes.FORMAT_UNSUPPORTED, path=path
        )
    return tokens[0], width, height, maxval, pos + 1


def _netpbm_payload(data: bytes, offset: int, expected: int, path: str | Path) -> np.ndarray:
    actual = len(data) - offset
    if actual != expected:
        raise FormatError(
            f"Payload has {actual} bytes, expected {expected}",
            code=ErrorCodes.FORMAT_TRUNCATED,
            path=path,
            expected=expected,
            actual=actual,
        )
    return np.frombuffer(data, dtype=np.uint8, offset=offset)


def load_image(path: str | Path) -> np.ndarray:
    """P6 frame as an (H, W, 3) uint8 array."""
    data = _read_bytes(path)
    magic, width, height, _, offset = _parse_netpbm_header(data, path)
    if magic != b"P6":
        raise FormatError(
            f"Expected a P6 image, got {magic.decode(errors='replace')}",
            code=ErrorCodes.FORMAT_BAD_MAGIC,
            path=path,
        )
    pixels = _netpbm_payload(data, offset, width * height * 3, path)
    return pixels.reshape(height, width, 3).copy()


def save_image(path: str | Path, rgb: np.ndarray) -> Path:
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionError(f"Image must be (H, W, 3), got {arr.shape}", path=path)
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 255:
        raise ValueRangeError("Image values must lie in [0, 255]", path=path)
    height, width = arr.shape[:2]
    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    return _write_bytes(path, header + arr.astype(np.uint8).tobytes())


def load_labelmap(path: str | Path, labels: int | None = None) -> np.ndarray:
    """P5 label map as an (H, W) uint8 array; 255 is void."""
    data = _read_bytes(path)
    magic, width, height, _, offset = _parse_netpbm_header(data, path)
    if magic != b"P5":
        raise FormatError(
            f"Expected a P5 label map, got {magic.decode(errors='replace')}",
            code=ErrorCodes.FORMAT_BAD_MAGIC,
            path=path,
        )
    values = _netpbm_payload(data, offset, width * height, path).reshape(height, width).copy()
    if labels is not None:
        bad = (values >= labels) & (values != VOID_LABEL)
        if bad.any():
            y, x = (int(v) for v in np.argwhere(bad)[0])
            raise ValueRangeError(
                f"Label {int(values[y, x])} at (x={x}, y={y}) is >= {labels} and not void",
                code=ErrorCodes.VALUE_LABEL_RANGE,
                path=path,
            )
    return values


def save_labelmap(path: str | Path, labeling: np.ndarray) -> Path:
    arr = np.asarray(labeling)
    if arr.ndim != 2:
        raise DimensionError(f"Label map must be (H, W), got {arr.shape}", path=path)
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 255:
        raise ValueRangeError("Label values must lie in [0, 255]", path=path)
    height, width = arr.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return _write_bytes(path, header + arr.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------- #
# Unaries


def load_unary(path: str | Path, is_probability: bool = False) -> UnaryField:
    """Single-frame UNR1 costs; ``is_probability`` converts p to -ln(max(p, 1e-12))."""
    data = _read_bytes(path)
    if len(data) < _UNARY_HEADER.size:
        raise FormatError("Truncated UNR1 header", code=ErrorCodes.FORMAT_TRUNCATED, path=path)
    magic, width, height, labels = _UNARY_HEADER.unpack_from(data)
    if magic != UNARY_MAGIC:
        raise FormatError(f"Bad magic {magic!r}, expected {UNARY_MAGIC!r}",
                          code=ErrorCodes.FORMAT_BAD_MAGIC, path=path)
    if width < 1 or height < 1 or labels < 1:
        raise FormatError(f"Invalid UNR1 size {width}x{height}x{labels}", path=path)
    expected = width * height * labels * 4
    actual = len(data) - _UNARY_HEADER.size
    if actual != expected:
        raise FormatError(
            f"Payload has {actual} bytes, expected {expected}",
            code=ErrorCodes.FORMAT_TRUNCATED,
            path=path,
            expected=expected,
            actual=actual,
        )
    values = np.frombuffer(data, dtype="<f4", offset=_UNARY_HEADER.size).astype(np.float64)
    values = values.reshape(width * height, labels)
    bad = ~np.isfinite(values)
    if bad.any():
        pixel, label = (int(v) for v in np.argwhere(bad)[0])
        raise NumericError(
            f"Non-finite value at pixel {pixel}, label {label}",
            path=path,
            pixel=pixel,
            label=label,
        )
    if is_probability:
        return UnaryField.from_probabilities(values[None], width, height)
    return UnaryField(values[None], width, height)


def save_unary(path: str | Path, costs: np.ndarray, width: int, height: int) -> Path:
    """Write one frame of (W*H, L) costs."""
    arr = np.asarray(costs, dtype="<f4")
    if arr.ndim != 2 or arr.shape[0] != width * height:
        raise DimensionError(
            f"Costs must be ({width * height}, L), got {arr.shape}", path=path
        )
    header = _UNARY_HEADER.pack(UNARY_MAGIC, width, height, arr.shape[1])
    return _write_bytes(path, header + arr.tobytes())


# ---------------------------------------------------------------------- #
# Segments


def load_segments(path: str | Path) -> SegmentMap:
    data = _read_bytes(path)
    if len(data) < _SEGMENT_HEADER.size:
        raise FormatError("Truncated SEG1 header", code=ErrorCodes.FORMAT_TRUNCATED, path=path)
    magic, width, height, frames, scope = _SEGMENT_HEADER.unpack_from(data)
    if magic != SEGMENT_MAGIC:
        raise FormatError(f"Bad magic {magic!r}, expected {SEGMENT_MAGIC!r}",
                          code=ErrorCodes.FORMAT_BAD_MAGIC, path=path)
    if scope not in (0, 1):
        raise FormatError(f"Scope byte must be 0 or 1, got {scope}", path=path)
    if min(width, height, frames) < 1:
        raise FormatError(f"Invalid SEG1 size {width}x{height}x{frames}", path=path)
    expected = width * height * frames * 4
    actual = len(data) - _SEGMENT_HEADER.size
    if actual != expected:
        raise FormatError(
            f"Payload has {actual} bytes, expected {expected}",
            code=ErrorCodes.FORMAT_TRUNCATED,
            path=path,
            expected=expected,
            actual=actual,
        )
    ids = np.frombuffer(data, dtype="<u4", offset=_SEGMENT_HEADER.size)
    return SegmentMap(ids.reshape(frames, height, width).astype(np.int64), SegmentScope(scope))


def save_segments(path: str | Path, segment_map: SegmentMap) -> Path:
    if segment_map.ids.max() > np.iinfo(np.uint32).max:
        raise ValueRangeError("Segment ids exceed 32 bits", path=path)
    header = _SEGMENT_HEADER.pack(
        SEGMENT_MAGIC,
        segment_map.width,
        segment_map.height,
        segment_map.frames,
        int(segment_map.scope),
    )
    return _write_bytes(path, header + segment_map.ids.astype("<u4").tobytes())


# ---------------------------------------------------------------------- #
# Palettes


@dataclass(frozen=True)
class PaletteEntry:
    label: int
    color: tuple[int, int, int]
    name: str


@dataclass(frozen=True)
class Palette:
    """Label id to color and name."""

    entries: tuple[PaletteEntry, ...]

    def __post_init__(self) -> None:
        ids = [e.label for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueRangeError("Palette label ids must be unique")
        seen: dict[tuple[int, int, int], int] = {}
        for e in self.entries:
            if not (0 <= e.label < VOID_LABEL or e.label == VOID_LABEL):
                raise ValueRangeError(f"Palette label {e.label} outside [0, 255]")
            if any(not 0 <= c <= 255 for c in e.color):
                raise ValueRangeError(f"Palette color {e.color} outside [0, 255]")
            color = tuple(e.color)
            if color in seen:
                raise ValueRangeError(
                    f"Palette labels {seen[color]} and {e.label} share the color {color}",
                    code=ErrorCodes.VALUE_LABEL_RANGE,
                )
            seen[color] = e.label

    def check_labels(self, labels: int) -> Palette:
        """Every id must lie in [0, labels) or be the void label."""
        outside = [e.label for e in self.entries if e.label >= labels and e.label != VOID_LABEL]
        if outside:
            raise ValueRangeError(
                f"Palette labels {outside} outside [0, {labels}) and not void",
                code=ErrorCodes.VALUE_LABEL_RANGE,
                labels=labels,
            )
        return self

    def lookup_table(self) -> tuple[np.ndarray, np.ndarray]:
        """(256, 3) colors and a (256,) mask of defined labels; void maps to black."""
        table = np.zeros((256, 3), dtype=np.uint8)
        defined = np.zeros(256, dtype=bool)
        for e in self.entries:
            table[e.label] = e.color
            defined[e.label] = True
        table[VOID_LABEL] = 0
        defined[VOID_LABEL] = True
        return table, defined

    def name(self, label: int) -> str:
        for e in self.entries:
            if e.label == label:
                return e.name
        return f"class_{label}"

    @property
    def labels(self) -> list[int]:
        return [e.label for e in self.entries if e.label != VOID_LABEL]


def default_palette(labels: int) -> Palette:
    """Distinct colors for ``labels`` classes; class 0 is black-ish background."""
    base = [
        (64, 64, 64), (128, 0, 0), (0, 128, 0), (128, 128, 0), (0, 0, 128),
        (128, 0, 128), (0, 128, 128), (192, 192, 192), (64, 0, 0), (192, 0, 0),
        (64, 128, 0), (192, 128, 0),
    ]
    entries = []
    for label in range(labels):
        if label < len(base):
            color = base[label]
        else:
            color = ((label * 67) % 256, label, 255)
        entries.append(PaletteEntry(label, color, f"class_{label}"))
    return Palette(tuple(entries))


def load_palette(path: str | Path, labels: int | None = None) -> Palette:
    """Text palette, one ``id,r,g,b,name`` line per label, '#' comments.

    With ``labels`` every id must lie in [0, labels) or be the void label.
    """
    path = Path(path)
    if not path.is_file():
        raise InputFileError(f"File not found: {path}", path=path)
    entries = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) < 4:
            raise FormatError(
                f"Palette line {lineno} needs id,r,g,b[,name]", path=path, line=lineno
            )
        try:
            label, r, g, b = (int(p) for p in parts[:4])
        except ValueError as exc:
            raise FormatError(
                f"Palette line {lineno}: {exc}", path=path, line=lineno
            ) from exc
        name = ",".join(parts[4:]) or f"class_{label}"
        entries.append(PaletteEntry(label, (r, g, b), name))
    try:
        palette = Palette(tuple(entries))
        return palette if labels is None else palette.check_labels(labels)
    except ValueRangeError as exc:
        exc.context.setdefault("path", path)
        raise


def save_palette(path: str | Path, palette: Palette) -> Path:
    lines = ["# id,r,g,b,name"]
    lines += [f"{e.label},{e.color[0]},{e.color[1]},{e.color[2]},{e.name}" for e in palette.entries]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def save_colorized(path: str | Path, labeling: np.ndarray, palette: Palette) -> Path:
    """P6 rendering of an (H, W) label map."""
    arr = np.asarray(labeling, dtype=np.int64)
    table, defined = palette.lookup_table()
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 255 or not defined[arr].all():
        missing = sorted({int(v) for v in np.unique(arr) if not (0 <= v <= 255 and defined[v])})
        raise ValueRangeError(
            f"Labels {missing} have no palette entry", code=ErrorCodes.VALUE_LABEL_RANGE, path=path
        )
    return save_image(path, table[arr])


def load_colorized(path: str | Path, palette: Palette) -> np.ndarray:
    """Invert :func:`save_colorized`; colors not in the palette raise."""
    rgb = load_image(path).astype(np.int64)
    codes = (rgb[..., 0] << 16) | (rgb[..., 1] << 8) | rgb[..., 2]
    lookup = {
        (e.color[0] << 16) | (e.color[1] << 8) | e.color[2]: e.label for e in palette.entries
    }
    lookup.setdefault(0, VOID_LABEL)
    unique, inverse = np.unique(codes, return_inverse=True)
    missing = [int(c) for c in unique if int(c) not in lookup]
    if missing:
        raise ValueRangeError(
            f"{len(missing)} colors are not in the palette", path=path, first=hex(missing[0])
        )
    mapped = np.array([lookup[int(c)] for c in unique], dtype=np.uint8)
    return mapped[inverse.reshape(codes.shape)]


# ---------------------------------------------------------------------- #


def list_frames(directory: str | Path, suffix: str) -> list[Path]:
    """Files in ``directory`` ending with ``suffix``, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputFileError(f"Directory not found: {directory}", path=directory)
    return sorted(p for p in directory.iterdir() if p.is_file() and p.name.endswith(suffix))


def check_frame_names(first: Sequence[Path], second: Sequence[Path], what: str) -> None:
    """Both lists must hold the same stems in the same order."""
    a = [p.stem for p in first]
    b = [p.stem for p in second]
    if a != b:
        only_a = sorted(set(a) - set(b))
        only_b = sorted(set(b) - set(a))
        raise DimensionError(
            f"{what}: frame names differ (only first: {only_a[:5]}, only second: {only_b[:5]})",
            code=ErrorCodes.IO_FRAME_SET,
        )


__all__ = [
    "VOID_LABEL",
    "load_image",
    "save_image",
    "load_labelmap",
    "save_labelmap",
    "load_unary",
    "save_unary",
    "load_segments",
    "save_segments",
    "PaletteEntry",
    "Palette",
    "default_palette",
    "load_palette",
    "save_palette",
    "save_colorized",
    "load_colorized",
    "list_frames",
    "check_frame_names",
]
