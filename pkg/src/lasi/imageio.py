"""Netpbm image I/O, the ImageTensor container and CSV dataset manifests.

Pixel values are normalized to [0, 1] on load. The flat ``data`` vector is in
raster order: row-major over (row, col), channel-fastest within a site, so the
raster index of (r, c, ch) is ``(r * W + c) * C + ch``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Union

import numpy as np

PathLike = Union[str, Path]

_MAGIC_CHANNELS = {b"P5": 1, b"P6": 3}
_CHANNELS_MAGIC = {1: b"P5", 3: b"P6"}


class ImageFormatError(ValueError):
    """Malformed or unsupported netpbm file. ``offset`` is the byte position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ImageTensor:
    height: int
    width: int
    channels: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError(f"image dimensions must be positive, got {self.height}x{self.width}")
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        data = np.array(self.data, dtype=np.float64).ravel()
        if data.size != self.height * self.width * self.channels:
            raise ValueError(
                f"data length {data.size} != {self.height}*{self.width}*{self.channels}"
            )
        if data.size and (not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_array(cls, arr) -> "ImageTensor":
        """Build from an (H, W) or (H, W, C) array of values in [0, 1]."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"expected a 2-D or 3-D array, got shape {arr.shape}")
        h, w, c = arr.shape
        return cls(h, w, c, arr.reshape(-1))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)

    @property
    def array(self) -> np.ndarray:
        """Read-only (H, W, C) view of the data."""
        return self.data.reshape(self.shape)

    def __eq__(self, other):
        if not isinstance(other, ImageTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.data, other.data)

    __hash__ = None


def as_array(img) -> np.ndarray:
    """Return an (H, W, C) float64 array for an ImageTensor or array-like."""
    if isinstance(img, ImageTensor):
        return img.array
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"expected a 2-D or 3-D image array, got shape {arr.shape}")
    return arr


def raster_index(row: int, col: int, ch: int, width: int, channels: int) -> int:
    return (row * width + col) * channels + ch


def raster_coords(index: int, width: int, channels: int) -> tuple[int, int, int]:
    site, ch = divmod(index, channels)
    row, col = divmod(site, width)
    return row, col, ch


# -- netpbm ------------------------------------------------------------------


def _parse_header(buf: bytes) -> tuple[int, int, int, int]:
    """Parse a P5/P6 header. Returns (width, height, channels, payload_offset)."""
    if len(buf) < 2 or buf[:2] not in _MAGIC_CHANNELS:
        raise ImageFormatError(f"unsupported magic number {buf[:2]!r}", 0)
    channels = _MAGIC_CHANNELS[buf[:2]]
    pos = 2
    values = []
    for name in ("width", "height", "maxval"):
        # skip whitespace and comments between tokens
        while True:
            if pos >= len(buf):
                raise ImageFormatError(f"header truncated before {name}", pos)
            ch = buf[pos : pos + 1]
            if ch.isspace():
                pos += 1
            elif ch == b"#":
                nl = buf.find(b"\n", pos)
                if nl < 0:
                    raise ImageFormatError("unterminated header comment", pos)
                pos = nl + 1
            else:
                break
        start = pos
        while pos < len(buf) and buf[pos : pos + 1].isdigit():
            pos += 1
        if pos == start:
            raise ImageFormatError(f"expected integer {name}", start)
        values.append((int(buf[start:pos]), start))
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise ImageFormatError("expected single whitespace after maxval", pos)
    pos += 1
    (width, w_off), (height, h_off), (maxval, m_off) = values
    if width < 1:
        raise ImageFormatError("width must be positive", w_off)
    if height < 1:
        raise ImageFormatError("height must be positive", h_off)
    if maxval != 255:
        raise ImageFormatError(f"unsupported maxval {maxval} (only 255)", m_off)
    return width, height, channels, pos


def read_header(path: PathLike) -> tuple[int, int, int]:
    """Return (height, width, channels) without decoding the payload."""
    with open(path, "rb") as fh:
        head = fh.read(512)
    width, height, channels, _ = _parse_header(head)
    return height, width, channels


def decode_netpbm(buf: bytes) -> ImageTensor:
    width, height, channels, offset = _parse_header(buf)
    n = width * height * channels
    payload = buf[offset : offset + n]
    if len(payload) < n:
        raise ImageFormatError(
            f"truncated payload: expected {n} bytes, found {len(payload)}", offset + len(payload)
        )
    data = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / 255.0
    return ImageTensor(height, width, channels, data)


def encode_netpbm(img: ImageTensor) -> bytes:
    # round half up: 0.5 -> 127.5 -> 128
    q = np.floor(np.asarray(img.data) * 255.0 + 0.5)
    q = np.clip(q, 0, 255).astype(np.uint8)
    header = b"%s\n%d %d\n255\n" % (_CHANNELS_MAGIC[img.channels], img.width, img.height)
    return header + q.tobytes()


def load_image(path: PathLike) -> ImageTensor:
    with open(path, "rb") as fh:
        buf = fh.read()
    return decode_netpbm(buf)


def save_image(img: ImageTensor, path: PathLike) -> None:
    if not isinstance(img, ImageTensor):
        img = ImageTensor.from_array(img)
    with open(path, "wb") as fh:
        fh.write(encode_netpbm(img))


def quantize(img: ImageTensor) -> ImageTensor:
    """Snap to the 1/255 grid using the same rounding as ``save_image``."""
    return decode_netpbm(encode_netpbm(img))


# -- manifests ---------------------------------------------------------------


class ManifestKind(Enum):
    TWO_AFC = "2afc"
    JND = "jnd"


_COLUMNS = {
    ManifestKind.TWO_AFC: ("ref", "alt0", "alt1", "p"),
    ManifestKind.JND: ("a", "b", "p"),
}


@dataclass(frozen=True)
class TwoAfcExample:
    reference: Path
    alt0: Path
    alt1: Path
    p: float  # fraction of subjects preferring alt1

    def __post_init__(self):
        _check_p(self.p)


@dataclass(frozen=True)
class JndExample:
    img_a: Path
    img_b: Path
    p: float  # fraction judging the pair identical

    def __post_init__(self):
        _check_p(self.p)


def _check_p(p):
    if not (0.0 <= p <= 1.0) or math.isnan(p):
        raise ValueError(f"p={p} outside [0, 1]")


@dataclass(frozen=True)
class DatasetManifest:
    kind: ManifestKind
    records: tuple
    root: Path

    def __len__(self):
        return len(self.records)


def _detect_kind(header: list[str]) -> ManifestKind:
    cols = {c.strip() for c in header}
    for kind, required in _COLUMNS.items():
        if set(required) <= cols:
            return kind
    if {"ref", "alt0", "alt1"} & cols:
        missing = [c for c in _COLUMNS[ManifestKind.TWO_AFC] if c not in cols]
    else:
        missing = [c for c in _COLUMNS[ManifestKind.JND] if c not in cols]
    raise ManifestError(f"manifest header {header} is missing column(s) {missing}")


def load_manifest(path: PathLike, check_images: bool = True) -> DatasetManifest:
    """Parse a 2-AFC (``ref,alt0,alt1,p``) or JND (``a,b,p``) CSV manifest.

    Image paths are resolved relative to the manifest's directory. With
    ``check_images`` every referenced file must exist, carry a valid netpbm
    header, and share dimensions with the other images of its record.
    """
    path = Path(path)
    root = path.resolve().parent
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"{path}: empty manifest (no header row)") from None
        kind = _detect_kind(header)
        index = {name.strip(): i for i, name in enumerate(header)}
        cols = _COLUMNS[kind]
        records = []
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                cells = [row[index[c]].strip() for c in cols]
            except IndexError:
                raise ManifestError(f"{path}: row {rowno} has too few columns") from None
            try:
                p = float(cells[-1])
            except ValueError:
                raise ManifestError(f"{path}: row {rowno}: p={cells[-1]!r} is not a number") from None
            if not (0.0 <= p <= 1.0):
                raise ManifestError(f"{path}: row {rowno}: p={p} outside [0, 1]")
            files = [root / c for c in cells[:-1]]
            if check_images:
                _check_record_files(path, rowno, files)
            if kind is ManifestKind.TWO_AFC:
                records.append(TwoAfcExample(*files, p=p))
            else:
                records.append(JndExample(*files, p=p))
    return DatasetManifest(kind, tuple(records), root)


def _check_record_files(manifest: Path, rowno: int, files: list[Path]) -> None:
    shapes = []
    for f in files:
        if not f.is_file():
            raise ManifestError(f"{manifest}: row {rowno}: image {f} does not exist")
        try:
            shapes.append(read_header(f))
        except ImageFormatError as exc:
            raise ManifestError(f"{manifest}: row {rowno}: {f}: {exc}") from exc
    if len(set(shapes)) > 1:
        raise ManifestError(f"{manifest}: row {rowno}: images differ in size {shapes}")


def write_manifest(path: PathLike, records, kind: ManifestKind) -> None:
    """Write records back out; image paths are stored relative to ``path``'s directory."""
    path = Path(path)
    base = path.resolve().parent
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_COLUMNS[kind])
        for rec in records:
            if kind is ManifestKind.TWO_AFC:
                files = (rec.reference, rec.alt0, rec.alt1)
            else:
                files = (rec.img_a, rec.img_b)
            rel = [Path(f).resolve().relative_to(base).as_posix() for f in files]
            w.writerow([*rel, repr(float(rec.p))])
