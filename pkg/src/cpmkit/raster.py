"""Luminance images, binary PGM I/O and the pixel operations used by the
augmentation engine and the image quality gate.

Pixel rows run top to bottom. Normalized coordinates put (0, 0) at the
top-left corner and (1, 1) at the bottom-right, x to the right, y down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._ext import kernels
from .errors import DomainError, ParseError

__all__ = [
    "Affine2",
    "LuminanceGrid",
    "PgmError",
    "BadMagicError",
    "BadHeaderError",
    "MaxvalError",
    "TruncatedPayloadError",
    "ZeroDimensionError",
    "read_pgm",
    "write_pgm",
    "adjust_brightness",
    "box_blur",
    "laplacian_variance",
    "rms_contrast",
    "exposure_clip_fraction",
    "warp_nearest",
]

BRIGHTNESS_LIMIT = 0.25


class PgmError(ParseError):
    pass


class BadMagicError(PgmError):
    pass


class BadHeaderError(PgmError):
    pass


class MaxvalError(PgmError):
    pass


class TruncatedPayloadError(PgmError):
    pass


class ZeroDimensionError(PgmError):
    pass


class LuminanceGrid:
    """Immutable 8-bit grayscale image stored as a (height, width) uint8 array."""

    __slots__ = ("_pixels",)

    def __init__(self, pixels: np.ndarray):
        arr = np.asarray(pixels)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise DomainError(f"pixel array must be 2-D and nonempty, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise DomainError("pixel values must lie in [0, 255]")
            if not np.array_equal(arr, np.round(arr)):
                raise DomainError("pixel values must be integers")
            arr = arr.astype(np.uint8)
        arr = np.ascontiguousarray(arr).copy()
        arr.flags.writeable = False
        self._pixels = arr

    @classmethod
    def from_values(cls, width: int, height: int, values: Sequence[int]) -> LuminanceGrid:
        if len(values) != width * height:
            raise DomainError(f"expected {width * height} values, got {len(values)}")
        return cls(np.asarray(values, dtype=np.int64).reshape(height, width))

    @classmethod
    def filled(cls, width: int, height: int, value: int) -> LuminanceGrid:
        return cls(np.full((height, width), value, dtype=np.uint8))

    @property
    def pixels(self) -> np.ndarray:
        return self._pixels

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    def values(self) -> list[int]:
        """Row-major pixel values."""
        return self._pixels.ravel().tolist()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LuminanceGrid):
            return NotImplemented
        return self._pixels.shape == other._pixels.shape and bool(np.array_equal(self._pixels, other._pixels))

    def __hash__(self) -> int:
        return hash((self._pixels.shape, self._pixels.tobytes()))

    def __repr__(self) -> str:
        return f"LuminanceGrid({self.width}x{self.height})"


@dataclass(frozen=True)
class Affine2:
    """``(x, y) -> (a*x + b*y + tx, c*x + d*y + ty)`` on normalized coordinates."""

    a: float = 1.0
    b: float = 0.0
    c: float = 0.0
    d: float = 1.0
    tx: float = 0.0
    ty: float = 0.0

    @classmethod
    def identity(cls) -> Affine2:
        return cls()

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def apply(self, x: float, y: float) -> tuple[float, float]:
        return self.a * x + self.b * y + self.tx, self.c * x + self.d * y + self.ty

    def inverse(self) -> Affine2:
        det = self.det
        if abs(det) <= 1e-12:
            raise DomainError(f"affine transform is not invertible (det={det!r})")
        a, b, c, d = self.d / det, -self.b / det, -self.c / det, self.a / det
        return Affine2(a, b, c, d, -(a * self.tx + b * self.ty), -(c * self.tx + d * self.ty))

    def then(self, other: Affine2) -> Affine2:
        """The transform applying ``self`` first and ``other`` second."""
        return Affine2(
            other.a * self.a + other.b * self.c,
            other.a * self.b + other.b * self.d,
            other.c * self.a + other.d * self.c,
            other.c * self.b + other.d * self.d,
            other.a * self.tx + other.b * self.ty + other.tx,
            other.c * self.tx + other.d * self.ty + other.ty,
        )


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise BadHeaderError("unexpected end of header")
    return data[start:pos], pos


def read_pgm(data: bytes) -> LuminanceGrid:
    """Decode a binary (P5) PGM with maxval <= 255.

    Images with maxval below 255 are rescaled to the full 0..255 range.
    """
    if data[:2] != b"P5":
        raise BadMagicError(f"bad magic number {data[:2]!r}, expected b'P5'")
    pos = 2
    if pos < len(data) and not (data[pos : pos + 1].isspace() or data[pos : pos + 1] == b"#"):
        raise BadMagicError(f"bad magic number {data[:3]!r}")
    fields = []
    for name in ("width", "height", "maxval"):
        tok, pos = _next_token(data, pos)
        if not tok.isdigit():
            raise BadHeaderError(f"{name} is not a decimal integer: {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if width == 0 or height == 0:
        raise ZeroDimensionError(f"zero image dimension {width}x{height}")
    if maxval == 0 or maxval > 255:
        raise MaxvalError(f"maxval {maxval} not in 1..255")
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise TruncatedPayloadError("missing whitespace before pixel data")
    pos += 1
    need = width * height
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise TruncatedPayloadError(f"pixel payload has {len(payload)} bytes, expected {need}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    if maxval != 255:
        if int(pixels.max()) > maxval:
            raise MaxvalError(f"pixel value exceeds maxval {maxval}")
        pixels = (pixels.astype(np.int64) * 510 + maxval) // (2 * maxval)
    return LuminanceGrid(pixels)


def write_pgm(grid: LuminanceGrid) -> bytes:
    return b"P5\n%d %d\n255\n" % (grid.width, grid.height) + grid.pixels.tobytes()


def adjust_brightness(grid: LuminanceGrid, factor: float) -> LuminanceGrid:
    """Scale every pixel by ``1 + factor``, rounding half up and clamping."""
    if not -BRIGHTNESS_LIMIT <= factor <= BRIGHTNESS_LIMIT:
        raise DomainError(f"brightness factor {factor} outside [-0.25, 0.25]")
    if factor == 0:
        return grid
    scaled = np.floor(grid.pixels.astype(np.float64) * (1.0 + factor) + 0.5)
    return LuminanceGrid(np.clip(scaled, 0, 255).astype(np.uint8))


def box_blur(grid: LuminanceGrid, radius: int = 2) -> LuminanceGrid:
    """Uniform (2r+1)x(2r+1) mean filter with edge replication."""
    if radius < 1:
        raise DomainError(f"blur radius must be >= 1, got {radius}")
    return LuminanceGrid(kernels.box_blur(grid.pixels, int(radius)))


def laplacian_variance(grid: LuminanceGrid) -> float:
    """Population variance of the 4-neighbour Laplacian over interior pixels."""
    if grid.width < 3 or grid.height < 3:
        raise DomainError(f"sharpness needs at least 3x3 pixels, got {grid.width}x{grid.height}")
    s, q, n = kernels.laplacian_sums(grid.pixels)
    s, q, n = int(s), int(q), int(n)
    return (q * n - s * s) / (n * n)


def rms_contrast(grid: LuminanceGrid) -> float:
    p = grid.pixels.astype(np.int64)
    n = p.size
    s = int(p.sum())
    q = int((p * p).sum())
    return math.sqrt((q * n - s * s) / (n * n)) / 255.0


def exposure_clip_fraction(grid: LuminanceGrid) -> float:
    p = grid.pixels
    return int(np.count_nonzero((p == 0) | (p == 255))) / p.size


def warp_nearest(
    grid: LuminanceGrid,
    transform: Affine2,
    out_width: int | None = None,
    out_height: int | None = None,
) -> LuminanceGrid:
    """Resample ``grid`` under ``transform`` by inverse nearest-neighbour mapping.

    Output pixels whose source falls outside the image are 0. The output
    size defaults to the input size.
    """
    inv = transform.inverse()
    out_w = grid.width if out_width is None else out_width
    out_h = grid.height if out_height is None else out_height
    out = kernels.warp_nearest(grid.pixels, out_h, out_w, inv.a, inv.b, inv.tx, inv.c, inv.d, inv.ty)
    return LuminanceGrid(out)
