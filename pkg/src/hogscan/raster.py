"""
Raster images for hogscan: netpbm decoding/encoding, grayscale conversion,
gamma normalization and bilinear resizing.

Images wrap read-only numpy ``uint8`` arrays, ``(height, width)`` for gray and
``(height, width, 3)`` for RGB, so they can be shared freely between threads.
"""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from hogscan.errors import DecodeError, DimensionError, ParameterError

logger = logging.getLogger(__name__)

_WHITESPACE = b" \t\r\n\v\f"
_HEADER_FIELDS = ("width", "height", "maxval")

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def round_clip(values: np.ndarray) -> np.ndarray:
    """Round half up to the nearest integer and clamp to [0, 255] as uint8."""
    return np.clip(np.floor(np.asarray(values, dtype=np.float64) + 0.5), 0, 255).astype(np.uint8)


def _frozen(array: np.ndarray) -> np.ndarray:
    frozen = np.array(array, dtype=np.uint8, copy=True)
    frozen.setflags(write=False)
    return frozen


def _checked_pixels(pixels: np.ndarray, ndim: int, kind: str) -> np.ndarray:
    array = np.asarray(pixels)
    if array.ndim != ndim or (ndim == 3 and array.shape[2] != 3):
        raise DimensionError(f"{kind}: unexpected pixel array shape {array.shape}")
    if array.shape[0] < 1 or array.shape[1] < 1:
        raise DimensionError(f"{kind}: width and height must be >= 1, got {array.shape[1]}x{array.shape[0]}")
    if array.dtype != np.uint8:
        if array.size and (array.min() < 0 or array.max() > 255):
            raise ParameterError(f"{kind}: intensities must lie in [0, 255]")
    return _frozen(array)


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit single-channel raster."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "pixels", _checked_pixels(self.pixels, 2, "GrayImage"))

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def size(self) -> Tuple[int, int]:
        return self.width, self.height

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __repr__(self) -> str:
        return f"GrayImage({self.width}x{self.height})"


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit three-channel raster."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "pixels", _checked_pixels(self.pixels, 3, "RgbImage"))

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RgbImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __repr__(self) -> str:
        return f"RgbImage({self.width}x{self.height})"


Image = Union[GrayImage, RgbImage]


# ---------------------------------------------------------------------------
# Netpbm codec
# ---------------------------------------------------------------------------


def _read_header(data: bytes) -> Tuple[bytes, List[int], int]:
    """Return (magic, [width, height, maxval], payload offset)."""
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise DecodeError(f"magic: expected P5 or P6, got {magic!r}")

    pos = 2
    fields: List[int] = []
    while len(fields) < len(_HEADER_FIELDS):
        name = _HEADER_FIELDS[len(fields)]
        while pos < len(data):
            ch = data[pos : pos + 1]
            if ch in _WHITESPACE:
                pos += 1
            elif ch == b"#":
                end = data.find(b"\n", pos)
                pos = len(data) if end < 0 else end + 1
            else:
                break
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise DecodeError(f"{name}: missing or non-numeric header field")
        fields.append(int(data[start:pos]))

    if pos >= len(data) or data[pos : pos + 1] not in _WHITESPACE:
        raise DecodeError("maxval: header must end with a single whitespace byte")
    return magic, fields, pos + 1


def decode_image(data: bytes) -> Image:
    """
    Decode a binary PGM (P5) or PPM (P6) stream with maxval 255.

    Raises:
        DecodeError: Naming the offending field (magic, width, height, maxval, payload).
    """
    magic, (width, height, maxval), offset = _read_header(bytes(data))
    if width < 1:
        raise DecodeError(f"width: must be >= 1, got {width}")
    if height < 1:
        raise DecodeError(f"height: must be >= 1, got {height}")
    if maxval != 255:
        raise DecodeError(f"maxval: only 255 is supported, got {maxval}")

    channels = 1 if magic == b"P5" else 3
    expected = width * height * channels
    payload = data[offset : offset + expected]
    if len(payload) < expected:
        raise DecodeError(f"payload: truncated, expected {expected} bytes, got {len(payload)}")

    array = np.frombuffer(payload, dtype=np.uint8)
    if channels == 1:
        return GrayImage(array.reshape(height, width))
    return RgbImage(array.reshape(height, width, 3))


def encode_pgm(img: GrayImage) -> bytes:
    """Encode as binary P5."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def encode_ppm(img: RgbImage) -> bytes:
    """Encode as binary P6."""
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def load_image(path: Union[str, Path]) -> Image:
    """
    Load an image file.

    Netpbm streams are decoded natively; anything else goes through Pillow
    when it is installed (``pip install hogscan[images]``).
    """
    path = Path(path)
    data = path.read_bytes()
    if data[:2] in (b"P5", b"P6"):
        try:
            return decode_image(data)
        except DecodeError as exc:
            raise DecodeError(f"{path}: {exc}") from exc

    try:
        from PIL import Image as PilImage
    except ImportError as exc:
        raise DecodeError(f"{path}: not a binary PGM/PPM file and Pillow is not installed") from exc

    try:
        with PilImage.open(io.BytesIO(data)) as pil:
            if pil.mode == "L":
                return GrayImage(np.asarray(pil, dtype=np.uint8))
            return RgbImage(np.asarray(pil.convert("RGB"), dtype=np.uint8))
    except OSError as exc:
        raise DecodeError(f"{path}: {exc}") from exc


def save_image(path: Union[str, Path], img: Image) -> None:
    """Write a GrayImage as PGM or an RgbImage as PPM."""
    data = encode_pgm(img) if isinstance(img, GrayImage) else encode_ppm(img)
    Path(path).write_bytes(data)


# ---------------------------------------------------------------------------
# Pixel operations
# ---------------------------------------------------------------------------


def to_grayscale(img: RgbImage) -> GrayImage:
    """Luma conversion with the 0.299/0.587/0.114 weights."""
    rgb = img.pixels.astype(np.float64)
    r, g, b = LUMA_WEIGHTS
    luma = r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]
    return GrayImage(round_clip(luma))


def as_gray(img: Image) -> GrayImage:
    """Return img unchanged when it is already gray, converted otherwise."""
    if isinstance(img, GrayImage):
        return img
    return to_grayscale(img)


def gamma_correct(img: GrayImage, gamma: float) -> GrayImage:
    """
    Pointwise ``255 * (in / 255) ** gamma``, rounded half up and clamped.

    Raises:
        ParameterError: If gamma is not a positive finite number.
    """
    if not (gamma > 0 and math.isfinite(gamma)):
        raise ParameterError(f"gamma: must be > 0, got {gamma}")
    if gamma == 1.0:
        return img
    levels = np.arange(256, dtype=np.float64) / 255.0
    lut = round_clip(255.0 * np.power(levels, gamma))
    return GrayImage(lut[img.pixels])


def _sample_axis(in_size: int, out_size: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # half-pixel centers, clamped to the edge samples
    src = (np.arange(out_size, dtype=np.float64) + 0.5) * (in_size / out_size) - 0.5
    src = np.clip(src, 0.0, in_size - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, in_size - 1)
    return lo, hi, src - lo


def resize_bilinear(img: GrayImage, out_width: int, out_height: int) -> GrayImage:
    """
    Bilinear resize with half-pixel-center coordinate mapping.

    Raises:
        ParameterError: If either output dimension is below 1.
    """
    if out_width < 1 or out_height < 1:
        raise ParameterError(f"resize: output size must be >= 1x1, got {out_width}x{out_height}")
    if (out_width, out_height) == img.size:
        return img

    x0, x1, fx = _sample_axis(img.width, out_width)
    y0, y1, fy = _sample_axis(img.height, out_height)
    src = img.pixels.astype(np.float64)

    top = src[y0][:, x0] * (1.0 - fx) + src[y0][:, x1] * fx
    bottom = src[y1][:, x0] * (1.0 - fx) + src[y1][:, x1] * fx
    out = top * (1.0 - fy)[:, None] + bottom * fy[:, None]
    return GrayImage(round_clip(out))


def crop(img: GrayImage, x: int, y: int, width: int, height: int) -> GrayImage:
    """Copy out a rectangle that must lie fully inside the image."""
    if width < 1 or height < 1 or x < 0 or y < 0 or x + width > img.width or y + height > img.height:
        raise DimensionError(
            f"crop: rectangle ({x}, {y}, {width}, {height}) outside {img.width}x{img.height} image"
        )
    return GrayImage(img.pixels[y : y + height, x : x + width])
