"""
Histogram-of-oriented-gradients window descriptors.

Pipeline: gradient field (1-D derivative or Sobel masks, clamp-to-edge borders),
hard per-pixel orientation vote into each cell's histogram, L1 normalization of
each block, and row-major concatenation of the blocks of a detection window.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from hogscan import kv
from hogscan.errors import ConfigError, DimensionError
from hogscan.raster import GrayImage, Image, as_gray, gamma_correct

logger = logging.getLogger(__name__)

# A descriptor is a 1-D float64 array of length descriptor_len(config).
Descriptor = np.ndarray
Origin = Tuple[int, int]


class GradientFilter(str, Enum):
    """Derivative masks available for the gradient step."""

    ONE_D = "one_d"
    SOBEL = "sobel"

    @classmethod
    def parse(cls, text: str) -> "GradientFilter":
        lowered = text.strip().lower().replace("-", "_")
        for member in cls:
            if member.value == lowered:
                return member
        raise ConfigError(f"gradient_filter: expected one of {[m.value for m in cls]}, got {text!r}")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HogConfig:
    """Window, cell, block and orientation geometry of the descriptor."""

    window_width: int = 64
    window_height: int = 128
    cell_size: int = 8
    block_size: int = 32
    block_stride: int = 8
    bin_count: int = 9
    epsilon: float = 1e-5
    gamma: Optional[float] = 0.5
    gradient_filter: GradientFilter = GradientFilter.ONE_D

    def __post_init__(self) -> None:
        if not isinstance(self.gradient_filter, GradientFilter):
            object.__setattr__(self, "gradient_filter", GradientFilter.parse(str(self.gradient_filter)))
        for name in ("window_width", "window_height", "cell_size", "block_size", "block_stride", "bin_count"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name}: must be a positive integer, got {value!r}")
        if self.block_size % self.cell_size:
            raise ConfigError(f"block_size: {self.block_size} is not a multiple of cell_size {self.cell_size}")
        for name, extent in (("window_width", self.window_width), ("window_height", self.window_height)):
            if extent < self.block_size:
                raise ConfigError(f"{name}: {extent} is smaller than block_size {self.block_size}")
            if (extent - self.block_size) % self.block_stride:
                raise ConfigError(
                    f"{name}: ({extent} - block_size {self.block_size}) is not a multiple of "
                    f"block_stride {self.block_stride}"
                )
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ConfigError(f"epsilon: must be > 0, got {self.epsilon!r}")
        if self.gamma is not None and not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ConfigError(f"gamma: must be > 0 or disabled, got {self.gamma!r}")

    @property
    def bin_width_degrees(self) -> float:
        return 180.0 / self.bin_count

    @property
    def cells_per_block(self) -> int:
        return self.block_size // self.cell_size

    @property
    def block_len(self) -> int:
        return self.cells_per_block * self.cells_per_block * self.bin_count

    @property
    def blocks_x(self) -> int:
        return (self.window_width - self.block_size) // self.block_stride + 1

    @property
    def blocks_y(self) -> int:
        return (self.window_height - self.block_size) // self.block_stride + 1

    def with_changes(self, **changes) -> "HogConfig":
        """Return a validated copy with some fields replaced."""
        return replace(self, **changes)

    def to_pairs(self) -> List[Tuple[str, str]]:
        """Key-value rendering used by model files and ``describe``."""
        return [
            ("window_width", str(self.window_width)),
            ("window_height", str(self.window_height)),
            ("cell_size", str(self.cell_size)),
            ("block_size", str(self.block_size)),
            ("block_stride", str(self.block_stride)),
            ("bin_count", str(self.bin_count)),
            ("bin_width_degrees", kv.format_float(self.bin_width_degrees)),
            ("epsilon", kv.format_float(self.epsilon)),
            ("gamma", "off" if self.gamma is None else kv.format_float(self.gamma)),
            ("gradient_filter", self.gradient_filter.value),
        ]

    def to_dict(self) -> dict:
        return {
            "window_width": self.window_width,
            "window_height": self.window_height,
            "cell_size": self.cell_size,
            "block_size": self.block_size,
            "block_stride": self.block_stride,
            "bin_count": self.bin_count,
            "bin_width_degrees": self.bin_width_degrees,
            "epsilon": self.epsilon,
            "gamma": self.gamma,
            "gradient_filter": self.gradient_filter.value,
        }

    @classmethod
    def from_mapping(cls, values: Mapping[str, str], base: Optional["HogConfig"] = None) -> "HogConfig":
        """
        Build a config from text values, starting from base (or the defaults).

        Keys that are not HogConfig fields are ignored; ``bin_width_degrees``
        is derived and only checked for consistency.
        """
        base = base or cls()
        changes: Dict[str, object] = {}
        for name in ("window_width", "window_height", "cell_size", "block_size", "block_stride", "bin_count"):
            if name in values:
                changes[name] = kv.parse_int(name, values[name])
        if "epsilon" in values:
            changes["epsilon"] = kv.parse_float("epsilon", values["epsilon"])
        if "gamma" in values:
            changes["gamma"] = kv.parse_optional_float("gamma", values["gamma"])
        if "gradient_filter" in values:
            changes["gradient_filter"] = GradientFilter.parse(values["gradient_filter"])
        config = replace(base, **changes)
        if "bin_width_degrees" in values:
            declared = kv.parse_float("bin_width_degrees", values["bin_width_degrees"])
            if not math.isclose(declared, config.bin_width_degrees, rel_tol=1e-9):
                raise ConfigError(
                    f"bin_width_degrees: {declared} does not match 180 / bin_count = {config.bin_width_degrees}"
                )
        return config


REALTIME = HogConfig()
CLASSIC = HogConfig(block_size=16)
PRESETS: Dict[str, HogConfig] = {"realtime": REALTIME, "classic": CLASSIC}


def descriptor_len(config: HogConfig) -> int:
    """Number of components in one window descriptor."""
    return config.blocks_x * config.blocks_y * config.block_len


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GradientField:
    """Per-pixel gradient magnitude and unsigned orientation in degrees [0, 180)."""

    magnitude: np.ndarray
    orientation: np.ndarray
    _bins: Dict[int, np.ndarray] = field(default_factory=dict, repr=False, compare=False)

    @property
    def width(self) -> int:
        return int(self.magnitude.shape[1])

    @property
    def height(self) -> int:
        return int(self.magnitude.shape[0])


def _derivatives(intensity: np.ndarray, gradient_filter: GradientFilter) -> Tuple[np.ndarray, np.ndarray]:
    p = np.pad(intensity, 1, mode="edge")
    if gradient_filter is GradientFilter.SOBEL:
        right = p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]
        left = p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2]
        below = p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]
        above = p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:]
        return right - left, below - above
    return p[1:-1, 2:] - p[1:-1, :-2], p[2:, 1:-1] - p[:-2, 1:-1]


def compute_gradient(img: GrayImage, gradient_filter: GradientFilter = GradientFilter.ONE_D) -> GradientField:
    """
    Gradient magnitude and unsigned orientation of every pixel.

    Raises:
        DimensionError: If the image is smaller than 3x3.
    """
    if img.width < 3 or img.height < 3:
        raise DimensionError(f"gradient: image must be at least 3x3, got {img.width}x{img.height}")
    gx, gy = _derivatives(img.pixels.astype(np.float64), GradientFilter(gradient_filter))

    magnitude = np.sqrt(gx * gx + gy * gy)
    orientation = np.degrees(np.arctan2(gy, gx))
    orientation = np.where(orientation < 0.0, orientation + 180.0, orientation)
    orientation = np.where(orientation >= 180.0, 0.0, orientation)

    magnitude.setflags(write=False)
    orientation.setflags(write=False)
    return GradientField(magnitude=magnitude, orientation=orientation)


def orientation_bins(grad: GradientField, bin_count: int) -> np.ndarray:
    """Bin index of every pixel, floor(theta / bin width) in [0, bin_count - 1]."""
    bins = grad._bins.get(bin_count)
    if bins is None:
        width = 180.0 / bin_count
        bins = np.minimum(np.floor(grad.orientation / width).astype(np.intp), bin_count - 1)
        bins.setflags(write=False)
        grad._bins[bin_count] = bins
    return bins


def orientation_planes(grad: GradientField, bin_count: int) -> np.ndarray:
    """
    One magnitude plane per orientation bin, shape ``(bin_count, h, w)``.

    A pixel's magnitude appears only in the plane of its bin; summing a plane
    over a cell gives that cell's histogram entry.
    """
    bins = orientation_bins(grad, bin_count)
    planes = np.zeros((bin_count,) + grad.magnitude.shape, dtype=np.float64)
    for index in range(bin_count):
        planes[index] = np.where(bins == index, grad.magnitude, 0.0)
    return planes


# ---------------------------------------------------------------------------
# Histograms and blocks
# ---------------------------------------------------------------------------


def _check_region(grad: GradientField, origin: Origin, width: int, height: int, what: str) -> None:
    x, y = origin
    if x < 0 or y < 0 or x + width > grad.width or y + height > grad.height:
        raise DimensionError(
            f"{what}: rectangle at ({x}, {y}) of size {width}x{height} exceeds {grad.width}x{grad.height} field"
        )


def _vote(grad: GradientField, x: int, y: int, config: HogConfig) -> np.ndarray:
    c = config.cell_size
    bins = orientation_bins(grad, config.bin_count)[y : y + c, x : x + c]
    weights = grad.magnitude[y : y + c, x : x + c]
    return np.bincount(bins.ravel(), weights=weights.ravel(), minlength=config.bin_count).astype(np.float64)


def cell_histogram(grad: GradientField, cell_origin: Origin, config: HogConfig) -> np.ndarray:
    """
    Magnitude-weighted orientation histogram of one cell.

    Every pixel adds its magnitude to exactly one bin; there is no
    interpolation between bins or cells.
    """
    _check_region(grad, cell_origin, config.cell_size, config.cell_size, "cell")
    return _vote(grad, cell_origin[0], cell_origin[1], config)


def normalize_block(histograms: np.ndarray, epsilon: float) -> np.ndarray:
    """L1 normalization ``v / (|v|_1 + epsilon)``; a zero vector stays zero."""
    v = np.asarray(histograms, dtype=np.float64)
    return v / (np.abs(v).sum() + epsilon)


class DescriptorCache:
    """
    Descriptor extraction over one gradient field with memoized cells and blocks.

    Windows that share cell or block origins reuse the same arrays, and the
    values are produced by the same code as a one-off window_descriptor call,
    so cached and uncached descriptors are bit-identical.
    """

    def __init__(self, grad: GradientField, config: HogConfig) -> None:
        self.grad = grad
        self.config = config
        self._cells: Dict[Origin, np.ndarray] = {}
        self._blocks: Dict[Origin, np.ndarray] = {}

    def cell(self, x: int, y: int) -> np.ndarray:
        hist = self._cells.get((x, y))
        if hist is None:
            hist = _vote(self.grad, x, y, self.config)
            self._cells[(x, y)] = hist
        return hist

    def block(self, x: int, y: int) -> np.ndarray:
        normalized = self._blocks.get((x, y))
        if normalized is None:
            cfg = self.config
            n = cfg.cells_per_block
            cells = [self.cell(x + cx * cfg.cell_size, y + cy * cfg.cell_size) for cy in range(n) for cx in range(n)]
            normalized = normalize_block(np.concatenate(cells), cfg.epsilon)
            self._blocks[(x, y)] = normalized
        return normalized

    def window(self, x: int, y: int) -> Descriptor:
        cfg = self.config
        _check_region(self.grad, (x, y), cfg.window_width, cfg.window_height, "window")
        blocks = [
            self.block(x + bx * cfg.block_stride, y + by * cfg.block_stride)
            for by in range(cfg.blocks_y)
            for bx in range(cfg.blocks_x)
        ]
        return np.concatenate(blocks)


def window_descriptor(grad: GradientField, window_origin: Origin, config: HogConfig) -> Descriptor:
    """
    Descriptor of the detection window whose top-left corner is window_origin.

    Blocks are enumerated row-major at block_stride spacing, cells row-major
    inside each block, bins in ascending angle order.
    """
    return DescriptorCache(grad, config).window(*window_origin)


def preprocess(img: Image, config: HogConfig) -> GrayImage:
    """Grayscale conversion followed by gamma correction when enabled."""
    gray = as_gray(img)
    if config.gamma is None:
        return gray
    return gamma_correct(gray, config.gamma)
