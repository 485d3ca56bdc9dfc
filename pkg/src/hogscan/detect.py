"""
Multi-scale sliding-window detection.

Each pyramid level is scanned on a fixed stride grid; every window whose
decision value reaches the global threshold becomes a hit, is mapped back to
original-image coordinates and, optionally, goes through greedy non-maximum
suppression.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from hogscan import kv
from hogscan.errors import DimensionError, ParameterError
from hogscan.hog import DescriptorCache, GradientField, HogConfig, Origin, compute_gradient, preprocess
from hogscan.raster import GrayImage, Image, as_gray, crop, resize_bilinear
from hogscan.svm import LinearModel, score

logger = logging.getLogger(__name__)

Box = Tuple[int, int, int, int]
DETECTION_FIELDS = ("image", "x", "y", "w", "h", "score", "scale")


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


@dataclass(frozen=True)
class DetectParams:
    """Scan and suppression settings."""

    tau: float = 1.05
    scale_step: float = 1.05
    nms_overlap: float = 0.5
    nms_enabled: bool = True
    window_stride: Optional[int] = None

    def __post_init__(self) -> None:
        if math.isnan(self.tau):
            raise ParameterError("tau: must be a number")
        if not (self.scale_step > 1 and math.isfinite(self.scale_step)):
            raise ParameterError(f"scale_step: must be > 1, got {self.scale_step!r}")
        if not 0.0 <= self.nms_overlap <= 1.0:
            raise ParameterError(f"nms_overlap: must lie in [0, 1], got {self.nms_overlap!r}")
        if self.window_stride is not None and self.window_stride < 1:
            raise ParameterError(f"window_stride: must be >= 1, got {self.window_stride!r}")

    def stride_for(self, config: HogConfig) -> int:
        """Window stride in pixels; defaults to the cell size."""
        return self.window_stride or config.cell_size

    def to_pairs(self) -> List[Tuple[str, str]]:
        return [
            ("tau", kv.format_float(self.tau)),
            ("scale_step", kv.format_float(self.scale_step)),
            ("nms_overlap", kv.format_float(self.nms_overlap)),
            ("nms_enabled", "true" if self.nms_enabled else "false"),
            ("window_stride", "auto" if self.window_stride is None else str(self.window_stride)),
        ]


@dataclass(frozen=True)
class Detection:
    """A scored box in original-image pixel coordinates."""

    x: int
    y: int
    width: int
    height: int
    score: float
    scale: float

    @property
    def box(self) -> Box:
        return self.x, self.y, self.width, self.height

    def to_dict(self, image: str = "") -> dict:
        return {
            "image": image,
            "x": self.x,
            "y": self.y,
            "w": self.width,
            "h": self.height,
            "score": self.score,
            "scale": self.scale,
        }


# ---------------------------------------------------------------------------
# Box geometry
# ---------------------------------------------------------------------------


def intersection_area(a: Box, b: Box) -> int:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    w = min(ax + aw, bx + bw) - max(ax, bx)
    h = min(ay + ah, by + bh) - max(ay, by)
    return max(0, w) * max(0, h)


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    inter = intersection_area(a, b)
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union if union > 0 else 0.0


# ---------------------------------------------------------------------------
# Timing
# ---------------------------------------------------------------------------


class PhaseTimer:
    """Accumulates wall-clock milliseconds per detection phase."""

    PHASES = ("preprocess", "pyramid", "gradient", "scan", "nms")

    def __init__(self) -> None:
        self.totals: Dict[str, float] = dict.fromkeys(self.PHASES, 0.0)
        self._lock = threading.Lock()

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = (time.perf_counter() - start) * 1000.0
            with self._lock:
                self.totals[name] = self.totals.get(name, 0.0) + elapsed

    @property
    def total_ms(self) -> float:
        return sum(self.totals.values())


# ---------------------------------------------------------------------------
# Pyramid and scanning
# ---------------------------------------------------------------------------


def build_pyramid(img: GrayImage, config: HogConfig, scale_step: float) -> List[Tuple[float, GrayImage]]:
    """
    Downscaled copies of img, level k resized by ``1 / scale_step ** k``.

    Levels continue while the resized image still holds one full window;
    an image smaller than the window gives an empty pyramid.
    """
    if not (scale_step > 1 and math.isfinite(scale_step)):
        raise ParameterError(f"scale_step: must be > 1, got {scale_step!r}")
    levels: List[Tuple[float, GrayImage]] = []
    k = 0
    while True:
        scale = scale_step**k
        width = int(math.floor(img.width / scale))
        height = int(math.floor(img.height / scale))
        if width < config.window_width or height < config.window_height:
            break
        levels.append((scale, img if k == 0 else resize_bilinear(img, width, height)))
        k += 1
    logger.debug("pyramid of %d levels for %dx%d image", len(levels), img.width, img.height)
    return levels


def scan_level(
    grad: GradientField, model: LinearModel, window_stride: int, tau: float
) -> List[Tuple[Origin, float]]:
    """
    Score every window on the stride grid of one level.

    Returns the (origin, score) pairs with ``score >= tau`` in row-major
    origin order.
    """
    config = model.config
    if grad.width < config.window_width or grad.height < config.window_height:
        raise DimensionError(
            f"scan: {grad.width}x{grad.height} field is smaller than the "
            f"{config.window_width}x{config.window_height} window"
        )
    if window_stride < 1:
        raise ParameterError(f"window_stride: must be >= 1, got {window_stride!r}")

    cache = DescriptorCache(grad, config)
    hits: List[Tuple[Origin, float]] = []
    for y in range(0, grad.height - config.window_height + 1, window_stride):
        for x in range(0, grad.width - config.window_width + 1, window_stride):
            value = score(model, cache.window(x, y))
            if value >= tau:
                hits.append(((x, y), value))
    return hits


def _to_detection(
    origin: Origin, value: float, scale: float, config: HogConfig, bounds: Tuple[int, int]
) -> Optional[Detection]:
    x0 = round_half_up(origin[0] * scale)
    y0 = round_half_up(origin[1] * scale)
    x1 = min(bounds[0], x0 + round_half_up(config.window_width * scale))
    y1 = min(bounds[1], y0 + round_half_up(config.window_height * scale))
    x0, y0 = max(0, x0), max(0, y0)
    if x1 <= x0 or y1 <= y0:
        return None
    return Detection(x=x0, y=y0, width=x1 - x0, height=y1 - y0, score=value, scale=scale)


def detect(
    img: Image,
    model: LinearModel,
    params: DetectParams,
    timer: Optional[PhaseTimer] = None,
    workers: int = 1,
) -> List[Detection]:
    """
    Run the full detector on one image.

    Applies the model's preprocessing, scans every pyramid level (in a thread
    pool when workers > 1), maps hits back to the original frame, suppresses
    overlaps when enabled, and returns detections by descending score.
    """
    timer = timer or PhaseTimer()
    config = model.config
    with timer.phase("preprocess"):
        gray = preprocess(img, config)
    with timer.phase("pyramid"):
        levels = build_pyramid(gray, config, params.scale_step)
    stride = params.stride_for(config)
    bounds = (gray.width, gray.height)

    def run_level(level: Tuple[float, GrayImage]) -> List[Detection]:
        scale, level_img = level
        with timer.phase("gradient"):
            grad = compute_gradient(level_img, config.gradient_filter)
        with timer.phase("scan"):
            hits = scan_level(grad, model, stride, params.tau)
        mapped = (_to_detection(origin, value, scale, config, bounds) for origin, value in hits)
        return [d for d in mapped if d is not None]

    if workers > 1 and len(levels) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_level = list(pool.map(run_level, levels))
    else:
        per_level = [run_level(level) for level in levels]
    detections = [d for level in per_level for d in level]

    with timer.phase("nms"):
        if params.nms_enabled:
            detections = nms(detections, params.nms_overlap)
        else:
            detections = sorted(detections, key=lambda d: -d.score)
    logger.debug("%d detections over %d levels", len(detections), len(levels))
    return detections


def nms(detections: Sequence[Detection], overlap_threshold: float) -> List[Detection]:
    """
    Greedy non-maximum suppression.

    Keeps the best remaining detection and drops every other one whose IoU
    with a kept detection exceeds overlap_threshold.
    """
    if not 0.0 <= overlap_threshold <= 1.0:
        raise ParameterError(f"nms_overlap: must lie in [0, 1], got {overlap_threshold!r}")
    kept: List[Detection] = []
    for candidate in sorted(detections, key=lambda d: -d.score):
        if all(iou(candidate.box, k.box) <= overlap_threshold for k in kept):
            kept.append(candidate)
    return kept


def mine_hard_negatives(images: Iterable[Image], model: LinearModel, params: DetectParams) -> List[GrayImage]:
    """
    Window-sized crops of every detection on images known to contain no target.
    """
    config = model.config
    crops: List[GrayImage] = []
    for img in images:
        gray = as_gray(img)
        for d in detect(gray, model, params):
            patch = crop(gray, d.x, d.y, d.width, d.height)
            crops.append(resize_bilinear(patch, config.window_width, config.window_height))
    logger.debug("mined %d hard negatives", len(crops))
    return crops


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def write_detections(records: Iterable[Tuple[str, Detection]], fmt: str = "jsonl") -> str:
    """
    Render (image name, detection) records as JSON lines or CSV.

    Both formats carry the columns image, x, y, w, h, score, scale.
    """
    if fmt == "jsonl":
        return "".join(json.dumps(d.to_dict(image)) + "\n" for image, d in records)
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(DETECTION_FIELDS)
        for image, d in records:
            writer.writerow([image, d.x, d.y, d.width, d.height, repr(d.score), repr(d.scale)])
        return buffer.getvalue()
    raise ParameterError(f"format: expected 'jsonl' or 'csv', got {fmt!r}")
