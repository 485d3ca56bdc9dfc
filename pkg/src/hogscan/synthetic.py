"""
Seeded synthetic corpus: a bright standing figure (head, torso, two legs)
planted on noisy backgrounds, plus clutter-only negative images.

Figure geometry is expressed as fractions of the detection window so the
same corpus logic serves any window size.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from hogscan.detect import Box, intersection_area
from hogscan.evaluation import Annotation, format_annotations
from hogscan.raster import GrayImage, round_clip, save_image

logger = logging.getLogger(__name__)

SCENE_SIZE = (160, 176)
WINDOW_SIZE = (64, 128)

# (x0, y0, x1, y1) as window fractions
_TORSO = (0.28, 0.27, 0.72, 0.62)
_LEGS = ((0.30, 0.62, 0.46, 0.94), (0.54, 0.62, 0.70, 0.94))
_HEAD_CENTER = (0.5, 0.16)
_HEAD_RADIUS = 0.14  # of the window width


def _background(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    level = rng.uniform(90.0, 130.0)
    return level + rng.normal(0.0, 8.0, size=(height, width))


def _rect(canvas: np.ndarray, x0: int, y0: int, x1: int, y1: int, value: float) -> None:
    canvas[max(0, y0) : max(0, y1), max(0, x0) : max(0, x1)] = value


def figure_box(width: int = WINDOW_SIZE[0], height: int = WINDOW_SIZE[1]) -> Box:
    """Bounding box of the figure inside a window of the given size."""
    radius = _HEAD_RADIUS * width
    x0 = int(round(_TORSO[0] * width))
    x1 = int(round(_TORSO[2] * width))
    y0 = int(round(_HEAD_CENTER[1] * height - radius))
    y1 = int(round(_LEGS[0][3] * height))
    return x0, y0, x1 - x0, y1 - y0


def paint_figure(canvas: np.ndarray, x: int, y: int, width: int, height: int, value: float) -> None:
    """Draw the figure into canvas with its window's top-left corner at (x, y)."""

    def px(fx: float, fy: float) -> Tuple[int, int]:
        return x + int(round(fx * width)), y + int(round(fy * height))

    for part in (_TORSO,) + _LEGS:
        (ax, ay), (bx, by) = px(part[0], part[1]), px(part[2], part[3])
        _rect(canvas, ax, ay, bx, by, value)

    cx, cy = px(*_HEAD_CENTER)
    radius = _HEAD_RADIUS * width
    rows, cols = np.ogrid[: canvas.shape[0], : canvas.shape[1]]
    canvas[(cols - cx) ** 2 + (rows - cy) ** 2 <= radius * radius] = value


def _clutter(rng: np.random.Generator, canvas: np.ndarray, avoid: Sequence[Box] = ()) -> None:
    height, width = canvas.shape
    for _ in range(int(rng.integers(1, 5))):
        for _attempt in range(20):
            w = int(rng.integers(6, min(50, width)))
            h = int(rng.integers(6, min(80, height)))
            x = int(rng.integers(0, width - w + 1))
            y = int(rng.integers(0, height - h + 1))
            if all(intersection_area((x, y, w, h), box) == 0 for box in avoid):
                _rect(canvas, x, y, x + w, y + h, rng.uniform(150.0, 240.0))
                break


def render_figure(rng: np.random.Generator, window: Tuple[int, int] = WINDOW_SIZE, jitter: int = 1) -> GrayImage:
    """One noisy window with a figure, shifted by up to jitter pixels each way."""
    width, height = window
    canvas = _background(rng, width, height)
    dx, dy = (int(v) for v in rng.integers(-jitter, jitter + 1, size=2))
    paint_figure(canvas, dx, dy, width, height, rng.uniform(190.0, 235.0))
    return GrayImage(round_clip(canvas))


def make_positives(count: int, seed: int = 0, window: Tuple[int, int] = WINDOW_SIZE) -> List[GrayImage]:
    """Window-sized crops each holding one figure."""
    rng = np.random.default_rng(seed)
    return [render_figure(rng, window) for _ in range(count)]


def make_offset_negatives(count: int, seed: int = 3, window: Tuple[int, int] = WINDOW_SIZE) -> List[GrayImage]:
    """
    Window-sized crops with a figure displaced by a third of the window or more.

    These are the windows a scan produces next to a real target; training on
    them keeps the response peaked on the centred figure.
    """
    rng = np.random.default_rng(seed)
    width, height = window
    crops = []
    for _ in range(count):
        canvas = _background(rng, width, height)
        dx = dy = 0
        if rng.random() < 0.5:
            dx = int(rng.integers(width // 3, 2 * width // 3 + 1)) * int(rng.choice((-1, 1)))
        else:
            dy = int(rng.integers(height // 3, height // 2 + 1)) * int(rng.choice((-1, 1)))
        paint_figure(canvas, dx, dy, width, height, rng.uniform(190.0, 235.0))
        crops.append(GrayImage(round_clip(canvas)))
    return crops


def make_negative_images(count: int, seed: int = 1, size: Tuple[int, int] = SCENE_SIZE) -> List[GrayImage]:
    """Noise images with random bright rectangles and no figure."""
    rng = np.random.default_rng(seed)
    images = []
    for _ in range(count):
        canvas = _background(rng, *size)
        _clutter(rng, canvas)
        images.append(GrayImage(round_clip(canvas)))
    return images


def make_scenes(
    count: int,
    seed: int = 2,
    size: Tuple[int, int] = SCENE_SIZE,
    window: Tuple[int, int] = WINDOW_SIZE,
    grid: int = 8,
) -> List[Tuple[GrayImage, Box]]:
    """
    Scenes with one figure planted at a grid-aligned window origin.

    Returns (image, target box) pairs; the target is the figure's bounding box.
    """
    rng = np.random.default_rng(seed)
    width, height = size
    win_w, win_h = window
    fx, fy, fw, fh = figure_box(win_w, win_h)
    scenes = []
    for _ in range(count):
        ox = grid * int(rng.integers(0, (width - win_w) // grid + 1))
        oy = grid * int(rng.integers(0, (height - win_h) // grid + 1))
        canvas = _background(rng, width, height)
        _clutter(rng, canvas, avoid=[(ox, oy, win_w, win_h)])
        paint_figure(canvas, ox, oy, win_w, win_h, rng.uniform(190.0, 235.0))
        scenes.append((GrayImage(round_clip(canvas)), (ox + fx, oy + fy, fw, fh)))
    return scenes


def write_corpus(
    root: Union[str, Path],
    positives: int = 200,
    negative_images: int = 20,
    scenes: int = 50,
    seed: int = 0,
    offset_negatives: int = 100,
) -> Path:
    """
    Write ``pos/``, ``neg/`` and ``scenes/`` PGM files plus ``annotations.txt``.

    ``neg/`` holds the clutter images and the window-sized offset-figure
    crops. Returns the path of the annotation file; its image paths are
    relative to the corpus root.
    """
    root = Path(root)
    for sub in ("pos", "neg", "scenes"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for index, img in enumerate(make_positives(positives, seed=seed)):
        save_image(root / "pos" / f"pos_{index:04d}.pgm", img)
    for index, img in enumerate(make_negative_images(negative_images, seed=seed + 1)):
        save_image(root / "neg" / f"neg_{index:04d}.pgm", img)
    for index, img in enumerate(make_offset_negatives(offset_negatives, seed=seed + 3)):
        save_image(root / "neg" / f"offset_{index:04d}.pgm", img)
    annotations = []
    for index, (img, box) in enumerate(make_scenes(scenes, seed=seed + 2)):
        name = f"scenes/scene_{index:04d}.pgm"
        save_image(root / name, img)
        annotations.append(Annotation(image_path=name, targets=(box,)))
    path = root / "annotations.txt"
    path.write_text(format_annotations(annotations), encoding="utf-8")
    logger.debug("wrote synthetic corpus to %s", root)
    return path
