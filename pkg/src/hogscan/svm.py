"""
Linear-kernel SVM: primal stochastic subgradient training, scoring, and the
versioned text model file.

The decision value of a descriptor x is ``w . x - rho``; positive means human.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np

from hogscan import kv
from hogscan.errors import ConfigError, DimensionError, ModelFormatError, ParameterError, TrainingError
from hogscan.hog import Descriptor, HogConfig, compute_gradient, descriptor_len, preprocess, window_descriptor
from hogscan.raster import GrayImage, Image, as_gray, resize_bilinear

logger = logging.getLogger(__name__)

MODEL_HEADER = "hogscan-model v1"
_MODEL_MAGIC = "hogscan-model"
_GEOMETRY_KEYS = ("window_width", "window_height", "cell_size", "block_size", "block_stride", "bin_count")
_CONFIG_KEYS = set(_GEOMETRY_KEYS) | {"bin_width_degrees", "epsilon", "gamma", "gradient_filter"}

MetaValue = Union[int, float, str]
Sample = Tuple[Descriptor, int]


@dataclass(frozen=True)
class TrainParams:
    """Hyperparameters of the subgradient solver."""

    C: float = 0.01
    epochs: int = 50
    step_offset: float = 1.0
    seed: int = 42

    def __post_init__(self) -> None:
        if not (self.C > 0 and math.isfinite(self.C)):
            raise ConfigError(f"C: must be > 0, got {self.C!r}")
        if self.epochs < 1:
            raise ConfigError(f"epochs: must be >= 1, got {self.epochs!r}")
        if not (self.step_offset >= 1 and math.isfinite(self.step_offset)):
            raise ConfigError(f"step_offset: must be >= 1, got {self.step_offset!r}")
        if self.seed < 0:
            raise ConfigError(f"seed: must be >= 0, got {self.seed!r}")

    def to_pairs(self) -> List[Tuple[str, str]]:
        return [
            ("C", kv.format_float(self.C)),
            ("epochs", str(self.epochs)),
            ("step_offset", kv.format_float(self.step_offset)),
            ("seed", str(self.seed)),
        ]


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Primal weight vector and offset of a trained detector."""

    weights: np.ndarray
    rho: float
    config: HogConfig
    meta: Dict[str, MetaValue] = field(default_factory=dict)

    def __post_init__(self) -> None:
        weights = np.array(self.weights, dtype=np.float64, copy=True).ravel()
        expected = descriptor_len(self.config)
        if weights.size != expected:
            raise DimensionError(f"weights: length {weights.size} does not match descriptor_len {expected}")
        if not np.all(np.isfinite(weights)):
            raise ConfigError("weights: all weights must be finite")
        if not math.isfinite(self.rho):
            raise ConfigError(f"rho: must be finite, got {self.rho!r}")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "meta", dict(self.meta))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LinearModel):
            return NotImplemented
        return (
            np.array_equal(self.weights, other.weights)
            and self.rho == other.rho
            and self.config == other.config
            and self.meta == other.meta
        )

    def __repr__(self) -> str:
        return f"LinearModel(len={self.weights.size}, rho={self.rho:.6g})"


# ---------------------------------------------------------------------------
# Scoring and losses
# ---------------------------------------------------------------------------


def score(model: LinearModel, x: Descriptor) -> float:
    """Decision value ``w . x - rho``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.weights.shape:
        raise DimensionError(f"descriptor: length {x.size} does not match model length {model.weights.size}")
    return float(np.dot(model.weights, x)) - model.rho


def _stack(samples: Sequence[Sample], length: int) -> Tuple[np.ndarray, np.ndarray]:
    xs = np.empty((len(samples), length), dtype=np.float64)
    ys = np.empty(len(samples), dtype=np.float64)
    for index, (x, label) in enumerate(samples):
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size != length:
            raise TrainingError(f"sample {index}: descriptor length {x.size} does not match {length}")
        if label not in (-1, 1):
            raise TrainingError(f"sample {index}: label must be -1 or +1, got {label!r}")
        xs[index] = x
        ys[index] = label
    return xs, ys


def hinge_loss(model: LinearModel, samples: Sequence[Sample]) -> float:
    """Sum of ``max(0, 1 - y (w . x - rho))`` over the samples."""
    xs, ys = _stack(samples, model.weights.size)
    margins = ys * (xs @ model.weights - model.rho)
    return float(np.maximum(0.0, 1.0 - margins).sum())


def objective(model: LinearModel, samples: Sequence[Sample], C: float) -> float:
    """Regularized training objective ``(1/C) |w|^2 / 2 + hinge``."""
    return float(np.dot(model.weights, model.weights)) / (2.0 * C) + hinge_loss(model, samples)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _best_offset(scores: np.ndarray, ys: np.ndarray) -> float:
    """
    Offset minimizing the summed hinge for fixed weights.

    The hinge is convex and piecewise linear in rho with knots at
    ``s - 1`` (positives) and ``s + 1`` (negatives); the minimizers form an
    interval bounded by knots and the midpoint is returned.
    """
    pos = np.sort(scores[ys > 0] - 1.0)
    neg = np.sort(scores[ys < 0] + 1.0)
    knots = np.concatenate([pos, neg])
    left = np.searchsorted(pos, knots, "left") - (neg.size - np.searchsorted(neg, knots, "left"))
    right = np.searchsorted(pos, knots, "right") - (neg.size - np.searchsorted(neg, knots, "right"))
    flat = knots[(left <= 0) & (right >= 0)]
    return 0.5 * (float(flat.min()) + float(flat.max()))


def train(samples: Sequence[Sample], params: TrainParams, config: HogConfig) -> LinearModel:
    """
    Fit a linear SVM by seeded stochastic subgradient descent.

    Each step shrinks the weights by ``1 - eta * lam`` and, when the sample
    violates the unit margin, adds ``eta * y * x``; ``lam = 1 / (C n)`` and
    ``eta = 1 / (lam (t + step_offset))``. The offset is not regularized: it
    moves by the hinge subgradient only, on descriptors centred at their
    mean, and is finally set to the exact hinge minimizer for the trained
    weights. Identical inputs and seed give a bit-identical model.

    Raises:
        TrainingError: On an empty class or mismatched descriptor lengths.
    """
    length = descriptor_len(config)
    xs, ys = _stack(samples, length)
    positives = int((ys > 0).sum())
    negatives = int((ys < 0).sum())
    if positives == 0:
        raise TrainingError("positives: class is empty, need at least one +1 sample")
    if negatives == 0:
        raise TrainingError("negatives: class is empty, need at least one -1 sample")

    n = len(samples)
    lam = 1.0 / (params.C * n)
    augmented = np.hstack([xs - xs.mean(axis=0), -np.ones((n, 1))])
    u = np.zeros(length + 1, dtype=np.float64)
    rng = np.random.default_rng(params.seed)

    t = 0
    for epoch in range(params.epochs):
        violations = 0
        for i in rng.permutation(n):
            eta = 1.0 / (lam * (t + params.step_offset))
            z = augmented[i]
            margin = ys[i] * float(np.dot(z, u))
            u[:-1] *= 1.0 - eta * lam
            if margin < 1.0:
                u += (eta * ys[i]) * z
                violations += 1
            t += 1
        logger.debug("epoch %d/%d: %d margin violations", epoch + 1, params.epochs, violations)

    weights = u[:-1]
    model = LinearModel(weights=weights, rho=_best_offset(xs @ weights, ys), config=config)
    hinge = hinge_loss(model, samples)
    meta: Dict[str, MetaValue] = {
        "positives": positives,
        "negatives": negatives,
        "C": params.C,
        "epochs": params.epochs,
        "step_offset": params.step_offset,
        "seed": params.seed,
        "final_hinge": hinge,
        "final_objective": float(np.dot(model.weights, model.weights)) / (2.0 * params.C) + hinge,
    }
    logger.debug("trained on %d positives / %d negatives, hinge %.6g", positives, negatives, hinge)
    return LinearModel(weights=model.weights, rho=model.rho, config=config, meta=meta)


def descriptors_for(images: Iterable[Image], config: HogConfig) -> List[Descriptor]:
    """
    Window descriptors of training crops.

    Crops that are not window-sized are resized to the window first.
    """
    out: List[Descriptor] = []
    for img in images:
        gray: GrayImage = as_gray(img)
        if gray.size != (config.window_width, config.window_height):
            logger.debug("resizing %dx%d crop to the window", gray.width, gray.height)
            gray = resize_bilinear(gray, config.window_width, config.window_height)
        grad = compute_gradient(preprocess(gray, config), config.gradient_filter)
        out.append(window_descriptor(grad, (0, 0), config))
    return out


def labeled(positives: Iterable[Descriptor], negatives: Iterable[Descriptor]) -> List[Sample]:
    """Pair descriptors with +1 / -1 labels, positives first."""
    return [(x, 1) for x in positives] + [(x, -1) for x in negatives]


def sample_negative_windows(
    images: Iterable[Image], config: HogConfig, per_image: int = 10, seed: int = 42
) -> List[GrayImage]:
    """
    Window-sized negative crops.

    Window-sized images are used as they are; larger images contribute
    per_image windows at seeded random positions; smaller ones are skipped.
    """
    if seed < 0:
        raise ParameterError(f"seed: must be >= 0, got {seed!r}")
    rng = np.random.default_rng(seed)
    ww, wh = config.window_width, config.window_height
    crops: List[GrayImage] = []
    for img in images:
        gray = as_gray(img)
        if gray.size == (ww, wh):
            crops.append(gray)
            continue
        if gray.width < ww or gray.height < wh:
            logger.warning("skipping %dx%d negative image: smaller than the window", gray.width, gray.height)
            continue
        for _ in range(per_image):
            x = int(rng.integers(0, gray.width - ww + 1))
            y = int(rng.integers(0, gray.height - wh + 1))
            crops.append(GrayImage(gray.pixels[y : y + wh, x : x + ww]))
    logger.debug("sampled %d negative windows", len(crops))
    return crops


@dataclass
class TrainingSet:
    """Raw window crops a model can be (re)trained from under any geometry."""

    positives: List[GrayImage]
    negatives: List[GrayImage]


def fit(training: TrainingSet, config: HogConfig, params: TrainParams) -> LinearModel:
    """Extract descriptors for config and train a model on them."""
    if not training.positives:
        raise TrainingError("positives: class is empty, no positive crops found")
    if not training.negatives:
        raise TrainingError("negatives: class is empty, no negative windows found")
    samples = labeled(descriptors_for(training.positives, config), descriptors_for(training.negatives, config))
    return train(samples, params, config)


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------


def _format_meta(value: MetaValue) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return kv.format_exact(value)
    return json.dumps(str(value))


def _parse_meta(key: str, text: str) -> MetaValue:
    """Quoted values are strings; bare ones are read as int, then float, then kept as text."""
    if text.startswith('"'):
        try:
            return str(json.loads(text))
        except ValueError as exc:
            raise ModelFormatError(f"meta.{key}: malformed quoted value {text!r}") from exc
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def save_model(model: LinearModel) -> bytes:
    """Serialize to the line-oriented ``hogscan-model v1`` text format."""
    pairs = list(model.config.to_pairs())
    pairs += [(f"meta.{key}", _format_meta(value)) for key, value in model.meta.items()]
    pairs.append(("rho", kv.format_exact(model.rho)))
    pairs.append(("weights", str(model.weights.size)))
    body = "".join(f"{kv.format_exact(w)}\n" for w in model.weights)
    return (MODEL_HEADER + "\n" + kv.format_key_values(pairs) + body).encode("utf-8")


def load_model(data: bytes) -> LinearModel:
    """
    Parse a model file produced by save_model (or written by hand).

    Raises:
        ModelFormatError: Naming the field that is missing or inconsistent.
    """
    try:
        lines = bytes(data).decode("utf-8").splitlines()
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"header: model file is not UTF-8 text ({exc})") from exc

    if not lines or lines[0].strip() != MODEL_HEADER:
        found = lines[0].strip() if lines else ""
        if found.startswith(_MODEL_MAGIC):
            raise ModelFormatError(f"version: unsupported model version {found!r}, expected {MODEL_HEADER!r}")
        raise ModelFormatError(f"header: expected {MODEL_HEADER!r}, got {found!r}")

    end = next((i for i, line in enumerate(lines) if line.split("=", 1)[0].strip() == "weights"), None)
    if end is None:
        raise ModelFormatError("weights: missing 'weights = <n>' line")
    try:
        values = kv.parse_key_values("\n".join(lines[1 : end + 1]), source="model")
    except ConfigError as exc:
        raise ModelFormatError(str(exc)) from exc

    meta: Dict[str, MetaValue] = {}
    config_values: Dict[str, str] = {}
    for key, value in values.items():
        if key.startswith("meta."):
            name = key[len("meta.") :]
            meta[name] = _parse_meta(name, value)
        elif key in _CONFIG_KEYS:
            config_values[key] = value
        elif key not in ("rho", "weights"):
            raise ModelFormatError(f"{key}: unknown key in model file")

    for key in _GEOMETRY_KEYS:
        if key not in config_values:
            raise ModelFormatError(f"{key}: missing from model config block")
    if "rho" not in values:
        raise ModelFormatError("rho: missing 'rho = <value>' line")

    try:
        config = HogConfig.from_mapping(config_values)
        rho = kv.parse_float("rho", values["rho"])
        count = kv.parse_int("weights", values["weights"])
    except ConfigError as exc:
        raise ModelFormatError(str(exc)) from exc

    expected = descriptor_len(config)
    if count != expected:
        raise ModelFormatError(f"weights: count {count} does not match descriptor_len(config) = {expected}")

    raw = [line.strip() for line in lines[end + 1 :]]
    while raw and not raw[-1]:
        raw.pop()
    if len(raw) != count:
        raise ModelFormatError(f"weights: declared {count} values, found {len(raw)}")
    try:
        weights = np.array([float(text) for text in raw], dtype=np.float64)
    except ValueError as exc:
        raise ModelFormatError(f"weights: {exc}") from exc

    try:
        return LinearModel(weights=weights, rho=rho, config=config, meta=meta)
    except (ConfigError, DimensionError) as exc:
        raise ModelFormatError(str(exc)) from exc


def write_model(path: Union[str, Path], model: LinearModel) -> None:
    Path(path).write_bytes(save_model(model))


def read_model(path: Union[str, Path]) -> LinearModel:
    return load_model(Path(path).read_bytes())
